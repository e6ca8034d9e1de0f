#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "sia/attention.hpp"

namespace {

using sia::AttentionConfig;
using sia::AttentionMask;
using sia::Matrix;
using sia::MaskMode;

AttentionMask mask_from_rows(const std::vector<std::vector<int>>& rows) {
  AttentionMask m(rows.size(), sia::MaskKind::sia);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) m.set(i, j, rows[i][j] != 0);
  }
  return m;
}

oracle::BoolGrid bool_grid(const AttentionMask& m) {
  oracle::BoolGrid g(m.size(), std::vector<int>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) g[i][j] = m(i, j);
  }
  return g;
}

AttentionMask random_mask(std::mt19937_64& rng, std::size_t n, double density) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AttentionMask m(n, sia::MaskKind::sia);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m.set(i, j, u(rng) < density);
  }
  return m;
}

sia::MultiHeadParams random_mh(std::mt19937_64& rng, std::size_t d) {
  auto p = sia::MultiHeadParams::zeros(d);
  sia::MultiHeadParams::visit(p, [&](const std::string&, Matrix& m) {
    m = oracle::random_matrix(rng, m.rows(), m.cols());
  });
  return p;
}

// she/eats/apples rows of the m = 3 SIA mask.
const std::vector<std::vector<int>> kSheSia{{1, 1, 0}, {1, 1, 1}, {0, 1, 1}};

TEST(MaskedAttention, EqualLogitsSplitOverAllowedKeys) {
  const Matrix q(3, 2, 0.3);
  const Matrix k(3, 2, 0.7);
  const auto w = sia::attention_weights(q, k, mask_from_rows({{1, 1, 0}, {1, 1, 1}, {1, 1, 1}}),
                                        MaskMode::additive);
  EXPECT_DOUBLE_EQ(w(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(w(0, 1), 0.5);
  EXPECT_EQ(w(0, 2), 0.0);
}

TEST(MaskedAttention, AllOnesMaskIsNoOp) {
  std::mt19937_64 rng(1);
  const auto q = oracle::random_matrix(rng, 5, 3);
  const auto k = oracle::random_matrix(rng, 5, 3);
  const auto v = oracle::random_matrix(rng, 5, 3);
  const auto ones = AttentionMask::all_ones(5);
  EXPECT_LE(sia::max_abs_diff(sia::masked_attention(q, k, v, ones, MaskMode::additive),
                              sia::masked_attention(q, k, v, ones, MaskMode::none)),
            1e-12);
}

TEST(MaskedAttention, IdentityFixtureMatchesHandSoftmax) {
  const Matrix eye = Matrix::identity(3);
  const auto mask = mask_from_rows(kSheSia);
  const auto out = sia::masked_attention(eye, eye, eye, mask, MaskMode::additive);
  // Row softmax over allowed keys, logits 1/sqrt(3) on the diagonal, 0 elsewhere.
  const double e = std::exp(1.0 / std::sqrt(3.0));
  const double expected[3][3] = {{e / (e + 1), 1 / (e + 1), 0},
                                 {1 / (e + 2), e / (e + 2), 1 / (e + 2)},
                                 {0, 1 / (e + 1), e / (e + 1)}};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(out(i, j), expected[i][j], 1e-15);
  }
  const auto [w, o] = oracle::attention(oracle::grid(eye), oracle::grid(eye), oracle::grid(eye),
                                        bool_grid(mask), 0);
  EXPECT_LE(oracle::max_abs_diff(o, out), 1e-15);
}

TEST(MaskedAttention, DiagonalOnlyRowCollapsesToSelf) {
  std::mt19937_64 rng(5);
  const auto q = oracle::random_matrix(rng, 4, 2);
  const auto k = oracle::random_matrix(rng, 4, 2);
  const auto v = oracle::random_matrix(rng, 4, 2);
  auto mask = AttentionMask::all_ones(4);
  for (std::size_t j = 0; j < 4; ++j) mask.set(2, j, j == 2);
  for (std::size_t j = 0; j < 4; ++j) mask.set(3, j, false);  // empty row falls back to diagonal
  const auto out = sia::masked_attention(q, k, v, mask, MaskMode::additive);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(out(2, c), v(2, c));
    EXPECT_EQ(out(3, c), v(3, c));
  }
}

TEST(MaskedAttention, MultiplicativeModeIsLiteralProduct) {
  const Matrix eye = Matrix::identity(3);
  const auto w = sia::attention_weights(eye, eye, mask_from_rows(kSheSia), MaskMode::multiplicative);
  // Blocked cells get logit 0, identical to the off-diagonal allowed cells here.
  EXPECT_GT(w(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(w(0, 2), w(0, 1));
}

TEST(MaskedAttention, RandomInstancesMatchContractAndOracle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 10;
    const std::size_t d = 1 + rng() % 5;
    const auto q = oracle::random_matrix(rng, n, d, -3, 3);
    const auto k = oracle::random_matrix(rng, n, d, -3, 3);
    const auto v = oracle::random_matrix(rng, n, d);
    const auto mask = random_mask(rng, n, 0.5);
    for (MaskMode mode : {MaskMode::additive, MaskMode::multiplicative}) {
      sia::AttentionTrace trace;
      const auto out = sia::masked_attention(q, k, v, mask, mode, &trace);
      const auto& w = trace.weights.at(0);
      const auto [ow, oo] = oracle::attention(oracle::grid(q), oracle::grid(k), oracle::grid(v),
                                              bool_grid(mask), mode == MaskMode::additive ? 0 : 1);
      ASSERT_LE(oracle::max_abs_diff(oo, out), 1e-10);
      ASSERT_LE(oracle::max_abs_diff(ow, w), 1e-10);
      for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        double blocked = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          sum += w(i, j);
          const bool allowed = mask.row_empty(i) ? i == j : mask(i, j);
          if (!allowed) blocked += w(i, j);
        }
        ASSERT_NEAR(sum, 1.0, 1e-9);
        if (mode == MaskMode::additive) {
          ASSERT_LE(blocked, 1e-12);
        }
      }
    }
  }
}

TEST(MaskedAttention, RejectsShapeMismatch) {
  const Matrix a(3, 2);
  EXPECT_THROW(sia::masked_attention(a, Matrix(3, 3), a, AttentionMask::all_ones(3), MaskMode::additive),
               sia::ShapeError);
  EXPECT_THROW(sia::masked_attention(a, a, Matrix(2, 2), AttentionMask::all_ones(3), MaskMode::additive),
               sia::ShapeError);
  EXPECT_THROW(sia::masked_attention(a, a, a, AttentionMask::all_ones(4), MaskMode::additive),
               sia::ShapeError);
  EXPECT_THROW(sia::masked_attention(a, a, a, AttentionMask::all_ones(3), AttentionConfig{4, 1}),
               sia::ShapeError);
}

TEST(MultiHead, SingleHeadIsProjectedAttention) {
  std::mt19937_64 rng(11);
  const auto x = oracle::random_matrix(rng, 4, 3);
  const auto p = random_mh(rng, 3);
  const auto mask = mask_from_rows({{1, 0, 0, 1}, {1, 1, 0, 0}, {0, 1, 1, 0}, {1, 1, 1, 1}});
  const AttentionConfig cfg{3, 1, MaskMode::additive};
  auto proj = [&](const Matrix& w, const Matrix& b) {
    Matrix r = sia::matmul(x, w);
    for (std::size_t i = 0; i < r.rows(); ++i) {
      for (std::size_t j = 0; j < r.cols(); ++j) r(i, j) += b(0, j);
    }
    return r;
  };
  Matrix expected = sia::matmul(
      sia::masked_attention(proj(p.wq, p.bq), proj(p.wk, p.bk), proj(p.wv, p.bv), mask, cfg), p.wo);
  for (std::size_t i = 0; i < expected.rows(); ++i) {
    for (std::size_t j = 0; j < expected.cols(); ++j) expected(i, j) += p.bo(0, j);
  }
  EXPECT_LE(sia::max_abs_diff(sia::multi_head(x, p, mask, cfg), expected), 1e-14);
}

TEST(MultiHead, HeadPermutationSymmetry) {
  std::mt19937_64 rng(12);
  const std::size_t d = 4;
  const auto x = oracle::random_matrix(rng, 5, d);
  const auto p = random_mh(rng, d);
  const auto mask = random_mask(rng, 5, 0.6);
  const AttentionConfig cfg{d, 2, MaskMode::additive};
  // Swap head blocks: columns [0,2) <-> [2,4) of wq/wk/wv/b*, rows of wo.
  auto swapped = p;
  auto swap_cols = [](Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < 2; ++j) std::swap(m(i, j), m(i, j + 2));
    }
  };
  for (Matrix* m : {&swapped.wq, &swapped.wk, &swapped.wv, &swapped.bq, &swapped.bk, &swapped.bv}) {
    swap_cols(*m);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < d; ++j) std::swap(swapped.wo(i, j), swapped.wo(i + 2, j));
  }
  EXPECT_LE(sia::max_abs_diff(sia::multi_head(x, p, mask, cfg), sia::multi_head(x, swapped, mask, cfg)),
            1e-14);
}

TEST(MultiHead, TwoHeadsMatchScalarOracle) {
  std::mt19937_64 rng(13);
  const auto x = oracle::random_matrix(rng, 3, 4);
  const auto p = random_mh(rng, 4);
  const auto mask = mask_from_rows(kSheSia);
  const AttentionConfig cfg{4, 2, MaskMode::additive};
  const auto expected = oracle::multi_head(oracle::grid(x), p, bool_grid(mask), 2, 0);
  EXPECT_LE(oracle::max_abs_diff(expected, sia::multi_head(x, p, mask, cfg)), 1e-10);
}

TEST(MultiHead, RejectsBadShapes) {
  auto p = sia::MultiHeadParams::zeros(4);
  EXPECT_THROW(sia::multi_head(Matrix(3, 3), p, AttentionMask::all_ones(3), {4, 2}), sia::ShapeError);
  EXPECT_THROW(sia::multi_head(Matrix(3, 4), p, AttentionMask::all_ones(3), {4, 3}), sia::ArgumentError);
}

TEST(SiaBlock, ZeroInputZeroProjections) {
  const AttentionConfig cfg{4, 2, MaskMode::additive};
  const auto out = sia::sia_block(Matrix(5, 4), AttentionMask::all_ones(5), sia::SiaBlockParams::zeros(4), cfg);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(SiaBlock, AllOnesMaskEqualsUnmaskedBlock) {
  std::mt19937_64 rng(17);
  auto p = sia::SiaBlockParams::zeros(4);
  for (auto& layer : p.layers) layer.attn = random_mh(rng, 4);
  const auto h = oracle::random_matrix(rng, 6, 4);
  const auto masked = sia::sia_block(h, AttentionMask::all_ones(6), p, {4, 2, MaskMode::additive});
  const auto plain = sia::sia_block(h, AttentionMask::all_ones(6), p, {4, 2, MaskMode::none});
  EXPECT_LE(sia::max_abs_diff(masked, plain), 1e-12);
}

TEST(SiaBlock, MatchesGoldenFile) {
  const auto j = nlohmann::json::parse(sia::detail::read_file(SIA_GOLDEN_DIR "/sia_block_m3.json"));
  const auto ex = sia::parse_dialogues("[" + j.at("dialogue").dump() + "]").at(0);
  const std::size_t dim = j.at("dim");
  auto to_matrix = [](const nlohmann::json& rows) {
    Matrix m(rows.size(), rows.at(0).size());
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t c = 0; c < m.cols(); ++c) m(i, c) = rows[i][c].get<double>();
    }
    return m;
  };
  auto p = sia::SiaBlockParams::zeros(dim);
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& lj = j.at("layers")[l];
    sia::MultiHeadParams::visit(p.layers[l].attn,
                                [&](const std::string& name, Matrix& m) { m = to_matrix(lj.at(name)); });
    p.layers[l].ln_gamma = to_matrix(lj.at("ln_gamma"));
    p.layers[l].ln_beta = to_matrix(lj.at("ln_beta"));
  }
  const auto mask = sia::sia_mask(sia::assemble(ex), j.at("m").get<int>());
  const auto out = sia::sia_block(to_matrix(j.at("input")), mask, p, {dim, j.at("heads"), MaskMode::additive});
  EXPECT_LE(sia::max_abs_diff(out, to_matrix(j.at("expected"))), 1e-10);
}

TEST(SiaBlock, Deterministic) {
  std::mt19937_64 rng(19);
  auto p = sia::SiaBlockParams::zeros(4);
  for (auto& layer : p.layers) layer.attn = random_mh(rng, 4);
  const auto h = oracle::random_matrix(rng, 7, 4);
  const auto mask = random_mask(rng, 7, 0.4);
  const AttentionConfig cfg{4, 2, MaskMode::additive};
  EXPECT_EQ(sia::sia_block(h, mask, p, cfg), sia::sia_block(h, mask, p, cfg));
  EXPECT_EQ(sia::sia_block(h, mask, p, cfg).rows(), 7u);
  EXPECT_EQ(sia::sia_block(h, mask, p, cfg).cols(), 4u);
}

TEST(Fuse, ElementwiseSum) {
  std::mt19937_64 rng(23);
  const auto a = oracle::random_matrix(rng, 3, 4);
  const auto b = oracle::random_matrix(rng, 3, 4);
  EXPECT_EQ(sia::fuse(a, Matrix(3, 4)), a);
  EXPECT_EQ(sia::fuse(a, b), sia::fuse(b, a));
  const auto s = sia::fuse(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(s(i, j), a(i, j) + b(i, j));
  }
  EXPECT_THROW(sia::fuse(a, Matrix(4, 3)), sia::ShapeError);
}

}  // namespace
