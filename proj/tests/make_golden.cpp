// Writes the golden files under tests/golden/ from the naive oracle.
// Run manually after an intentional change to the fixtures:
//   ./build/tests/make_golden

#include <fstream>
#include <iostream>
#include <random>

#include "oracle.hpp"
#include "sia/sia.hpp"

namespace {

using nlohmann::json;

json grid_json(const oracle::Grid& g) { return g; }

json matrix_json(const sia::Matrix& m) { return oracle::grid(m); }

void write(const std::string& name, const json& j) {
  std::ofstream(std::string(SIA_GOLDEN_DIR) + "/" + name) << j.dump(1) << '\n';
  std::cout << "wrote " << name << '\n';
}

sia::DialogueExample she_fixture() {
  const sia::DependencyTree she{{{1, "she", 2, "nsubj"}, {2, "eats", 0, "root"}, {3, "apples", 2, "obj"}}};
  const sia::DependencyTree resp{{{1, "she", 2, "nsubj"}, {2, "likes", 0, "root"}, {3, "them", 2, "obj"}}};
  return {{she, {{{1, "ok", 0, "root"}}}}, resp, 1};
}

}  // namespace

int main() {
  std::mt19937_64 rng(20240601);
  const auto ex = she_fixture();
  write("fixture_dialogue.json", sia::dialogues_to_json({ex}));

  // Intra mask of the single-utterance fixture (context she/eats/apples, response "ok").
  const sia::DialogueExample she_only{{ex.context[0]}, {{{1, "ok", 0, "root"}}}, 1};
  write("she_dialogue.json", sia::dialogues_to_json({she_only}));
  const auto intra = oracle::mask(she_only, 0, 1);
  write("she_intra_mask.json",
        {{"n", intra.size()}, {"rows", intra}, {"kind", "intra"}, {"m", nullptr}});

  // SIA block on the fixture with m = 3.
  {
    const std::size_t dim = 4;
    const std::size_t heads = 2;
    const std::size_t n = oracle::layout(ex).size();
    const auto input = oracle::random_matrix(rng, n, dim);
    json layers = json::array();
    sia::SiaBlockParams p = sia::SiaBlockParams::zeros(dim);
    for (auto& layer : p.layers) {
      json lj;
      sia::MultiHeadParams::visit(layer.attn, [&](const std::string& name, sia::Matrix& m) {
        m = oracle::random_matrix(rng, m.rows(), m.cols(), -0.8, 0.8);
        lj[name] = matrix_json(m);
      });
      layer.ln_gamma = oracle::random_matrix(rng, 1, dim, 0.5, 1.5);
      layer.ln_beta = oracle::random_matrix(rng, 1, dim, -0.2, 0.2);
      lj["ln_gamma"] = matrix_json(layer.ln_gamma);
      lj["ln_beta"] = matrix_json(layer.ln_beta);
      layers.push_back(lj);
    }
    const auto expected = oracle::sia_block(oracle::grid(input), p, oracle::mask(ex, 2, 3), heads, 0);
    write("sia_block_m3.json", {{"m", 3},
                                {"dim", dim},
                                {"heads", heads},
                                {"dialogue", sia::dialogues_to_json({ex})[0]},
                                {"input", matrix_json(input)},
                                {"layers", layers},
                                {"expected", grid_json(expected)}});
  }

  // Fixture checkpoint and its attention dump.
  {
    sia::ModelConfig c;
    c.dim = 4;
    c.heads = 2;
    c.layers = 2;
    c.ffn_dim = 8;
    c.max_len = 16;
    c.m = 3;
    auto params = sia::init_model(c, sia::Vocabulary::from_examples({ex}), 77);
    write("fixture_checkpoint.json", sia::checkpoint_to_json(params));
    const auto r = oracle::forward(params, ex);
    write("inspect_dump.json", {{"score", r.score},
                                {"sia_weights", {{grid_json(r.sia_weights[0][0]), grid_json(r.sia_weights[0][1])},
                                                 {grid_json(r.sia_weights[1][0]), grid_json(r.sia_weights[1][1])}}},
                                {"backbone_weights", {{grid_json(r.backbone_weights[0][0]),
                                                       grid_json(r.backbone_weights[0][1])}}}});
  }
  return 0;
}
