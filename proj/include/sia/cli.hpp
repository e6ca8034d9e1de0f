#pragma once

// Command-line front end: parse, mask, train, evaluate, inspect-attention.
//
// Exit codes: 0 success, 1 data error, 2 numerical failure, 64 usage error.
// SIA_LOG (0 quiet, 1 info, 2 debug) controls progress output on stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sia/dialogue.hpp"
#include "sia/evaluate.hpp"
#include "sia/mask.hpp"
#include "sia/model.hpp"

namespace sia::cli {

enum ExitCode : int { kOk = 0, kDataError = 1, kNumericError = 2, kUsage = 64 };

class UsageError : public Error {
 public:
  using Error::Error;
};

inline int log_level() {
  const char* v = std::getenv("SIA_LOG");
  if (v == nullptr || *v == '\0') return 0;
  const std::string s(v);
  if (s == "debug" || s == "2") return 2;
  if (s == "info" || s == "1") return 1;
  return 0;
}

inline std::string format_double(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

inline void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path + "'");
  f << text;
}

inline std::string heatmap_ascii(const Matrix& w, const std::vector<std::string>& labels,
                                 const std::string& title) {
  static const char* shades[] = {"░", "▒", "▓", "█"};
  std::ostringstream o;
  o << title << '\n';
  for (std::size_t i = 0; i < w.rows(); ++i) {
    std::string label = labels[i].size() > 12 ? labels[i].substr(0, 12) : labels[i];
    o << std::setw(3) << i << ' ' << label << std::string(13 - label.size(), ' ');
    double row_max = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) row_max = std::max(row_max, w(i, j));
    // Shades are relative to the row maximum; exact zeros print as blocked.
    for (std::size_t j = 0; j < w.cols(); ++j) {
      const double v = w(i, j);
      if (v == 0.0) {
        o << "·";
      } else {
        o << shades[std::min<std::size_t>(3, static_cast<std::size_t>(v / row_max * 4.0))];
      }
    }
    o << '\n';
  }
  return o.str();
}

inline nlohmann::json matrix_rows(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  }
  return rows;
}

struct ModelFlags {
  int m = 4;
  std::string mask_mode = "additive";
  std::string mask_kind = "sia";
  std::string special = "unmasked";
  std::size_t tap_layer = 0;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t dim = 16;
  std::size_t ffn_dim = 0;
  std::size_t max_len = 64;
  std::size_t epochs = 100;
  double lr = 0.05;
  std::uint64_t seed = 1;
  std::size_t batch_size = 8;
  std::size_t negatives = 0;
  bool no_sia = false;
  bool freeze = false;
};

inline SpecialTokenPolicy special_from_string(const std::string& s) {
  if (s == "unmasked") return SpecialTokenPolicy::unmasked;
  if (s == "diagonal") return SpecialTokenPolicy::diagonal_only;
  throw UsageError("unknown special-token policy '" + s + "'");
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Syntax-informed attention for multi-turn response selection"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string input, output, checkpoint, dataset, loss_csv;
  std::size_t index = 0;
  int layer = 1;
  std::size_t head = 0;
  std::optional<std::size_t> backbone_layer;
  std::string format = "json";
  ModelFlags f;

  auto add_mask_flags = [&](CLI::App* sub) {
    sub->add_option("--m", f.m, "Inter-mask depth-sum bound")->capture_default_str();
    sub->add_option("--mask-kind,--kind", f.mask_kind, "intra | inter | sia")
        ->check(CLI::IsMember({"intra", "inter", "sia"}))
        ->capture_default_str();
    sub->add_option("--special", f.special, "Special-token rows/columns: unmasked | diagonal")
        ->check(CLI::IsMember({"unmasked", "diagonal"}))
        ->capture_default_str();
  };
  auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", format, "json | ascii")
        ->check(CLI::IsMember({"json", "ascii"}))
        ->capture_default_str();
  };

  auto* parse = app.add_subcommand("parse", "Convert CoNLL-U to utterance JSON");
  parse->add_option("input", input, "CoNLL-U file")->required();
  parse->add_option("output", output, "Output JSON path (stdout if omitted)");

  auto* mask = app.add_subcommand("mask", "Build an attention mask for one dialogue record");
  mask->add_option("dialogues", input, "Dialogue JSON file")->required();
  mask->add_option("--index", index, "Record index")->capture_default_str();
  mask->add_option("-o,--output", output, "Output path (stdout if omitted)");
  add_mask_flags(mask);
  add_format(mask);

  auto* train_cmd = app.add_subcommand("train", "Train a model on labeled dialogues");
  train_cmd->add_option("dataset", dataset, "Dialogue JSON file")->required();
  train_cmd->add_option("-o,--out", checkpoint, "Checkpoint path")->required();
  train_cmd->add_option("--loss-csv", loss_csv, "Per-epoch loss CSV path");
  add_mask_flags(train_cmd);
  train_cmd->add_option("--mask-mode", f.mask_mode, "additive | multiplicative | none")
      ->check(CLI::IsMember({"additive", "multiplicative", "none"}))
      ->capture_default_str();
  train_cmd->add_option("--tap-layer", f.tap_layer, "Backbone layer feeding the SIA block (0 = middle)");
  train_cmd->add_option("--layers", f.layers, "Encoder layers")->capture_default_str();
  train_cmd->add_option("--heads", f.heads, "Attention heads")->capture_default_str();
  train_cmd->add_option("--dim", f.dim, "Model width")->capture_default_str();
  train_cmd->add_option("--ffn-dim", f.ffn_dim, "Feed-forward width (0 = 2 * dim)");
  train_cmd->add_option("--max-len", f.max_len, "Maximum sequence length")->capture_default_str();
  train_cmd->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--lr", f.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--seed", f.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--batch-size", f.batch_size, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--negatives", f.negatives, "Sampled negatives per positive")
      ->capture_default_str();
  train_cmd->add_flag("--no-sia", f.no_sia, "Disable the syntax-informed branch");
  train_cmd->add_flag("--freeze-below-tap", f.freeze, "Freeze embeddings and layers up to the tap");

  auto* eval_cmd = app.add_subcommand("evaluate", "Rank candidate pools and report metrics");
  eval_cmd->add_option("checkpoint", checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("eval", dataset, "Evaluation JSON file")->required();
  eval_cmd->add_option("-o,--output", output, "Report path (stdout if omitted)");

  auto* inspect = app.add_subcommand("inspect-attention", "Dump attention weights of one head");
  inspect->add_option("checkpoint", checkpoint, "Checkpoint path")->required();
  inspect->add_option("dialogues", input, "Dialogue JSON file")->required();
  inspect->add_option("--index", index, "Record index")->capture_default_str();
  inspect->add_option("--layer", layer, "SIA layer (1 or 2)")->capture_default_str();
  inspect->add_option("--head", head, "Head index")->capture_default_str();
  inspect->add_option("--backbone-layer", backbone_layer,
                      "Also dump this unmasked backbone layer (1-based)");
  inspect->add_option("-o,--output", output, "Output path (stdout if omitted)");
  add_format(inspect);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  const int verbosity = log_level();
  auto info = [&](const std::string& msg) {
    if (verbosity >= 1) err << "[sia] " << msg << '\n';
  };

  try {
    if (f.m < 1) throw UsageError("--m must be >= 1");

    if (parse->parsed()) {
      const auto trees = parse_conllu(detail::read_file(input));
      info("parsed " + std::to_string(trees.size()) + " sentences");
      write_text(output, trees_to_json(trees).dump(2) + "\n", out);
      return kOk;
    }

    if (mask->parsed()) {
      const auto dialogues = load_dialogues(input);
      if (index >= dialogues.size()) {
        throw UsageError("--index " + std::to_string(index) + " out of range (" +
                         std::to_string(dialogues.size()) + " records)");
      }
      const auto seq = assemble(dialogues[index]);
      const auto m = build_mask(seq, mask_kind_from_string(f.mask_kind), f.m,
                                special_from_string(f.special));
      write_text(output, format == "json" ? mask_to_json(m).dump() + "\n"
                                          : render_mask_ascii(m, seq),
                 out);
      return kOk;
    }

    if (train_cmd->parsed()) {
      const auto data = load_dialogues(dataset);
      if (data.empty()) throw DataError("training set is empty");
      ModelConfig mc;
      mc.max_len = f.max_len;
      mc.dim = f.dim;
      mc.heads = f.heads;
      mc.layers = f.layers;
      mc.ffn_dim = f.ffn_dim == 0 ? 2 * f.dim : f.ffn_dim;
      mc.tap_layer = f.tap_layer;
      mc.mask_kind = mask_kind_from_string(f.mask_kind);
      mc.special_tokens = special_from_string(f.special);
      mc.sia_enabled = !f.no_sia;
      TrainConfig tc;
      tc.learning_rate = f.lr;
      tc.epochs = f.epochs;
      tc.seed = f.seed;
      tc.batch_size = f.batch_size;
      tc.m = f.m;
      tc.mask_mode = mask_mode_from_string(f.mask_mode);
      tc.negative_ratio = f.negatives;
      tc.freeze_below_tap = f.freeze;
      try {
        mc.m = tc.m;
        mc.mask_mode = tc.mask_mode;
        mc.validate();
        if (!(tc.learning_rate >= 0.0) || tc.batch_size == 0) {
          throw ArgumentError("--lr must be >= 0 and --batch-size >= 1");
        }
      } catch (const ArgumentError& e) {
        throw UsageError(e.what());
      }
      const auto result = train(data, tc, mc, [&](std::size_t epoch, double l) {
        if (verbosity >= 2 || (verbosity >= 1 && epoch % 10 == 0)) {
          info("epoch " + std::to_string(epoch) + " loss " + format_double(l));
        }
      });
      save_checkpoint(result.params, checkpoint);
      if (!loss_csv.empty()) {
        std::ostringstream csv;
        csv << "epoch,loss\n";
        for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
          csv << e + 1 << ',' << format_double(result.epoch_losses[e]) << '\n';
        }
        write_text(loss_csv, csv.str(), out);
      }
      info("wrote checkpoint " + checkpoint);
      return kOk;
    }

    if (eval_cmd->parsed()) {
      const auto params = load_checkpoint(checkpoint);
      const auto cases = load_eval_cases(dataset);
      const auto report = evaluate(cases, params);
      write_text(output, report_to_json(report).dump(2) + "\n", out);
      return kOk;
    }

    if (inspect->parsed()) {
      const auto params = load_checkpoint(checkpoint);
      const auto dialogues = load_dialogues(input);
      if (index >= dialogues.size()) throw UsageError("--index out of range");
      if (layer < 1 || layer > 2) throw UsageError("--layer must be 1 or 2");
      if (head >= params.config.heads) {
        throw UsageError("--head must be < " + std::to_string(params.config.heads));
      }
      if (backbone_layer && (*backbone_layer < 1 || *backbone_layer > params.config.layers)) {
        throw UsageError("--backbone-layer must be in 1.." + std::to_string(params.config.layers));
      }
      if (!params.config.sia_enabled) throw UsageError("checkpoint has the SIA branch disabled");
      const auto seq = assemble(dialogues[index]);
      const auto in = encode(params, dialogues[index]);
      ForwardTrace trace;
      const double score = forward(params, in, &trace);
      const Matrix& w = trace.sia[static_cast<std::size_t>(layer - 1)].weights[head];
      std::vector<std::string> labels;
      for (std::size_t i = 0; i < seq.size(); ++i) labels.push_back(seq.label(i));

      if (format == "json") {
        nlohmann::json j = {{"layer", layer},
                            {"head", head},
                            {"n", seq.size()},
                            {"labels", labels},
                            {"mask_mode", to_string(params.config.mask_mode)},
                            {"mask", mask_to_json(in.mask)},
                            {"score", score},
                            {"sia_weights", matrix_rows(w)}};
        if (backbone_layer) {
          j["backbone_layer"] = *backbone_layer;
          j["backbone_weights"] = matrix_rows(trace.backbone[*backbone_layer - 1].weights[head]);
        }
        write_text(output, j.dump(2) + "\n", out);
      } else {
        std::string text = heatmap_ascii(
            w, labels, "SIA layer " + std::to_string(layer) + " head " + std::to_string(head));
        if (backbone_layer) {
          text += "\n" + heatmap_ascii(trace.backbone[*backbone_layer - 1].weights[head], labels,
                                       "backbone layer " + std::to_string(*backbone_layer) +
                                           " head " + std::to_string(head) + " (unmasked)");
        }
        write_text(output, text, out);
      }
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace sia::cli
