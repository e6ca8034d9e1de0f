// Writes seeded synthetic keyword-linked datasets for the sia CLI.

#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sia/conllu.hpp"
#include "sia/dialogue.hpp"
#include "sia/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate synthetic keyword-linked dialogue data"};
  app.require_subcommand(1);
  std::size_t count = 200;
  std::size_t candidates = 2;
  std::uint64_t seed = 1;
  std::size_t topics = 4;
  std::string output;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--count", count, "Number of records")->capture_default_str();
    sub->add_option("--seed", seed, "Random seed")->capture_default_str();
    sub->add_option("--topics", topics, "Number of keyword topics")->capture_default_str();
    sub->add_option("-o,--output", output, "Output path")->required();
  };
  auto* dialogues = app.add_subcommand("dialogues", "Positive dialogues (label 1)");
  common(dialogues);
  auto* labeled = app.add_subcommand("labeled", "One positive and one negative per context");
  common(labeled);
  auto* eval = app.add_subcommand("eval", "Contexts with candidate pools");
  common(eval);
  eval->add_option("--candidates", candidates, "Candidates per context")->capture_default_str();
  auto* conllu = app.add_subcommand("conllu", "Random utterances as CoNLL-U");
  common(conllu);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 64;
  }

  try {
    sia::SyntheticOptions opts;
    opts.topics = topics;
    std::string text;
    if (dialogues->parsed()) {
      text = sia::dialogues_to_json(sia::generate_dialogues(count, seed, opts)).dump() + "\n";
    } else if (labeled->parsed()) {
      text = sia::dialogues_to_json(sia::generate_labeled_dialogues(count, seed, opts)).dump() + "\n";
    } else if (eval->parsed()) {
      text = sia::eval_cases_to_json(sia::generate_eval_cases(count, candidates, seed, opts)).dump() +
             "\n";
    } else {
      std::vector<sia::DependencyTree> trees;
      for (const auto& ex : sia::generate_dialogues(count, seed, opts)) trees.push_back(ex.response);
      text = sia::serialize_conllu(trees);
    }
    std::ofstream out(output, std::ios::binary);
    if (!out) {
      std::cerr << "error: cannot write '" << output << "'\n";
      return 1;
    }
    out << text;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
