// Command-line front end: synth, train, evaluate, sweep-k.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cips/commands.hpp"
#include "cips/config.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::size_t> k;
  std::optional<std::string> out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "flat key = value config file");
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_option("--variant", o.variant, "model variant")
      ->check(CLI::IsMember({"mf", "wmf", "relmf", "cips"}));
  cmd->add_option("--k", o.k, "number of user clusters");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--set", o.sets, "extra key=value override (repeatable)");
}

cips::RunConfig build_config(const Overrides& o) {
  auto config = o.config_path.empty() ? cips::RunConfig{} : cips::RunConfig::load(o.config_path);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + kv);
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) {
    config.set("seed", std::to_string(*o.seed));
    config.set("seeds", "");
  }
  if (o.variant) config.set("variant", *o.variant);
  if (o.k) config.set("k", std::to_string(*o.k));
  if (o.out) config.set("out", *o.out);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustered inverse-propensity recommender training and evaluation"};
  app.require_subcommand(1);

  Overrides overrides;
  auto* synth = app.add_subcommand("synth", "generate a synthetic MNAR world");
  auto* train = app.add_subcommand("train", "train a model variant");
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the MAR test set");
  auto* sweep = app.add_subcommand("sweep-k", "train and evaluate cips over a list of K");
  for (auto* cmd : {synth, train, evaluate, sweep}) add_common(cmd, overrides);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = build_config(overrides);
    if (synth->parsed()) {
      cips::cmd_synth(config, std::cout);
    } else if (train->parsed()) {
      cips::cmd_train(config, std::cout);
    } else if (evaluate->parsed()) {
      cips::cmd_evaluate(config, std::cout);
    } else if (sweep->parsed()) {
      cips::cmd_sweep_k(config, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
