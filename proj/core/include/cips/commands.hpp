#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cips/config.hpp"
#include "cips/eval.hpp"

namespace cips {

// Each command reads a RunConfig, writes its files under `out`, logs a short
// summary to `log`, and throws on any error. Outputs are byte-identical for
// identical inputs and seeds.

struct SynthSummary {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t train_records = 0;
  std::size_t test_records = 0;
  std::size_t nonempty_clusters = 0;
};

/// Writes train.txt, test.txt, truth_items.txt and truth_users.txt.
SynthSummary cmd_synth(const RunConfig& config, std::ostream& log);

/// Trains the configured variant once per seed. Writes
/// <variant>_seed<s>.ckpt and <variant>_seed<s>_train.csv (validation SNIPS
/// per epoch); cips runs also write <variant>_seed<s>_propensity.txt.
EvalReport cmd_train(const RunConfig& config, std::ostream& log);

/// Evaluates a checkpoint on the MAR test split; writes
/// <variant>_seed<s>_eval.csv with metric x cutoff x segment rows.
EvalReport cmd_evaluate(const RunConfig& config, std::ostream& log);

/// Trains and evaluates cips for every K in k_list; writes cips_k<K>_seed<s>.ckpt
/// and sweep_k_seed<s>.csv. K larger than the user count is skipped.
EvalReport cmd_sweep_k(const RunConfig& config, std::ostream& log);

/// Dataset as every command sees it: rating logs loaded, then split with the
/// seed's split stream.
InteractionDataset load_split_dataset(const RunConfig& config, std::uint64_t seed);

}  // namespace cips
