#include "cips/commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <stdexcept>

#include "cips/checkpoint.hpp"
#include "cips/propensity.hpp"
#include "cips/random.hpp"
#include "cips/recsys.hpp"

namespace cips {

namespace fs = std::filesystem;

namespace {

void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory " + dir.string());
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void require_inputs(const RunConfig& config) {
  for (const auto& p : {config.train_path(), config.test_path()}) {
    if (!fs::is_regular_file(p)) throw std::runtime_error("missing dataset file " + p.string());
  }
}

std::string stem(const std::string& name, std::uint64_t seed) {
  return name + "_seed" + std::to_string(seed);
}

EvalReport history_report(const std::vector<EpochRecord>& history, const std::string& model,
                          std::uint64_t seed) {
  EvalReport report;
  for (const auto& h : history) {
    const auto segment = "validation_iter" + std::to_string(h.iteration) + "_epoch" +
                         std::to_string(h.epoch);
    report.add({model, "SNIPS_DCG", 3, segment, h.snips_dcg3, seed});
    report.add({model, "SNIPS_Accuracy", 0, segment, h.snips_accuracy, seed});
    report.add({model, "TrainLoss", 0, segment, h.train_loss, seed});
  }
  return report;
}

}  // namespace

InteractionDataset load_split_dataset(const RunConfig& config, std::uint64_t seed) {
  auto dataset = load_rating_log(config.train_path(), config.test_path(),
                                 config.get_double("positive_threshold"));
  return split_validation(std::move(dataset), config.get_double("validation_ratio"),
                          derive_seed(seed, Phase::kSplit));
}

SynthSummary cmd_synth(const RunConfig& config, std::ostream& log) {
  const auto synth = config.synthetic();
  const auto out_dir = config.out_dir();
  ensure_out_dir(out_dir);

  const auto world = generate_synthetic(synth);
  {
    auto out = open_out(out_dir / "train.txt");
    write_rating_log(out, world.dataset.train);
  }
  {
    auto out = open_out(out_dir / "test.txt");
    write_rating_log(out, world.dataset.test_mar);
  }
  {
    auto items = open_out(out_dir / "truth_items.txt");
    auto users = open_out(out_dir / "truth_users.txt");
    write_ground_truth(items, users, world.truth);
  }

  SynthSummary summary;
  summary.num_users = world.dataset.num_users;
  summary.num_items = world.dataset.num_items;
  summary.train_records = world.dataset.train.size();
  summary.test_records = world.dataset.test_mar.size();
  summary.nonempty_clusters =
      std::set<std::int32_t>(world.truth.true_cluster.begin(), world.truth.true_cluster.end()).size();
  log << "synth: " << summary.num_users << " users, " << summary.num_items << " items, "
      << summary.train_records << " train records, " << summary.test_records
      << " test records, " << summary.nonempty_clusters << " non-empty clusters -> "
      << out_dir.string() << '\n';
  return summary;
}

EvalReport cmd_train(const RunConfig& config, std::ostream& log) {
  const auto variant = config.variant();
  const auto seeds = config.seeds();
  const auto out_dir = config.out_dir();
  require_inputs(config);
  for (auto seed : seeds) config.train(seed);  // validate before any training
  ensure_out_dir(out_dir);

  EvalReport all;
  for (auto seed : seeds) {
    const auto dataset = load_split_dataset(config, seed);
    const auto train_config = config.train(seed);
    const auto name = stem(to_string(variant), seed);
    EvalReport report;
    if (variant == ModelVariant::kCips) {
      CipsResult result;
      try {
        result = train_cips(dataset, train_config);
      } catch (const std::exception& e) {
        throw std::runtime_error(std::string("train (cips): ") + e.what());
      }
      save_rec_model(out_dir / (name + ".ckpt"), result.model, &result.clusters);
      auto props = open_out(out_dir / (name + "_propensity.txt"));
      write_propensity_table(props, result.propensities);
      report = history_report(result.history, to_string(variant), seed);
      log << "train: cips seed " << seed << ", " << result.iterations_run
          << " outer iteration(s), best " << result.best_iteration << ", "
          << result.propensities.num_rows() << " strata\n";
    } else {
      TrainResult result;
      try {
        result = train_baseline(dataset, variant, train_config);
      } catch (const std::exception& e) {
        throw std::runtime_error(std::string("train (") + to_string(variant) + "): " + e.what());
      }
      save_rec_model(out_dir / (name + ".ckpt"), result.model);
      report = history_report(result.history, to_string(variant), seed);
      log << "train: " << to_string(variant) << " seed " << seed << ", best epoch "
          << result.best_epoch << '\n';
    }
    auto out = open_out(out_dir / (name + "_train.csv"));
    report.write_csv(out);
    all.append(report);
  }
  return all;
}

EvalReport cmd_evaluate(const RunConfig& config, std::ostream& log) {
  const auto variant = config.variant();
  const auto out_dir = config.out_dir();
  require_inputs(config);
  const auto segments = config.segments();

  EvalReport all;
  for (auto seed : config.seeds()) {
    const auto name = stem(to_string(variant), seed);
    const fs::path checkpoint = config.get("checkpoint").empty()
                                    ? out_dir / (name + ".ckpt")
                                    : fs::path(config.get("checkpoint"));
    auto loaded = load_rec_model(checkpoint);
    if (loaded.model.variant != variant) {
      throw std::runtime_error("evaluate: checkpoint " + checkpoint.string() + " holds a " +
                               to_string(loaded.model.variant) + " model, config says " +
                               to_string(variant));
    }
    const auto dataset = load_split_dataset(config, seed);
    if (loaded.model.num_users() != dataset.num_users ||
        loaded.model.num_items() != dataset.num_items) {
      throw std::runtime_error("evaluate: checkpoint shape does not match the dataset");
    }
    const auto report = evaluate(loaded.model, dataset, segments, to_string(variant), seed);
    ensure_out_dir(out_dir);
    auto out = open_out(out_dir / (name + "_eval.csv"));
    report.write_csv(out);
    for (std::size_t k : {1, 3, 5}) {
      log << "evaluate: " << name << " DCG@" << k << " "
          << report.find(to_string(variant), "DCG", k, kSegmentAll).value_or(0.0) << '\n';
    }
    all.append(report);
  }
  return all;
}

EvalReport cmd_sweep_k(const RunConfig& config, std::ostream& log) {
  const auto out_dir = config.out_dir();
  require_inputs(config);
  const auto k_list = config.get_size_list("k_list");
  if (k_list.empty()) throw std::invalid_argument("sweep-k: k_list is empty");
  for (auto seed : config.seeds()) config.train(seed);
  ensure_out_dir(out_dir);
  const auto segments = config.segments();

  EvalReport all;
  for (auto seed : config.seeds()) {
    const auto dataset = load_split_dataset(config, seed);
    EvalReport report;
    for (auto k : k_list) {
      if (k < 1 || k > dataset.num_users) {
        log << "sweep-k: skipping K=" << k << " (need 1 <= K <= " << dataset.num_users << ")\n";
        continue;
      }
      auto train_config = config.train(seed);
      train_config.num_clusters = k;
      const auto result = train_cips(dataset, train_config);
      const auto model_name = "cips_k" + std::to_string(k);
      save_rec_model(out_dir / (stem(model_name, seed) + ".ckpt"), result.model, &result.clusters);
      const auto rows = evaluate(result.model, dataset, segments, model_name, seed);
      log << "sweep-k: seed " << seed << " K=" << k << " MAP@5 "
          << rows.find(model_name, "MAP", 5, kSegmentAll).value_or(0.0) << '\n';
      report.append(rows);
    }
    auto out = open_out(out_dir / ("sweep_k_seed" + std::to_string(seed) + ".csv"));
    report.write_csv(out);
    all.append(report);
  }
  return all;
}

}  // namespace cips
