#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cips/clustering.hpp"
#include "cips/data.hpp"
#include "cips/model.hpp"
#include "cips/optim.hpp"
#include "cips/propensity.hpp"

namespace cips {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Binary cross entropy averaged over the given pairs. Lower is better.
double naive_loss(const RecModel& model, std::span<const Interaction> pairs);

/// BCE averaged over the full N x M label matrix. Entries must be 0 or 1; a
/// NaN entry marks a missing label and is an error.
double ideal_loss(const RecModel& model, const Eigen::MatrixXd& labels);

/// (1 / (N M)) * sum over pairs of BCE / clipped propensity.
double ips_loss(const RecModel& model, std::span<const Interaction> pairs,
                const PropensityTable& propensities);

/// Which per-pair weighting a training run minimizes.
enum class Objective {
  kNaive,              // plain BCE
  kWeightedPositive,   // BCE with positives scaled by a constant
  kInversePropensity,  // BCE / p
  kRelevance,          // (o/p) * -log(y) + (1 - o/p) * -log(1 - y)
};

/// Per-pair loss is positive * -log(y) + negative * -log(1 - y).
struct PairWeights {
  double positive = 0.0;
  double negative = 0.0;
};

PairWeights pair_weights(Objective objective, std::uint8_t label, double propensity,
                         double positive_weight);

struct RecGradients {
  std::optional<Encoder> encoder;
  Eigen::MatrixXd users;  // free-table gradient; empty when tied
  Eigen::MatrixXd items;

  static RecGradients zeros_like(const RecModel& model);
};

struct ObjectiveSpec {
  Objective objective = Objective::kNaive;
  const PropensityTable* propensities = nullptr;  // required by the propensity objectives
  double positive_weight = 1.0;
};

/// Sum of weighted per-pair losses. In tied mode user embeddings are
/// recomputed from the encoder, so gradients flow into its parameters.
/// Gradients of that sum are accumulated into `grads` when non-null.
double objective_sum(const RecModel& model, const UserFeatures& features,
                     std::span<const Interaction> pairs, const ObjectiveSpec& spec,
                     RecGradients* grads);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Where the propensities used for SNIPS model selection come from.
enum class SelectionPropensity { kItemPopularity, kTrainingTable };

struct TrainConfig {
  std::size_t embedding_dim = 16;
  std::size_t hidden_dim = 64;
  std::size_t num_clusters = 4;
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t outer_iterations = 3;
  std::size_t batch_size = 256;
  double clip_floor = kDefaultClipFloor;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  double wmf_positive_weight = 5.0;
  double relmf_exponent = 0.5;

  // Clustering phase.
  std::size_t cluster_epochs = 20;
  double cluster_learning_rate = 1e-3;
  std::size_t kmeans_iterations = 20;
  std::size_t kmeans_restarts = 1;
  DistanceKind distance = DistanceKind::kEuclidean;
  PropensityNormalization normalization = PropensityNormalization::kMaxOverItems;

  // Sensitivity switch: zero-label pairs drawn uniformly from items the user
  // has no train or validation record for, redrawn every epoch.
  std::size_t unobserved_per_user = 0;
  SelectionPropensity selection = SelectionPropensity::kItemPopularity;

  /// Throws std::invalid_argument when a field is out of range for `dataset`.
  void validate(const InteractionDataset& dataset) const;
};

struct EpochRecord {
  std::size_t iteration = 1;  // outer iteration (1 for baselines)
  std::size_t epoch = 0;
  double train_loss = 0.0;    // mean weighted per-pair loss after the epoch
  double snips_dcg3 = 0.0;    // SNIPS-estimated DCG@3 on validation
  double snips_accuracy = 0.0;
};

struct TrainResult {
  RecModel model;  // best epoch by SNIPS DCG@3, or the last epoch without validation data
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_score = 0.0;
};

/// Fresh free-table model (users and items uniform in a Glorot range).
RecModel init_free_model(const InteractionDataset& dataset, ModelVariant variant,
                         const TrainConfig& config);

/// Mini-batch Adam on the given objective starting from `initial`.
/// `stream` selects an independent random stream for shuffling so repeated
/// calls inside one run do not reuse draws.
TrainResult train_recommender(const InteractionDataset& dataset, RecModel initial,
                              const ObjectiveSpec& spec, const TrainConfig& config,
                              std::uint64_t stream = 0, std::size_t iteration = 1);

struct CipsResult {
  RecModel model;
  ClusterModel clusters;
  PropensityTable propensities;
  std::vector<std::int32_t> cluster_of;
  std::vector<EpochRecord> history;
  std::size_t iterations_run = 0;
  std::size_t best_iteration = 0;
};

/// Alternates clustering, cluster-level propensity estimation and IPS
/// training of a model whose user side is the clustering encoder. Stops early
/// when an outer iteration fails to improve SNIPS DCG@3 and returns the
/// artifacts of the best iteration. K equal to the number of users means one
/// stratum per user (user-level propensities, no clustering).
CipsResult train_cips(const InteractionDataset& dataset, const TrainConfig& config);

/// MF, WMF or Rel-MF on a free user table.
TrainResult train_baseline(const InteractionDataset& dataset, ModelVariant variant,
                           const TrainConfig& config);

}  // namespace cips
