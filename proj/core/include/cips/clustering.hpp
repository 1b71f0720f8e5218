#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cips/data.hpp"
#include "cips/random.hpp"

namespace cips {

/// Two affine layers with a ReLU between them: M inputs -> H hidden -> d outputs.
struct Encoder {
  Eigen::MatrixXd w1;  // H x M
  Eigen::VectorXd b1;  // H
  Eigen::MatrixXd w2;  // d x H
  Eigen::VectorXd b2;  // d

  /// Cached intermediate values for one forward pass, consumed by backward().
  struct Activation {
    Eigen::VectorXd pre;     // w1 x + b1
    Eigen::VectorXd hidden;  // max(0, pre)
    Eigen::VectorXd output;  // w2 hidden + b2
  };

  /// Glorot-uniform weights, zero offsets.
  static Encoder glorot(std::size_t inputs, std::size_t hidden, std::size_t outputs, Rng& rng);
  /// Same shapes as `like`, all zeros. Used as a gradient accumulator.
  static Encoder zeros_like(const Encoder& like);

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(w2.rows()); }

  /// Dense input of length input_dim(); throws std::invalid_argument otherwise.
  Eigen::VectorXd encode(const Eigen::VectorXd& x) const;

  /// Binary input given by the sorted list of its nonzero positions.
  Activation forward(std::span<const std::int32_t> active) const;

  /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
  void backward(std::span<const std::int32_t> active, const Activation& act,
                const Eigen::VectorXd& grad_output, Encoder& grads) const;

  /// Embeddings of every user as rows of an N x d matrix.
  Eigen::MatrixXd encode_all(const UserFeatures& features) const;

  void add_scaled(const Encoder& other, double scale);
  bool all_finite() const;

  friend bool operator==(const Encoder& a, const Encoder& b);
};

enum class DistanceKind {
  kEuclidean,         // (1 + ||h - mu||)^-1, as used by the stratification objective
  kSquaredEuclidean,  // (1 + ||h - mu||^2)^-1, the classic self-training kernel
};

struct ClusterModel {
  Encoder encoder;
  Eigen::MatrixXd centers;  // K x d
  DistanceKind distance = DistanceKind::kEuclidean;

  std::size_t num_clusters() const { return static_cast<std::size_t>(centers.rows()); }
};

struct Assignments {
  Eigen::MatrixXd soft;            // N x K, rows sum to 1
  std::vector<std::int32_t> hard;  // argmax of each soft row
};

/// Soft assignment of each embedding row to each center row.
Eigen::MatrixXd soft_assign(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& centers,
                            DistanceKind distance = DistanceKind::kEuclidean);

/// Sharpened self-training targets: t_uk proportional to a_uk^2 / s_k with
/// cluster mass s_k = sum_u a_uk. Throws std::domain_error if some s_k is zero.
Eigen::MatrixXd target_distribution(const Eigen::MatrixXd& soft);

/// sum_u sum_k t_uk log(t_uk / a_uk), with 0 log 0 = 0.
double kl_loss(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& soft);

/// Row argmax; ties go to the smallest index.
std::vector<std::int32_t> hard_assign(const Eigen::MatrixXd& soft);

/// k-means++ seeding followed by `iterations` Lloyd steps. Returns K x d centers.
Eigen::MatrixXd kmeans(const Eigen::MatrixXd& points, std::size_t k, std::size_t iterations,
                       Rng& rng, double* inertia = nullptr);

struct ClusteringGradients {
  Encoder encoder;
  Eigen::MatrixXd centers;

  static ClusteringGradients zeros_like(const ClusterModel& model);
};

/// KL loss summed over `users` against fixed per-user `targets` (rows indexed
/// by user id), accumulating its exact gradient into `grads` when non-null.
double cluster_loss(const ClusterModel& model, const UserFeatures& features,
                    std::span<const std::size_t> users, const Eigen::MatrixXd& targets,
                    ClusteringGradients* grads);

struct ClusteringConfig {
  std::size_t num_clusters = 4;
  std::size_t hidden_dim = 64;
  std::size_t embedding_dim = 16;
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::size_t kmeans_iterations = 20;
  std::size_t kmeans_restarts = 1;
  DistanceKind distance = DistanceKind::kEuclidean;
  std::uint64_t seed = 0;
};

struct ClusteringResult {
  ClusterModel model;
  Assignments assignments;
  /// Clustering loss at the end of each epoch, measured against that epoch's targets.
  std::vector<double> epoch_loss;
};

/// Fresh encoder for `num_items` inputs, seeded from the encoder-init phase.
Encoder init_encoder(std::size_t num_items, const ClusteringConfig& config);

/// Alternates once-per-epoch target refresh with mini-batch Adam steps on the
/// KL objective, updating encoder and centers. Centers are always re-seeded by
/// k-means on the starting embeddings; the encoder starts from
/// `initial_encoder` when given.
ClusteringResult train_clustering(const InteractionDataset& dataset,
                                  const ClusteringConfig& config,
                                  std::optional<Encoder> initial_encoder = std::nullopt);

}  // namespace cips
