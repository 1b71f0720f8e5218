#include "cips/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cips/optim.hpp"

namespace cips {

namespace {

Eigen::MatrixXd glorot_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Eigen::MatrixXd m(rows, cols);
  // Column-major fill order is part of the seeded contract.
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

double kernel_distance(const Eigen::VectorXd& h, const Eigen::VectorXd& center,
                       DistanceKind distance) {
  const double sq = (h - center).squaredNorm();
  return distance == DistanceKind::kEuclidean ? std::sqrt(sq) : sq;
}

}  // namespace

Encoder Encoder::glorot(std::size_t inputs, std::size_t hidden, std::size_t outputs, Rng& rng) {
  Encoder e;
  e.w1 = glorot_matrix(hidden, inputs, rng);
  e.b1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden));
  e.w2 = glorot_matrix(outputs, hidden, rng);
  e.b2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(outputs));
  return e;
}

Encoder Encoder::zeros_like(const Encoder& like) {
  Encoder e;
  e.w1 = Eigen::MatrixXd::Zero(like.w1.rows(), like.w1.cols());
  e.b1 = Eigen::VectorXd::Zero(like.b1.size());
  e.w2 = Eigen::MatrixXd::Zero(like.w2.rows(), like.w2.cols());
  e.b2 = Eigen::VectorXd::Zero(like.b2.size());
  return e;
}

Eigen::VectorXd Encoder::encode(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim()) {
    throw std::invalid_argument("encode: input has length " + std::to_string(x.size()) +
                                ", encoder expects " + std::to_string(input_dim()));
  }
  const Eigen::VectorXd hidden = (w1 * x + b1).cwiseMax(0.0);
  return w2 * hidden + b2;
}

Encoder::Activation Encoder::forward(std::span<const std::int32_t> active) const {
  Activation act;
  act.pre = b1;
  for (auto v : active) act.pre += w1.col(v);
  act.hidden = act.pre.cwiseMax(0.0);
  act.output = w2 * act.hidden + b2;
  return act;
}

void Encoder::backward(std::span<const std::int32_t> active, const Activation& act,
                       const Eigen::VectorXd& grad_output, Encoder& grads) const {
  grads.b2 += grad_output;
  grads.w2.noalias() += grad_output * act.hidden.transpose();
  // ReLU subgradient is 0 at 0.
  const Eigen::VectorXd grad_pre =
      (w2.transpose() * grad_output).cwiseProduct((act.pre.array() > 0.0).cast<double>().matrix());
  grads.b1 += grad_pre;
  for (auto v : active) grads.w1.col(v) += grad_pre;
}

Eigen::MatrixXd Encoder::encode_all(const UserFeatures& features) const {
  if (features.num_items() != input_dim()) {
    throw std::invalid_argument("encode_all: feature width does not match encoder");
  }
  Eigen::MatrixXd out(features.num_users(), output_dim());
  for (std::size_t u = 0; u < features.num_users(); ++u) {
    out.row(static_cast<Eigen::Index>(u)) = forward(features.items(u)).output.transpose();
  }
  return out;
}

void Encoder::add_scaled(const Encoder& other, double scale) {
  w1 += scale * other.w1;
  b1 += scale * other.b1;
  w2 += scale * other.w2;
  b2 += scale * other.b2;
}

bool Encoder::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

bool operator==(const Encoder& a, const Encoder& b) {
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return same(a.w1, b.w1) && same(a.b1, b.b1) && same(a.w2, b.w2) && same(a.b2, b.b2);
}

Eigen::MatrixXd soft_assign(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& centers,
                            DistanceKind distance) {
  if (centers.rows() < 1) throw std::invalid_argument("soft_assign: need at least one center");
  if (embeddings.cols() != centers.cols()) {
    throw std::invalid_argument("soft_assign: embedding and center widths differ");
  }
  if (!embeddings.allFinite() || !centers.allFinite()) {
    throw std::invalid_argument("soft_assign: non-finite input");
  }
  Eigen::MatrixXd soft(embeddings.rows(), centers.rows());
  for (Eigen::Index u = 0; u < embeddings.rows(); ++u) {
    const Eigen::VectorXd h = embeddings.row(u).transpose();
    for (Eigen::Index k = 0; k < centers.rows(); ++k) {
      soft(u, k) = 1.0 / (1.0 + kernel_distance(h, centers.row(k).transpose(), distance));
    }
    soft.row(u) /= soft.row(u).sum();
  }
  return soft;
}

Eigen::MatrixXd target_distribution(const Eigen::MatrixXd& soft) {
  const Eigen::RowVectorXd mass = soft.colwise().sum();
  for (Eigen::Index k = 0; k < mass.size(); ++k) {
    if (!(mass[k] > 0.0)) {
      throw std::domain_error("target_distribution: cluster " + std::to_string(k) +
                              " has zero mass");
    }
  }
  Eigen::MatrixXd targets = soft.cwiseProduct(soft);
  targets.array().rowwise() /= mass.array();
  for (Eigen::Index u = 0; u < targets.rows(); ++u) targets.row(u) /= targets.row(u).sum();
  return targets;
}

double kl_loss(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& soft) {
  if (targets.rows() != soft.rows() || targets.cols() != soft.cols()) {
    throw std::invalid_argument("kl_loss: shape mismatch");
  }
  double loss = 0.0;
  for (Eigen::Index u = 0; u < soft.rows(); ++u) {
    for (Eigen::Index k = 0; k < soft.cols(); ++k) {
      const double t = targets(u, k);
      if (t == 0.0) continue;
      const double a = soft(u, k);
      if (!(a > 0.0)) {
        throw std::domain_error("kl_loss: zero assignment where target is positive");
      }
      loss += t * std::log(t / a);
    }
  }
  return std::max(loss, 0.0);
}

std::vector<std::int32_t> hard_assign(const Eigen::MatrixXd& soft) {
  std::vector<std::int32_t> hard(static_cast<std::size_t>(soft.rows()), 0);
  for (Eigen::Index u = 0; u < soft.rows(); ++u) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < soft.cols(); ++k) {
      if (soft(u, k) > soft(u, best)) best = k;
    }
    hard[static_cast<std::size_t>(u)] = static_cast<std::int32_t>(best);
  }
  return hard;
}

Eigen::MatrixXd kmeans(const Eigen::MatrixXd& points, std::size_t k, std::size_t iterations,
                       Rng& rng, double* inertia) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: need 1 <= k <= number of points");

  Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), points.cols());
  centers.row(0) = points.row(static_cast<Eigen::Index>(rng.below(n)));
  Eigen::VectorXd nearest(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    nearest[i] = (points.row(i) - centers.row(0)).squaredNorm();
  }
  for (std::size_t c = 1; c < k; ++c) {
    const double total = nearest.sum();
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        r -= nearest[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    centers.row(c) = points.row(pick);
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], (points.row(i) - centers.row(c)).squaredNorm());
    }
  }

  std::vector<std::size_t> owner(n, 0);
  auto assign = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = (points.row(i) - centers.row(c)).squaredNorm();
        if (d < best) {
          best = d;
          owner[i] = c;
        }
      }
      total += best;
    }
    return total;
  };

  double cost = assign();
  for (std::size_t it = 0; it < iterations; ++it) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(centers.rows(), centers.cols());
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(owner[i]) += points.row(i);
      ++sizes[owner[i]];
    }
    // Empty clusters keep their previous center.
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) centers.row(c) = sums.row(c) / static_cast<double>(sizes[c]);
    }
    cost = assign();
  }
  if (inertia != nullptr) *inertia = cost;
  return centers;
}

ClusteringGradients ClusteringGradients::zeros_like(const ClusterModel& model) {
  return {Encoder::zeros_like(model.encoder),
          Eigen::MatrixXd::Zero(model.centers.rows(), model.centers.cols())};
}

double cluster_loss(const ClusterModel& model, const UserFeatures& features,
                    std::span<const std::size_t> users, const Eigen::MatrixXd& targets,
                    ClusteringGradients* grads) {
  const auto k_count = model.centers.rows();
  const bool squared = model.distance == DistanceKind::kSquaredEuclidean;
  double loss = 0.0;

  Eigen::VectorXd dist(k_count);
  Eigen::VectorXd kernel(k_count);
  for (auto u : users) {
    const auto items = features.items(u);
    const auto act = model.encoder.forward(items);
    const Eigen::VectorXd& h = act.output;

    for (Eigen::Index k = 0; k < k_count; ++k) {
      dist[k] = kernel_distance(h, model.centers.row(k).transpose(), model.distance);
      kernel[k] = 1.0 / (1.0 + dist[k]);
    }
    const Eigen::VectorXd soft = kernel / kernel.sum();
    const auto t = targets.row(static_cast<Eigen::Index>(u));
    for (Eigen::Index k = 0; k < k_count; ++k) {
      if (t[k] > 0.0) loss += t[k] * std::log(t[k] / soft[k]);
    }
    if (grads == nullptr) continue;

    // dL/d(distance_k) = (t_k - a_k) * kernel_k; chain through the norm.
    Eigen::VectorXd grad_h = Eigen::VectorXd::Zero(h.size());
    for (Eigen::Index k = 0; k < k_count; ++k) {
      double coeff = (t[k] - soft[k]) * kernel[k];
      if (squared) {
        coeff *= 2.0;
      } else if (dist[k] > 0.0) {
        coeff /= dist[k];
      } else {
        coeff = 0.0;
      }
      const Eigen::VectorXd diff = h - model.centers.row(k).transpose();
      grad_h += coeff * diff;
      grads->centers.row(k) -= coeff * diff.transpose();
    }
    model.encoder.backward(items, act, grad_h, grads->encoder);
  }
  return loss;
}

Encoder init_encoder(std::size_t num_items, const ClusteringConfig& config) {
  Rng rng(derive_seed(config.seed, Phase::kEncoderInit));
  return Encoder::glorot(num_items, config.hidden_dim, config.embedding_dim, rng);
}

ClusteringResult train_clustering(const InteractionDataset& dataset,
                                  const ClusteringConfig& config,
                                  std::optional<Encoder> initial_encoder) {
  const std::size_t n = dataset.num_users;
  if (config.num_clusters < 1 || config.num_clusters > n) {
    throw std::invalid_argument("train_clustering: need 1 <= K <= number of users");
  }
  if (config.epochs < 1) throw std::invalid_argument("train_clustering: epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("train_clustering: batch_size must be >= 1");

  ClusterModel model;
  model.distance = config.distance;
  model.encoder = initial_encoder ? std::move(*initial_encoder)
                                  : init_encoder(dataset.num_items, config);
  if (model.encoder.input_dim() != dataset.num_items) {
    throw std::invalid_argument("train_clustering: encoder width does not match item count");
  }

  Rng rng(derive_seed(config.seed, Phase::kClustering));
  {
    const Eigen::MatrixXd start = model.encoder.encode_all(dataset.user_features);
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(config.kmeans_restarts, 1); ++r) {
      double cost = 0.0;
      Eigen::MatrixXd centers =
          kmeans(start, config.num_clusters, config.kmeans_iterations, rng, &cost);
      if (cost < best_cost) {
        best_cost = cost;
        model.centers = std::move(centers);
      }
    }
  }

  const AdamConfig adam{.learning_rate = config.learning_rate};
  AdamState s_w1, s_b1, s_w2, s_b2, s_centers;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  ClusteringResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const Eigen::MatrixXd soft = soft_assign(
        model.encoder.encode_all(dataset.user_features), model.centers, model.distance);
    const Eigen::RowVectorXd mass = soft.colwise().sum();
    for (Eigen::Index k = 0; k < mass.size(); ++k) {
      if (!(mass[k] >= 1e-12)) {
        throw std::runtime_error("train_clustering: cluster " + std::to_string(k) +
                                 " collapsed at epoch " + std::to_string(epoch));
      }
    }
    const Eigen::MatrixXd targets = target_distribution(soft);

    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      auto grads = ClusteringGradients::zeros_like(model);
      cluster_loss(model, dataset.user_features, batch, targets, &grads);
      const double scale = 1.0 / static_cast<double>(batch.size());
      adam_step(model.encoder.w1, grads.encoder.w1 * scale, s_w1, adam);
      adam_step(model.encoder.b1, grads.encoder.b1 * scale, s_b1, adam);
      adam_step(model.encoder.w2, grads.encoder.w2 * scale, s_w2, adam);
      adam_step(model.encoder.b2, grads.encoder.b2 * scale, s_b2, adam);
      adam_step(model.centers, grads.centers * scale, s_centers, adam);
    }
    if (!model.encoder.all_finite() || !model.centers.allFinite()) {
      throw std::runtime_error("train_clustering: non-finite parameters at epoch " +
                               std::to_string(epoch));
    }
    result.epoch_loss.push_back(kl_loss(
        targets,
        soft_assign(model.encoder.encode_all(dataset.user_features), model.centers,
                    model.distance)));
  }

  result.assignments.soft =
      soft_assign(model.encoder.encode_all(dataset.user_features), model.centers, model.distance);
  result.assignments.hard = hard_assign(result.assignments.soft);
  result.model = std::move(model);
  return result;
}

}  // namespace cips
