#include "cips/recsys.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cips/eval.hpp"
#include "cips/random.hpp"

namespace cips {

namespace {

double pair_loss(double z, const PairWeights& w) {
  return w.positive * softplus(-z) + w.negative * softplus(z);
}

// d(pair_loss)/dz.
double pair_grad(double z, const PairWeights& w) {
  const double y = sigmoid(z);
  return -w.positive * (1.0 - y) + w.negative * y;
}

double bce(double z, std::uint8_t label) {
  return label ? softplus(-z) : softplus(z);
}

void check_logit(double z) {
  if (!std::isfinite(z)) throw std::domain_error("prediction is not strictly inside (0,1)");
}

Eigen::MatrixXd glorot_table(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

}  // namespace

double naive_loss(const RecModel& model, std::span<const Interaction> pairs) {
  if (pairs.empty()) throw std::invalid_argument("naive_loss: no pairs");
  double total = 0.0;
  for (const auto& r : pairs) {
    const double z = model.logit(r.user, r.item);
    check_logit(z);
    total += bce(z, r.label);
  }
  return total / static_cast<double>(pairs.size());
}

double ideal_loss(const RecModel& model, const Eigen::MatrixXd& labels) {
  if (static_cast<std::size_t>(labels.rows()) != model.num_users() ||
      static_cast<std::size_t>(labels.cols()) != model.num_items()) {
    throw std::invalid_argument("ideal_loss: label matrix must be N x M");
  }
  double total = 0.0;
  for (Eigen::Index u = 0; u < labels.rows(); ++u) {
    for (Eigen::Index v = 0; v < labels.cols(); ++v) {
      const double o = labels(u, v);
      if (o != 0.0 && o != 1.0) {
        throw std::invalid_argument("ideal_loss: label matrix is incomplete or non-binary");
      }
      const double z = model.logit(u, v);
      check_logit(z);
      total += bce(z, o == 1.0 ? 1 : 0);
    }
  }
  return total / static_cast<double>(labels.size());
}

double ips_loss(const RecModel& model, std::span<const Interaction> pairs,
                const PropensityTable& propensities) {
  double total = 0.0;
  for (const auto& r : pairs) {
    const double z = model.logit(r.user, r.item);
    check_logit(z);
    total += bce(z, r.label) / propensities.lookup(r.user, r.item);
  }
  return total / (static_cast<double>(model.num_users()) * static_cast<double>(model.num_items()));
}

PairWeights pair_weights(Objective objective, std::uint8_t label, double propensity,
                         double positive_weight) {
  const double o = label ? 1.0 : 0.0;
  switch (objective) {
    case Objective::kNaive:
      return {o, 1.0 - o};
    case Objective::kWeightedPositive:
      return {positive_weight * o, 1.0 - o};
    case Objective::kInversePropensity:
      return {o / propensity, (1.0 - o) / propensity};
    case Objective::kRelevance:
      return {o / propensity, 1.0 - o / propensity};
  }
  return {};
}

RecGradients RecGradients::zeros_like(const RecModel& model) {
  RecGradients g;
  if (model.tied()) {
    g.encoder = Encoder::zeros_like(*model.encoder);
  } else {
    g.users = Eigen::MatrixXd::Zero(model.user_embeddings.rows(), model.user_embeddings.cols());
  }
  g.items = Eigen::MatrixXd::Zero(model.item_embeddings.rows(), model.item_embeddings.cols());
  return g;
}

double objective_sum(const RecModel& model, const UserFeatures& features,
                     std::span<const Interaction> pairs, const ObjectiveSpec& spec,
                     RecGradients* grads) {
  const bool needs_propensity = spec.objective == Objective::kInversePropensity ||
                                spec.objective == Objective::kRelevance;
  if (needs_propensity && spec.propensities == nullptr) {
    throw std::invalid_argument("objective requires a propensity table");
  }
  const auto d = static_cast<Eigen::Index>(model.embedding_dim());

  // Tied mode: one encoder pass per distinct user in the batch.
  std::vector<std::int32_t> users;
  std::vector<Encoder::Activation> acts;
  std::vector<Eigen::VectorXd> user_grads;
  auto slot_of = [&](std::int32_t u) {
    return static_cast<std::size_t>(std::lower_bound(users.begin(), users.end(), u) - users.begin());
  };
  if (model.tied()) {
    users.reserve(pairs.size());
    for (const auto& r : pairs) users.push_back(r.user);
    std::sort(users.begin(), users.end());
    users.erase(std::unique(users.begin(), users.end()), users.end());
    acts.reserve(users.size());
    for (auto u : users) acts.push_back(model.encoder->forward(features.items(u)));
    if (grads != nullptr) user_grads.assign(users.size(), Eigen::VectorXd::Zero(d));
  }

  double total = 0.0;
  for (const auto& r : pairs) {
    const std::size_t slot = model.tied() ? slot_of(r.user) : 0;
    const Eigen::VectorXd s_u = model.tied() ? acts[slot].output
                                             : Eigen::VectorXd(model.user_embeddings.row(r.user).transpose());
    const double z = s_u.dot(model.item_embeddings.row(r.item));
    const double p = needs_propensity ? spec.propensities->lookup(r.user, r.item) : 1.0;
    const PairWeights w = pair_weights(spec.objective, r.label, p, spec.positive_weight);
    total += pair_loss(z, w);
    if (grads == nullptr) continue;

    const double g = pair_grad(z, w);
    grads->items.row(r.item) += g * s_u.transpose();
    if (model.tied()) {
      user_grads[slot] += g * model.item_embeddings.row(r.item).transpose();
    } else {
      grads->users.row(r.user) += g * model.item_embeddings.row(r.item);
    }
  }
  if (grads != nullptr && model.tied()) {
    for (std::size_t i = 0; i < users.size(); ++i) {
      model.encoder->backward(features.items(users[i]), acts[i], user_grads[i], *grads->encoder);
    }
  }
  return total;
}

void TrainConfig::validate(const InteractionDataset& dataset) const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid training config: ") + what);
  };
  require(embedding_dim >= 1, "embedding_dim must be >= 1");
  require(hidden_dim >= 1, "hidden_dim must be >= 1");
  require(num_clusters >= 1, "num_clusters must be >= 1");
  require(num_clusters <= dataset.num_users, "num_clusters exceeds the number of users");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(cluster_learning_rate > 0.0, "cluster_learning_rate must be positive");
  require(epochs >= 1, "epochs must be >= 1");
  require(cluster_epochs >= 1, "cluster_epochs must be >= 1");
  require(outer_iterations >= 1, "outer_iterations must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(clip_floor > 0.0 && clip_floor < 1.0, "clip_floor must lie in (0,1)");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(wmf_positive_weight > 0.0, "wmf_positive_weight must be positive");
  require(relmf_exponent > 0.0 && relmf_exponent <= 1.0, "relmf_exponent must lie in (0,1]");
  require(!dataset.train.empty(), "train split is empty");
}

RecModel init_free_model(const InteractionDataset& dataset, ModelVariant variant,
                         const TrainConfig& config) {
  Rng rng(derive_seed(config.seed, Phase::kItemInit));
  RecModel model;
  model.variant = variant;
  model.item_embeddings = glorot_table(dataset.num_items, config.embedding_dim, rng);
  model.user_embeddings = glorot_table(dataset.num_users, config.embedding_dim, rng);
  return model;
}

TrainResult train_recommender(const InteractionDataset& dataset, RecModel model,
                              const ObjectiveSpec& spec, const TrainConfig& config,
                              std::uint64_t stream, std::size_t iteration) {
  config.validate(dataset);
  if (model.num_items() != dataset.num_items) {
    throw std::invalid_argument("train_recommender: model and dataset disagree on item count");
  }
  model.refresh_user_embeddings(dataset.user_features);
  if (model.num_users() != dataset.num_users) {
    throw std::invalid_argument("train_recommender: model and dataset disagree on user count");
  }

  Rng rng(derive_seed(derive_seed(config.seed, Phase::kRecommender), stream));
  Rng negative_rng(derive_seed(derive_seed(config.seed, Phase::kNegativeSampling), stream));

  const PropensityTable popularity =
      item_popularity_propensity(dataset, config.relmf_exponent, config.clip_floor);
  const PropensityTable& selection_table =
      (config.selection == SelectionPropensity::kTrainingTable && spec.propensities != nullptr)
          ? *spec.propensities
          : popularity;

  const AdamConfig adam{.learning_rate = config.learning_rate};
  AdamState s_items, s_users, s_w1, s_b1, s_w2, s_b2;

  // Items each user must never receive as sampled zero-label pairs.
  std::vector<std::vector<std::int32_t>> blocked;
  if (config.unobserved_per_user > 0) {
    blocked.resize(dataset.num_users);
    for (const auto* split : {&dataset.train, &dataset.validation}) {
      for (const auto& r : *split) blocked[r.user].push_back(r.item);
    }
    for (auto& row : blocked) std::sort(row.begin(), row.end());
  }

  TrainResult result;
  bool have_best = false;
  std::vector<Interaction> epoch_pairs;
  std::vector<Interaction> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    epoch_pairs = dataset.train;
    if (config.unobserved_per_user > 0) {
      for (std::size_t u = 0; u < dataset.num_users; ++u) {
        const auto& row = blocked[u];
        if (row.size() >= dataset.num_items) continue;
        for (std::size_t i = 0; i < config.unobserved_per_user; ++i) {
          std::int32_t v;
          do {
            v = static_cast<std::int32_t>(negative_rng.below(dataset.num_items));
          } while (std::binary_search(row.begin(), row.end(), v));
          epoch_pairs.push_back({static_cast<std::int32_t>(u), v, 0});
        }
      }
    }
    rng.shuffle(std::span(epoch_pairs));

    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < epoch_pairs.size(); start += config.batch_size) {
      ++batch_index;
      const std::size_t stop = std::min(epoch_pairs.size(), start + config.batch_size);
      batch.assign(epoch_pairs.begin() + static_cast<std::ptrdiff_t>(start),
                   epoch_pairs.begin() + static_cast<std::ptrdiff_t>(stop));
      auto grads = RecGradients::zeros_like(model);
      const double loss = objective_sum(model, dataset.user_features, batch, spec, &grads);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_recommender: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      const double scale = 1.0 / static_cast<double>(batch.size());
      const double decay = config.weight_decay;
      adam_step(model.item_embeddings, grads.items * scale + decay * model.item_embeddings,
                s_items, adam);
      if (model.tied()) {
        auto& enc = *model.encoder;
        adam_step(enc.w1, grads.encoder->w1 * scale + decay * enc.w1, s_w1, adam);
        adam_step(enc.b1, grads.encoder->b1 * scale, s_b1, adam);
        adam_step(enc.w2, grads.encoder->w2 * scale + decay * enc.w2, s_w2, adam);
        adam_step(enc.b2, grads.encoder->b2 * scale, s_b2, adam);
      } else {
        adam_step(model.user_embeddings, grads.users * scale + decay * model.user_embeddings,
                  s_users, adam);
      }
    }
    model.refresh_user_embeddings(dataset.user_features);

    EpochRecord record;
    record.iteration = iteration;
    record.epoch = epoch;
    record.train_loss = objective_sum(model, dataset.user_features, epoch_pairs, spec, nullptr) /
                        static_cast<double>(epoch_pairs.size());
    if (!std::isfinite(record.train_loss)) {
      throw std::runtime_error("train_recommender: non-finite loss after epoch " +
                               std::to_string(epoch));
    }
    const auto val = validate_snips(model, dataset, selection_table, 3);
    record.snips_dcg3 = val.snips_dcg;
    record.snips_accuracy = val.snips_accuracy;
    result.history.push_back(record);

    const bool select = dataset.validation.empty() ? true : (!have_best || val.snips_dcg > result.best_score);
    if (select) {
      have_best = true;
      result.model = model;
      result.best_epoch = epoch;
      result.best_score = val.snips_dcg;
    }
  }
  return result;
}

TrainResult train_baseline(const InteractionDataset& dataset, ModelVariant variant,
                           const TrainConfig& config) {
  config.validate(dataset);
  ObjectiveSpec spec;
  std::optional<PropensityTable> popularity;
  switch (variant) {
    case ModelVariant::kMf:
      spec.objective = Objective::kNaive;
      break;
    case ModelVariant::kWmf:
      spec.objective = Objective::kWeightedPositive;
      spec.positive_weight = config.wmf_positive_weight;
      break;
    case ModelVariant::kRelMf:
      popularity = item_popularity_propensity(dataset, config.relmf_exponent, config.clip_floor);
      spec.objective = Objective::kRelevance;
      spec.propensities = &*popularity;
      break;
    case ModelVariant::kCips:
      throw std::invalid_argument("train_baseline: use train_cips for the cips variant");
  }
  return train_recommender(dataset, init_free_model(dataset, variant, config), spec, config);
}

CipsResult train_cips(const InteractionDataset& dataset, const TrainConfig& config) {
  config.validate(dataset);

  ClusteringConfig cluster_config;
  cluster_config.num_clusters = config.num_clusters;
  cluster_config.hidden_dim = config.hidden_dim;
  cluster_config.embedding_dim = config.embedding_dim;
  cluster_config.epochs = config.cluster_epochs;
  cluster_config.batch_size = config.batch_size;
  cluster_config.learning_rate = config.cluster_learning_rate;
  cluster_config.kmeans_iterations = config.kmeans_iterations;
  cluster_config.kmeans_restarts = config.kmeans_restarts;
  cluster_config.distance = config.distance;
  cluster_config.seed = config.seed;

  RecModel model;
  model.variant = ModelVariant::kCips;
  model.encoder = init_encoder(dataset.num_items, cluster_config);
  model.item_embeddings = init_free_model(dataset, ModelVariant::kCips, config).item_embeddings;

  const bool per_user_strata = config.num_clusters == dataset.num_users;
  CipsResult best;
  double best_score = 0.0;
  for (std::size_t it = 1; it <= config.outer_iterations; ++it) {
    ClusterModel clusters;
    std::vector<std::int32_t> cluster_of;
    PropensityTable propensities;
    if (per_user_strata) {
      clusters.encoder = *model.encoder;
      clusters.distance = config.distance;
      clusters.centers = model.encoder->encode_all(dataset.user_features);
      cluster_of.resize(dataset.num_users);
      std::iota(cluster_of.begin(), cluster_of.end(), 0);
      propensities = user_level_propensity(dataset, config.clip_floor);
    } else {
      cluster_config.seed = derive_seed(config.seed, 100 + it);
      auto clustered = train_clustering(dataset, cluster_config, *model.encoder);
      model.encoder = clustered.model.encoder;
      clusters = std::move(clustered.model);
      cluster_of = compact_clusters(clustered.assignments.hard);
      propensities = cluster_propensity(dataset, cluster_of, config.clip_floor,
                                        config.normalization);
    }

    const ObjectiveSpec spec{Objective::kInversePropensity, &propensities, 1.0};
    auto trained = train_recommender(dataset, model, spec, config, it, it);
    model = trained.model;
    clusters.encoder = *model.encoder;

    best.history.insert(best.history.end(), trained.history.begin(), trained.history.end());
    best.iterations_run = it;
    if (it == 1 || trained.best_score > best_score) {
      best_score = trained.best_score;
      best.best_iteration = it;
      best.model = model;
      best.clusters = std::move(clusters);
      best.propensities = std::move(propensities);
      best.cluster_of = std::move(cluster_of);
    } else {
      break;
    }
  }
  return best;
}

}  // namespace cips
