#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "cips/propensity.hpp"
#include "cips/random.hpp"
#include "cips/recsys.hpp"
#include "test_util.hpp"

namespace cips {
namespace {

using testing::make_dataset;

constexpr double kLn2 = 0.69314718055994530942;
constexpr double kFdStep = 1e-5;

RecModel free_model(Eigen::MatrixXd users, Eigen::MatrixXd items) {
  RecModel m;
  m.user_embeddings = std::move(users);
  m.item_embeddings = std::move(items);
  return m;
}

RecModel random_free_model(std::size_t n, std::size_t m, std::size_t d, Rng& rng) {
  Eigen::MatrixXd u(n, d), v(m, d);
  for (auto& x : u.reshaped()) x = rng.uniform(-1, 1);
  for (auto& x : v.reshaped()) x = rng.uniform(-1, 1);
  return free_model(u, v);
}

TEST(Predict, SigmoidValues) {
  auto m = free_model(Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(1, 2));
  EXPECT_EQ(predict(m, 0, 0), 0.5);
  m.user_embeddings << 1, 1;
  m.item_embeddings << 1, -1;
  EXPECT_EQ(predict(m, 0, 0), 0.5);
  m.user_embeddings << std::log(3.0), 0;
  m.item_embeddings << 1, 0;
  EXPECT_NEAR(predict(m, 0, 0), 0.75, 1e-15);
  EXPECT_THROW(predict(m, 1, 0), std::out_of_range);
  EXPECT_THROW(predict(m, 0, -1), std::out_of_range);
}

TEST(Predict, StrictlyInsideUnitInterval) {
  auto m = free_model(Eigen::MatrixXd::Constant(1, 1, 100.0), Eigen::MatrixXd::Constant(2, 1, 10.0));
  m.item_embeddings(1, 0) = -10.0;
  EXPECT_LT(predict(m, 0, 0), 1.0);
  EXPECT_GT(predict(m, 0, 1), 0.0);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_EQ(softplus(0.0), kLn2);
  EXPECT_EQ(softplus(-1000.0), 0.0);
  EXPECT_EQ(softplus(1000.0), 1000.0);
}

TEST(NaiveLoss, HandValues) {
  const auto m = free_model(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1));
  const std::vector<Interaction> one = {{0, 0, 1}};
  EXPECT_NEAR(naive_loss(m, one), kLn2, 1e-15);
  EXPECT_THROW(naive_loss(m, std::vector<Interaction>{}), std::invalid_argument);

  // Confident and correct predictions drive the loss to zero.
  const auto good = free_model(Eigen::MatrixXd::Constant(2, 1, 1.0),
                               (Eigen::MatrixXd(2, 1) << 40.0, -40.0).finished());
  const std::vector<Interaction> pairs = {{0, 0, 1}, {1, 1, 0}};
  EXPECT_LT(naive_loss(good, pairs), 1e-15);

  auto bad = good;
  bad.item_embeddings(0, 0) = NAN;
  EXPECT_THROW(naive_loss(bad, pairs), std::domain_error);
}

TEST(IdealLoss, HandValuesAndErrors) {
  const auto m = free_model(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1));
  EXPECT_NEAR(ideal_loss(m, Eigen::MatrixXd::Ones(1, 1)), kLn2, 1e-15);
  EXPECT_THROW(ideal_loss(m, Eigen::MatrixXd::Ones(2, 1)), std::invalid_argument);
  EXPECT_THROW(ideal_loss(m, Eigen::MatrixXd::Constant(1, 1, NAN)), std::invalid_argument);
  EXPECT_THROW(ideal_loss(m, Eigen::MatrixXd::Constant(1, 1, 0.5)), std::invalid_argument);

  const auto good = free_model(Eigen::MatrixXd::Constant(1, 1, 1.0),
                               (Eigen::MatrixXd(2, 1) << 40.0, -40.0).finished());
  EXPECT_LT(ideal_loss(good, (Eigen::MatrixXd(1, 2) << 1, 0).finished()), 1e-15);
}

TEST(IdealLoss, PermutationInvariant) {
  Rng rng(3);
  const auto m = random_free_model(4, 5, 2, rng);
  Eigen::MatrixXd labels(4, 5);
  for (auto& x : labels.reshaped()) x = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const double base = ideal_loss(m, labels);
  const std::vector<int> pu = {2, 0, 3, 1}, pv = {4, 1, 0, 3, 2};
  RecModel pm = m;
  Eigen::MatrixXd pl(4, 5);
  for (int u = 0; u < 4; ++u) pm.user_embeddings.row(u) = m.user_embeddings.row(pu[u]);
  for (int v = 0; v < 5; ++v) pm.item_embeddings.row(v) = m.item_embeddings.row(pv[v]);
  for (int u = 0; u < 4; ++u) {
    for (int v = 0; v < 5; ++v) pl(u, v) = labels(pu[u], pv[v]);
  }
  EXPECT_NEAR(ideal_loss(pm, pl), base, 1e-14);
}

TEST(IpsLoss, HandValue) {
  const auto m = free_model(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1));
  const PropensityTable half(PropensityMode::kUserLevel, Eigen::MatrixXd::Constant(1, 1, 0.5), {},
                             0.05);
  const std::vector<Interaction> one = {{0, 0, 1}};
  EXPECT_NEAR(ips_loss(m, one, half), 2 * kLn2, 1e-15);
}

TEST(IpsLoss, UnitPropensitiesMatchNaiveScaling) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_free_model(5, 7, 3, rng);
    std::vector<Interaction> pairs;
    for (int u = 0; u < 5; ++u) {
      for (int v = 0; v < 7; ++v) {
        if (rng.bernoulli(0.5)) pairs.push_back({u, v, static_cast<std::uint8_t>(rng.below(2))});
      }
    }
    if (pairs.empty()) continue;
    const PropensityTable ones(PropensityMode::kUserLevel, Eigen::MatrixXd::Ones(5, 7), {}, 0.05);
    const double expected = static_cast<double>(pairs.size()) / 35.0 * naive_loss(m, pairs);
    EXPECT_NEAR(ips_loss(m, pairs, ones), expected, 1e-14 * expected);
  }
}

TEST(IpsLoss, PropensityScalingScalesLossAndGradient) {
  Rng rng(12);
  const auto m = random_free_model(4, 6, 2, rng);
  const auto ds = make_dataset(4, 6, {{0, 1, 1}, {1, 2, 0}, {2, 3, 1}, {3, 5, 0}, {0, 4, 1}});
  Eigen::MatrixXd values(4, 6);
  for (auto& x : values.reshaped()) x = rng.uniform(0.2, 0.5);
  const PropensityTable p(PropensityMode::kUserLevel, values, {}, 0.05);
  const PropensityTable p2(PropensityMode::kUserLevel, 2.0 * values, {}, 0.05);
  EXPECT_NEAR(ips_loss(m, ds.train, p), 2.0 * ips_loss(m, ds.train, p2), 1e-14);

  const ObjectiveSpec s1{Objective::kInversePropensity, &p, 1.0};
  const ObjectiveSpec s2{Objective::kInversePropensity, &p2, 1.0};
  auto g1 = RecGradients::zeros_like(m);
  auto g2 = RecGradients::zeros_like(m);
  objective_sum(m, ds.user_features, ds.train, s1, &g1);
  objective_sum(m, ds.user_features, ds.train, s2, &g2);
  EXPECT_TRUE(g1.items.isApprox(2.0 * g2.items, 1e-14));
  EXPECT_TRUE(g1.users.isApprox(2.0 * g2.users, 1e-14));
}

TEST(PairWeights, Variants) {
  const auto mf = pair_weights(Objective::kNaive, 1, 0.3, 9.0);
  EXPECT_EQ(mf.positive, 1.0);
  EXPECT_EQ(mf.negative, 0.0);
  const auto wmf = pair_weights(Objective::kWeightedPositive, 1, 0.3, 5.0);
  EXPECT_EQ(wmf.positive, 5.0);
  const auto ips = pair_weights(Objective::kInversePropensity, 0, 0.25, 1.0);
  EXPECT_EQ(ips.negative, 4.0);
  const auto rel = pair_weights(Objective::kRelevance, 1, 0.5, 1.0);
  EXPECT_EQ(rel.positive, 2.0);
  EXPECT_EQ(rel.negative, -1.0);
}

TEST(Objectives, BaselineReductions) {
  Rng rng(4);
  const auto m = random_free_model(3, 4, 2, rng);
  const auto ds = make_dataset(3, 4, {{0, 0, 1}, {0, 2, 0}, {1, 1, 1}, {2, 3, 0}, {2, 0, 1}});
  const PropensityTable ones(PropensityMode::kItemPopularity, Eigen::MatrixXd::Ones(1, 4), {}, 0.05);
  const double mf = objective_sum(m, ds.user_features, ds.train, {Objective::kNaive, nullptr, 1.0},
                                  nullptr);
  EXPECT_EQ(objective_sum(m, ds.user_features, ds.train,
                          {Objective::kWeightedPositive, nullptr, 1.0}, nullptr),
            mf);
  EXPECT_NEAR(objective_sum(m, ds.user_features, ds.train, {Objective::kRelevance, &ones, 1.0},
                            nullptr),
              mf, 1e-14);
  EXPECT_NEAR(mf / 5.0, naive_loss(m, ds.train), 1e-15);
  EXPECT_THROW(objective_sum(m, ds.user_features, ds.train,
                             {Objective::kInversePropensity, nullptr, 1.0}, nullptr),
               std::invalid_argument);
}

TEST(Objectives, RelMfSinglePairHandValue) {
  const auto m = free_model(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1));
  const auto ds = make_dataset(1, 1, {{0, 0, 1}});
  const PropensityTable half(PropensityMode::kItemPopularity, Eigen::MatrixXd::Constant(1, 1, 0.5),
                             {}, 0.05);
  const double loss =
      objective_sum(m, ds.user_features, ds.train, {Objective::kRelevance, &half, 1.0}, nullptr);
  EXPECT_NEAR(loss, 2 * kLn2 - kLn2, 1e-15);
}

// A tied-encoder model plus data for the gradient check.
struct TiedInstance {
  RecModel model;
  InteractionDataset data;
  PropensityTable props;
};

TiedInstance random_tied(Rng& rng) {
  TiedInstance inst;
  const auto n = 2 + rng.below(5);  // <= 6
  const auto m = 2 + rng.below(7);  // <= 8
  const auto d = 1 + rng.below(4);  // <= 4
  const auto h = 2 + rng.below(4);
  std::vector<Interaction> train;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < m; ++v) {
      if (rng.bernoulli(0.5)) {
        train.push_back({int(u), int(v), static_cast<std::uint8_t>(rng.below(2))});
      }
    }
  }
  if (train.empty()) train.push_back({0, 0, 1});
  inst.data = make_dataset(n, m, train);
  inst.model.variant = ModelVariant::kCips;
  inst.model.encoder = Encoder::glorot(m, h, d, rng);
  for (auto& x : inst.model.encoder->b1.reshaped()) x = rng.uniform(-0.5, 0.5);
  for (auto& x : inst.model.encoder->b2.reshaped()) x = rng.uniform(-0.5, 0.5);
  inst.model.item_embeddings.resize(m, d);
  for (auto& x : inst.model.item_embeddings.reshaped()) x = rng.uniform(-1, 1);
  inst.model.refresh_user_embeddings(inst.data.user_features);
  const auto k = 1 + rng.below(3);
  Eigen::MatrixXd values(k, m);
  for (auto& x : values.reshaped()) x = rng.uniform(0.1, 1.0);
  std::vector<std::int32_t> cluster_of(n);
  for (auto& c : cluster_of) c = static_cast<std::int32_t>(rng.below(k));
  inst.props = PropensityTable(PropensityMode::kCluster, values, cluster_of, 0.05);
  return inst;
}

double ips_sum(const TiedInstance& inst) {
  return objective_sum(inst.model, inst.data.user_features, inst.data.train,
                       {Objective::kInversePropensity, &inst.props, 1.0}, nullptr);
}

Eigen::MatrixXd numeric_grad(TiedInstance& inst, double* data, Eigen::Index rows,
                             Eigen::Index cols) {
  Eigen::MatrixXd g(rows, cols);
  for (Eigen::Index i = 0; i < rows * cols; ++i) {
    const double saved = data[i];
    data[i] = saved + kFdStep;
    const double up = ips_sum(inst);
    data[i] = saved - kFdStep;
    const double down = ips_sum(inst);
    data[i] = saved;
    g.data()[i] = (up - down) / (2 * kFdStep);
  }
  return g;
}

TEST(IpsObjective, TiedGradientMatchesFiniteDifferences) {
  Rng rng(606);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = random_tied(rng);
    auto grads = RecGradients::zeros_like(inst.model);
    const double total =
        objective_sum(inst.model, inst.data.user_features, inst.data.train,
                      {Objective::kInversePropensity, &inst.props, 1.0}, &grads);
    const double nm = double(inst.data.num_users * inst.data.num_items);
    EXPECT_NEAR(ips_loss(inst.model, inst.data.train, inst.props), total / nm, 1e-12);

    auto& enc = *inst.model.encoder;
    auto check = [&](Eigen::MatrixXd& analytic, auto& block) {
      EXPECT_LT(testing::relative_error(
                    analytic, numeric_grad(inst, block.data(), block.rows(), block.cols())),
                1e-4);
    };
    Eigen::MatrixXd gw1 = grads.encoder->w1, gb1 = grads.encoder->b1;
    Eigen::MatrixXd gw2 = grads.encoder->w2, gb2 = grads.encoder->b2;
    check(gw1, enc.w1);
    check(gb1, enc.b1);
    check(gw2, enc.w2);
    check(gb2, enc.b2);
    check(grads.items, inst.model.item_embeddings);
  }
}

TEST(IpsObjective, FreeTableGradientMatchesFiniteDifferences) {
  Rng rng(707);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_tied(rng);
    inst.model.encoder.reset();
    inst.model.user_embeddings =
        Eigen::MatrixXd::Random(inst.data.num_users, inst.model.embedding_dim());
    auto grads = RecGradients::zeros_like(inst.model);
    objective_sum(inst.model, inst.data.user_features, inst.data.train,
                  {Objective::kInversePropensity, &inst.props, 1.0}, &grads);
    auto& u = inst.model.user_embeddings;
    EXPECT_LT(testing::relative_error(grads.users, numeric_grad(inst, u.data(), u.rows(), u.cols())),
              1e-4);
  }
}

TEST(IpsObjective, SingleUserItemGradientFollowsUserEmbedding) {
  Rng rng(8);
  const auto ds = make_dataset(1, 1, {{0, 0, 1}});
  RecModel m;
  m.variant = ModelVariant::kCips;
  m.encoder = Encoder::glorot(1, 3, 2, rng);
  m.encoder->b2 << 0.3, -0.2;
  m.item_embeddings = Eigen::MatrixXd::Constant(1, 2, 0.1);
  m.refresh_user_embeddings(ds.user_features);
  const Eigen::VectorXd s_u = m.user_embeddings.row(0).transpose();
  auto grads = RecGradients::zeros_like(m);
  objective_sum(m, ds.user_features, ds.train, {Objective::kNaive, nullptr, 1.0}, &grads);
  const double y = predict(m, 0, 0);
  // Descent direction is +(1 - y) s_u.
  const Eigen::VectorXd step = -grads.items.row(0).transpose();
  EXPECT_TRUE(step.isApprox((1.0 - y) * s_u, 1e-14));
}

InteractionDataset small_world(std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.num_users = 60;
  cfg.num_items = 20;
  cfg.num_true_clusters = 3;
  cfg.seed = seed;
  return split_validation(generate_synthetic(cfg).dataset, 0.9, derive_seed(seed, Phase::kSplit));
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.embedding_dim = 4;
  cfg.hidden_dim = 8;
  cfg.num_clusters = 3;
  cfg.epochs = 4;
  cfg.cluster_epochs = 3;
  cfg.outer_iterations = 2;
  cfg.batch_size = 64;
  cfg.learning_rate = 0.01;
  cfg.seed = seed;
  return cfg;
}

TEST(TrainRecommender, LossDecreasesOverEpochs) {
  int pairs = 0, decreasing = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticConfig sc;
    sc.seed = seed;
    const auto ds =
        split_validation(generate_synthetic(sc).dataset, 0.9, derive_seed(seed, Phase::kSplit));
    TrainConfig cfg;
    cfg.seed = seed;
    const auto r = train_baseline(ds, ModelVariant::kMf, cfg);
    ASSERT_EQ(r.history.size(), cfg.epochs);
    for (std::size_t e = 1; e < r.history.size(); ++e) {
      ++pairs;
      decreasing += r.history[e].train_loss <= r.history[e - 1].train_loss;
    }
  }
  EXPECT_GE(decreasing, 0.8 * pairs);
}

TEST(TrainRecommender, UnitPropensitiesReduceToMf) {
  const auto ds = small_world(1);
  const auto cfg = small_config(1);
  const PropensityTable ones(PropensityMode::kItemPopularity, Eigen::MatrixXd::Ones(1, 20), {}, 0.05);
  const auto init = init_free_model(ds, ModelVariant::kMf, cfg);
  const auto mf = train_recommender(ds, init, {Objective::kNaive, nullptr, 1.0}, cfg);
  const auto ips = train_recommender(ds, init, {Objective::kInversePropensity, &ones, 1.0}, cfg);
  EXPECT_EQ(mf.model.item_embeddings, ips.model.item_embeddings);
  EXPECT_EQ(mf.model.user_embeddings, ips.model.user_embeddings);
}

TEST(TrainRecommender, SelectsBestSnipsEpoch) {
  const auto ds = small_world(2);
  const auto r = train_baseline(ds, ModelVariant::kMf, small_config(2));
  double best = -1;
  std::size_t best_epoch = 0;
  for (const auto& rec : r.history) {
    if (rec.snips_dcg3 > best) {
      best = rec.snips_dcg3;
      best_epoch = rec.epoch;
    }
  }
  EXPECT_EQ(r.best_epoch, best_epoch);
  EXPECT_EQ(r.best_score, best);
}

TEST(TrainRecommender, NonFiniteLossNamesTheBatch) {
  const auto ds = small_world(3);
  auto cfg = small_config(3);
  cfg.learning_rate = 1e300;
  try {
    train_baseline(ds, ModelVariant::kMf, cfg);
    FAIL() << "expected a training error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(TrainRecommender, SampledNegativesAvoidObservedPairs) {
  const auto ds = small_world(4);
  auto cfg = small_config(4);
  cfg.unobserved_per_user = 3;
  const auto a = train_baseline(ds, ModelVariant::kMf, cfg);
  const auto b = train_baseline(ds, ModelVariant::kMf, cfg);
  EXPECT_EQ(a.model.item_embeddings, b.model.item_embeddings);
  EXPECT_NE(a.model.item_embeddings, train_baseline(ds, ModelVariant::kMf, small_config(4))
                                         .model.item_embeddings);
}

TEST(TrainBaseline, VariantsRunAndAreDeterministic) {
  const auto ds = small_world(5);
  const auto cfg = small_config(5);
  for (auto v : {ModelVariant::kMf, ModelVariant::kWmf, ModelVariant::kRelMf}) {
    const auto a = train_baseline(ds, v, cfg);
    const auto b = train_baseline(ds, v, cfg);
    EXPECT_EQ(a.model.item_embeddings, b.model.item_embeddings);
    EXPECT_EQ(a.model.user_embeddings, b.model.user_embeddings);
    EXPECT_FALSE(a.model.tied());
    EXPECT_TRUE(a.model.item_embeddings.allFinite());
  }
  EXPECT_THROW(train_baseline(ds, ModelVariant::kCips, cfg), std::invalid_argument);
}

TEST(TrainCips, DeterministicAndTied) {
  const auto ds = small_world(6);
  const auto cfg = small_config(6);
  const auto a = train_cips(ds, cfg);
  const auto b = train_cips(ds, cfg);
  ASSERT_TRUE(a.model.tied());
  EXPECT_TRUE(*a.model.encoder == *b.model.encoder);
  EXPECT_EQ(a.model.item_embeddings, b.model.item_embeddings);
  EXPECT_TRUE(a.propensities == b.propensities);
  EXPECT_GE(a.iterations_run, 1u);
  EXPECT_LE(a.iterations_run, cfg.outer_iterations);
  EXPECT_EQ(a.propensities.mode(), PropensityMode::kCluster);
  EXPECT_EQ(a.cluster_of.size(), ds.num_users);
  // The returned user embeddings are the encoder outputs.
  EXPECT_TRUE(a.model.user_embeddings.isApprox(a.model.encoder->encode_all(ds.user_features)));
}

TEST(TrainCips, SingleOuterIteration) {
  const auto ds = small_world(7);
  auto cfg = small_config(7);
  cfg.outer_iterations = 1;
  const auto r = train_cips(ds, cfg);
  EXPECT_EQ(r.iterations_run, 1u);
  EXPECT_EQ(r.history.size(), cfg.epochs);
}

TEST(TrainCips, UserLevelDegenerateMode) {
  const auto ds = small_world(8);
  auto cfg = small_config(8);
  cfg.num_clusters = ds.num_users;
  const auto r = train_cips(ds, cfg);
  EXPECT_TRUE(r.propensities == user_level_propensity(ds, cfg.clip_floor));
}

TEST(TrainCips, SingleClusterRuns) {
  const auto ds = small_world(9);
  auto cfg = small_config(9);
  cfg.num_clusters = 1;
  const auto r = train_cips(ds, cfg);
  EXPECT_EQ(r.propensities.num_rows(), 1u);
  for (auto c : r.cluster_of) EXPECT_EQ(c, 0);
}

TEST(TrainConfig, Validation) {
  const auto ds = small_world(1);
  auto cfg = small_config(1);
  cfg.validate(ds);
  cfg.num_clusters = ds.num_users + 1;
  EXPECT_THROW(cfg.validate(ds), std::invalid_argument);
  cfg = small_config(1);
  cfg.learning_rate = 0;
  EXPECT_THROW(cfg.validate(ds), std::invalid_argument);
  cfg = small_config(1);
  cfg.clip_floor = 1.0;
  EXPECT_THROW(cfg.validate(ds), std::invalid_argument);
  cfg = small_config(1);
  cfg.relmf_exponent = 0.0;
  EXPECT_THROW(cfg.validate(ds), std::invalid_argument);
}

}  // namespace
}  // namespace cips
