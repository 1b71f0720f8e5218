#include <benchmark/benchmark.h>

#include <vector>

#include "cips/clustering.hpp"
#include "cips/data.hpp"
#include "cips/eval.hpp"
#include "cips/propensity.hpp"
#include "cips/random.hpp"
#include "cips/recsys.hpp"

namespace cips {
namespace {

void BM_DcgAtK(benchmark::State& state) {
  Rng rng(1);
  std::vector<std::uint8_t> rel(state.range(0));
  for (auto& r : rel) r = rng.bernoulli(0.3);
  for (auto _ : state) benchmark::DoNotOptimize(dcg_at_k(rel, 5));
}
BENCHMARK(BM_DcgAtK)->Arg(10)->Arg(100);

void BM_SoftAssign(benchmark::State& state) {
  Rng rng(2);
  Eigen::MatrixXd h(state.range(0), 32), c(8, 32);
  for (auto& x : h.reshaped()) x = rng.uniform(-1, 1);
  for (auto& x : c.reshaped()) x = rng.uniform(-1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(soft_assign(h, c));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SoftAssign)->Arg(200)->Arg(2000);

void BM_ClusterPropensity(benchmark::State& state) {
  SyntheticConfig sc;
  const auto world = generate_synthetic(sc);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cluster_propensity(world.dataset, world.truth.true_cluster));
  }
}
BENCHMARK(BM_ClusterPropensity);

// One pass of the tied propensity-weighted objective and its gradient over
// the whole training set, the inner step of every training epoch.
void BM_IpsObjectiveEpoch(benchmark::State& state) {
  SyntheticConfig sc;
  const auto world = generate_synthetic(sc);
  const auto& ds = world.dataset;
  TrainConfig tc;
  Rng rng(3);
  RecModel model;
  model.variant = ModelVariant::kCips;
  model.encoder = Encoder::glorot(ds.num_items, tc.hidden_dim, tc.embedding_dim, rng);
  model.item_embeddings.resize(ds.num_items, tc.embedding_dim);
  for (auto& x : model.item_embeddings.reshaped()) x = rng.uniform(-0.1, 0.1);
  const auto props = cluster_propensity(ds, world.truth.true_cluster);
  const ObjectiveSpec spec{Objective::kInversePropensity, &props, 1.0};
  for (auto _ : state) {
    auto grads = RecGradients::zeros_like(model);
    benchmark::DoNotOptimize(objective_sum(model, ds.user_features, ds.train, spec, &grads));
  }
  state.SetItemsProcessed(state.iterations() * ds.train.size());
}
BENCHMARK(BM_IpsObjectiveEpoch);

}  // namespace
}  // namespace cips

BENCHMARK_MAIN();
