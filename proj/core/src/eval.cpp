#include "cips/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <tuple>

namespace cips {

double dcg_at_k(std::span<const std::uint8_t> ranked_relevance, std::size_t k) {
  double dcg = 0.0;
  const std::size_t n = std::min(k, ranked_relevance.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked_relevance[i]) dcg += 1.0 / std::log2(static_cast<double>(i + 2));
  }
  return dcg;
}

std::optional<double> recall_at_k(std::span<const std::uint8_t> ranked_relevance,
                                  std::size_t total_relevant, std::size_t k) {
  if (total_relevant == 0) return std::nullopt;
  const std::size_t n = std::min(k, ranked_relevance.size());
  const auto hits = std::count_if(ranked_relevance.begin(), ranked_relevance.begin() + n,
                                  [](std::uint8_t r) { return r != 0; });
  return static_cast<double>(hits) / static_cast<double>(total_relevant);
}

std::optional<double> average_precision_at_k(std::span<const std::uint8_t> ranked_relevance,
                                             std::size_t total_relevant, std::size_t k) {
  if (total_relevant == 0) return std::nullopt;
  const std::size_t n = std::min(k, ranked_relevance.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!ranked_relevance[i]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(std::min(k, total_relevant));
}

double snips_estimate(std::span<const double> values, std::span<const double> propensities) {
  if (values.empty()) throw std::invalid_argument("snips_estimate: empty input");
  if (values.size() != propensities.size()) {
    throw std::invalid_argument("snips_estimate: values and propensities differ in length");
  }
  double numerator = 0.0;
  double denominator = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(propensities[i] > 0.0)) {
      throw std::invalid_argument("snips_estimate: propensities must be positive");
    }
    numerator += values[i] / propensities[i];
    denominator += 1.0 / propensities[i];
  }
  const double estimate = numerator / denominator;
  // Rounding can push a convex combination a hair outside its hull.
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return std::clamp(estimate, *lo, *hi);
}

const char* to_string(Metric metric) {
  switch (metric) {
    case Metric::kDcg:
      return "DCG";
    case Metric::kRecall:
      return "Recall";
    case Metric::kMap:
      return "MAP";
  }
  return "unknown";
}

void EvalReport::add(ReportRow row) {
  for (const auto& r : rows_) {
    if (r.model == row.model && r.metric == row.metric && r.k == row.k &&
        r.segment == row.segment && r.seed == row.seed) {
      throw std::invalid_argument("EvalReport: duplicate row for " + row.model + " " +
                                  row.metric + "@" + std::to_string(row.k) + " " + row.segment);
    }
  }
  rows_.push_back(std::move(row));
}

void EvalReport::append(const EvalReport& other) {
  for (const auto& r : other.rows_) add(r);
}

std::optional<double> EvalReport::find(const std::string& model, const std::string& metric,
                                       std::size_t k, const std::string& segment) const {
  for (const auto& r : rows_) {
    if (r.model == model && r.metric == metric && r.k == k && r.segment == segment) return r.value;
  }
  return std::nullopt;
}

void EvalReport::write_csv(std::ostream& out, bool header) const {
  if (header) out << "model,metric,K,segment,value,seed\n";
  char buf[64];
  for (const auto& r : rows_) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    out << r.model << ',' << r.metric << ',' << r.k << ',' << r.segment << ',' << buf << ','
        << r.seed << '\n';
  }
}

std::vector<std::int32_t> least_popular_items(const InteractionDataset& dataset,
                                              std::size_t count) {
  const auto popularity = item_popularity(dataset);
  std::vector<std::int32_t> items(dataset.num_items);
  std::iota(items.begin(), items.end(), 0);
  std::stable_sort(items.begin(), items.end(), [&](std::int32_t a, std::int32_t b) {
    return popularity[a] < popularity[b];
  });
  items.resize(std::min(count, items.size()));
  std::sort(items.begin(), items.end());
  return items;
}

namespace {

struct MetricSums {
  std::vector<double> dcg, recall, map;
  std::size_t dcg_users = 0;
  std::size_t relevant_users = 0;
};

void evaluate_segment(const RecModel& model, const InteractionDataset& dataset,
                      const std::vector<char>& in_segment, const SegmentConfig& segments,
                      const std::string& segment_name, const std::string& model_name,
                      std::uint64_t seed, EvalReport& report) {
  std::map<std::int32_t, std::vector<Interaction>> by_user;
  for (const auto& r : dataset.test_mar) {
    if (in_segment[static_cast<std::size_t>(r.item)]) by_user[r.user].push_back(r);
  }
  if (by_user.empty()) {
    throw std::invalid_argument("evaluate: segment '" + segment_name + "' has no test records");
  }

  const auto& cutoffs = segments.cutoffs;
  MetricSums sums{std::vector<double>(cutoffs.size(), 0.0),
                  std::vector<double>(cutoffs.size(), 0.0),
                  std::vector<double>(cutoffs.size(), 0.0)};
  std::vector<std::pair<double, std::int32_t>> scored;
  std::vector<std::uint8_t> relevance;
  for (const auto& [user, records] : by_user) {
    scored.clear();
    std::size_t total_relevant = 0;
    for (const auto& r : records) {
      scored.emplace_back(model.logit(user, r.item), r.item);
      total_relevant += r.label;
    }
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scored[a].first != scored[b].first) return scored[a].first > scored[b].first;
      return scored[a].second < scored[b].second;
    });
    relevance.clear();
    for (auto i : order) relevance.push_back(records[i].label);

    ++sums.dcg_users;
    if (total_relevant > 0) ++sums.relevant_users;
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      sums.dcg[c] += dcg_at_k(relevance, cutoffs[c]);
      if (total_relevant > 0) {
        sums.recall[c] += *recall_at_k(relevance, total_relevant, cutoffs[c]);
        sums.map[c] += *average_precision_at_k(relevance, total_relevant, cutoffs[c]);
      }
    }
  }

  auto mean = [](double total, std::size_t n) { return n ? total / static_cast<double>(n) : 0.0; };
  for (std::size_t c = 0; c < cutoffs.size(); ++c) {
    report.add({model_name, to_string(Metric::kDcg), cutoffs[c], segment_name,
                mean(sums.dcg[c], sums.dcg_users), seed});
    report.add({model_name, to_string(Metric::kRecall), cutoffs[c], segment_name,
                mean(sums.recall[c], sums.relevant_users), seed});
    report.add({model_name, to_string(Metric::kMap), cutoffs[c], segment_name,
                mean(sums.map[c], sums.relevant_users), seed});
  }
}

}  // namespace

EvalReport evaluate(const RecModel& model, const InteractionDataset& dataset,
                    const SegmentConfig& segments, const std::string& model_name,
                    std::uint64_t seed) {
  if (dataset.test_mar.empty()) throw std::invalid_argument("evaluate: MAR test set is empty");
  EvalReport report;
  std::vector<char> everything(dataset.num_items, 1);
  evaluate_segment(model, dataset, everything, segments, kSegmentAll, model_name, seed, report);

  std::vector<char> tail(dataset.num_items, 0);
  for (auto v : least_popular_items(dataset, segments.non_popular_items)) tail[v] = 1;
  evaluate_segment(model, dataset, tail, segments, kSegmentNonPopular, model_name, seed, report);
  return report;
}

ValidationScores validate_snips(const RecModel& model, const InteractionDataset& dataset,
                                const PropensityTable& propensities, std::size_t k) {
  ValidationScores scores;
  if (dataset.validation.empty()) return scores;

  std::map<std::int32_t, std::vector<const Interaction*>> by_user;
  for (const auto& r : dataset.validation) by_user[r.user].push_back(&r);

  std::vector<double> gain_values, gain_props, acc_values, acc_props;
  Eigen::VectorXd logits(static_cast<Eigen::Index>(dataset.num_items));
  for (const auto& [user, records] : by_user) {
    logits = model.item_embeddings * model.user_embeddings.row(user).transpose();
    const auto seen = dataset.user_features.items(static_cast<std::size_t>(user));
    for (const auto* r : records) {
      const double p = propensities.lookup(user, r->item);
      const double z = logits[r->item];
      acc_values.push_back((z > 0.0) == (r->label != 0) ? 1.0 : 0.0);
      acc_props.push_back(p);
      if (!r->label) continue;

      // 1-based rank among items not in the user's train row.
      std::size_t rank = 1;
      std::size_t s = 0;
      for (Eigen::Index v = 0; v < logits.size(); ++v) {
        while (s < seen.size() && seen[s] < v) ++s;
        if (s < seen.size() && seen[s] == v) continue;
        if (logits[v] > z || (logits[v] == z && v < r->item)) ++rank;
      }
      gain_values.push_back(rank <= k ? 1.0 / std::log2(static_cast<double>(rank + 1)) : 0.0);
      gain_props.push_back(p);
    }
  }
  if (!gain_values.empty()) scores.snips_dcg = snips_estimate(gain_values, gain_props);
  scores.snips_accuracy = snips_estimate(acc_values, acc_props);
  return scores;
}

}  // namespace cips
