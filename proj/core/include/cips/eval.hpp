#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cips/data.hpp"
#include "cips/model.hpp"
#include "cips/propensity.hpp"

namespace cips {

// ---------------------------------------------------------------------------
// Ranking metrics over a relevance list already sorted by score (binary gains).
// ---------------------------------------------------------------------------

/// sum_{i<=k} rel_i / log2(i + 1).
double dcg_at_k(std::span<const std::uint8_t> ranked_relevance, std::size_t k);

/// hits in top k / total_relevant; nullopt when total_relevant is 0.
std::optional<double> recall_at_k(std::span<const std::uint8_t> ranked_relevance,
                                  std::size_t total_relevant, std::size_t k);

/// (sum_{i<=k} rel_i * precision@i) / min(k, total_relevant); nullopt when
/// total_relevant is 0.
std::optional<double> average_precision_at_k(std::span<const std::uint8_t> ranked_relevance,
                                             std::size_t total_relevant, std::size_t k);

/// Self-normalized IPS: (sum m_i / p_i) / (sum 1 / p_i).
double snips_estimate(std::span<const double> values, std::span<const double> propensities);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class Metric { kDcg, kRecall, kMap };
const char* to_string(Metric metric);

inline constexpr const char* kSegmentAll = "all";
inline constexpr const char* kSegmentNonPopular = "non_popular";

struct ReportRow {
  std::string model;
  std::string metric;
  std::size_t k = 0;
  std::string segment;
  double value = 0.0;
  std::uint64_t seed = 0;
};

/// Rows keyed by (model, metric, k, segment, seed); adding a duplicate key throws.
class EvalReport {
 public:
  void add(ReportRow row);
  void append(const EvalReport& other);
  const std::vector<ReportRow>& rows() const { return rows_; }
  std::optional<double> find(const std::string& model, const std::string& metric, std::size_t k,
                             const std::string& segment) const;

  /// Header `model,metric,K,segment,value,seed`, values printed with 17
  /// significant digits.
  void write_csv(std::ostream& out, bool header = true) const;

 private:
  std::vector<ReportRow> rows_;
};

struct SegmentConfig {
  /// Size of the least-popular item segment (by train frequency).
  std::size_t non_popular_items = 500;
  std::vector<std::size_t> cutoffs = {1, 3, 5};
};

/// The `count` least popular items by train frequency, ties toward smaller ids.
std::vector<std::int32_t> least_popular_items(const InteractionDataset& dataset,
                                              std::size_t count);

/// Per user with at least one test record: ranks that user's MAR test items
/// by score (descending, ties by item id) and averages DCG, Recall and MAP at
/// each cutoff. Recall and MAP skip users with no relevant items. Emits rows
/// for the "all" and "non_popular" segments.
EvalReport evaluate(const RecModel& model, const InteractionDataset& dataset,
                    const SegmentConfig& segments, const std::string& model_name,
                    std::uint64_t seed);

struct ValidationScores {
  double snips_dcg = 0.0;
  double snips_accuracy = 0.0;
};

/// SNIPS estimates on the biased validation split. For each positive
/// validation pair the value is its DCG gain at `k` when ranked among all
/// items absent from the user's train row; the accuracy value is whether the
/// predicted label (score > 0.5) matches, over every validation pair.
ValidationScores validate_snips(const RecModel& model, const InteractionDataset& dataset,
                                const PropensityTable& propensities, std::size_t k = 3);

}  // namespace cips
