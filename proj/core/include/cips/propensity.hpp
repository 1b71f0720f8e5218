#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cips/data.hpp"

namespace cips {

enum class PropensityMode { kCluster, kUserLevel, kItemPopularity };

/// How cluster-level counts are normalized.
enum class PropensityNormalization {
  kMaxOverItems,     // count[c][v] / max_v' count[c][v']
  kMaxOverClusters,  // count[c][v] / max_c' count[c'][v]
};

const char* to_string(PropensityMode mode);

/// Observation probabilities indexed by (row, item). Rows are clusters,
/// users, or a single shared row, depending on the mode. Stored values are
/// unclipped; lookup() applies the floor.
class PropensityTable {
 public:
  PropensityTable() = default;
  PropensityTable(PropensityMode mode, Eigen::MatrixXd values,
                  std::vector<std::int32_t> cluster_of, double clip_floor);

  PropensityMode mode() const { return mode_; }
  const Eigen::MatrixXd& values() const { return values_; }
  const std::vector<std::int32_t>& cluster_of() const { return cluster_of_; }
  double clip_floor() const { return clip_floor_; }
  std::size_t num_rows() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t num_items() const { return static_cast<std::size_t>(values_.cols()); }

  /// Row used for user u. Throws std::out_of_range on a bad id.
  std::size_t row_of(std::int64_t user) const;
  double raw(std::int64_t user, std::int64_t item) const;
  /// max(raw(u, v), clip_floor).
  double lookup(std::int64_t user, std::int64_t item) const;

  PropensityTable with_clip_floor(double floor) const;

  friend bool operator==(const PropensityTable&, const PropensityTable&);

 private:
  PropensityMode mode_ = PropensityMode::kItemPopularity;
  Eigen::MatrixXd values_;
  std::vector<std::int32_t> cluster_of_;
  double clip_floor_ = 0.05;
};

inline constexpr double kDefaultClipFloor = 0.05;

/// Per-cluster item frequency over train (both labels), normalized by the
/// cluster's most frequent item. Cluster ids must be dense in [0, K).
PropensityTable cluster_propensity(const InteractionDataset& dataset,
                                   std::span<const std::int32_t> cluster_of,
                                   double clip_floor = kDefaultClipFloor,
                                   PropensityNormalization normalization =
                                       PropensityNormalization::kMaxOverItems);

/// Every user is its own stratum.
PropensityTable user_level_propensity(const InteractionDataset& dataset,
                                      double clip_floor = kDefaultClipFloor);

/// (count[v] / max count)^exponent, shared by all users.
PropensityTable item_popularity_propensity(const InteractionDataset& dataset, double exponent,
                                           double clip_floor = kDefaultClipFloor);

/// Relabels cluster ids to 0..K'-1 in order of first appearance by user id,
/// dropping clusters with no members.
std::vector<std::int32_t> compact_clusters(std::span<const std::int32_t> cluster_of);

/// Header line `# mode <m> floor <f> K <rows> items <M>`, then one
/// `row item propensity` line per entry.
void write_propensity_table(std::ostream& out, const PropensityTable& table);

}  // namespace cips
