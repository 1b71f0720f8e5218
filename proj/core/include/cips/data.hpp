#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cips {

/// One observed (user, item, label) record. Ids are 0-based in memory.
struct Interaction {
  std::int32_t user = 0;
  std::int32_t item = 0;
  std::uint8_t label = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Malformed input at a known line of a rating log.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Binary indicator rows x_u: which items each user touched in train.
/// Stored as sorted item lists; dense() materializes one row on demand.
class UserFeatures {
 public:
  UserFeatures() = default;
  UserFeatures(std::size_t num_users, std::size_t num_items,
               std::span<const Interaction> train);

  std::size_t num_users() const { return rows_.size(); }
  std::size_t num_items() const { return num_items_; }
  std::span<const std::int32_t> items(std::size_t user) const { return rows_[user]; }
  bool contains(std::size_t user, std::int32_t item) const;
  Eigen::VectorXd dense(std::size_t user) const;

  friend bool operator==(const UserFeatures&, const UserFeatures&) = default;

 private:
  std::size_t num_items_ = 0;
  std::vector<std::vector<std::int32_t>> rows_;
};

/// Implicit-feedback data: a biased (MNAR) train/validation pair plus an
/// unbiased test set gathered under uniform exposure.
struct InteractionDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test_mar;
  UserFeatures user_features;

  void rebuild_features();
  /// Throws std::invalid_argument if any id, label or uniqueness invariant fails.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Rating logs
// ---------------------------------------------------------------------------

/// Parses `user item rating` lines (1-based ids, rating in [1,5]). Records with
/// rating >= positive_threshold get label 1, the rest label 0.
std::vector<Interaction> parse_rating_log(std::istream& in, double positive_threshold,
                                          const std::string& source_name = "<stream>");

InteractionDataset load_rating_log(std::istream& train_source, std::istream& test_source,
                                   double positive_threshold = 4.0);
InteractionDataset load_rating_log(const std::filesystem::path& train_path,
                                   const std::filesystem::path& test_path,
                                   double positive_threshold = 4.0);

/// Writes records back in the on-disk format. Label 1 is written as rating 5,
/// label 0 as rating 1, so reloading with any threshold in (1,5] is lossless.
void write_rating_log(std::ostream& out, std::span<const Interaction> records);

/// Moves a seeded uniform (1 - ratio) share of train into validation and
/// rebuilds user_features from what remains.
InteractionDataset split_validation(InteractionDataset dataset, double ratio,
                                    std::uint64_t seed);

/// count[v] = number of train records on item v, any label.
std::vector<std::int64_t> item_popularity(const InteractionDataset& dataset);

// ---------------------------------------------------------------------------
// Synthetic MNAR worlds
// ---------------------------------------------------------------------------

struct SyntheticConfig {
  std::size_t num_users = 200;
  std::size_t num_items = 50;
  std::size_t num_true_clusters = 4;
  /// Items per user in the uniformly exposed test set.
  std::size_t test_items_per_user = 10;
  double exposure_min = 0.02;
  double exposure_max = 0.6;
  double relevance_min = 0.05;
  double relevance_max = 0.9;
  std::uint64_t seed = 0;
};

/// Parameters that generated a synthetic world. Rows are indexed by true
/// cluster, columns by item.
struct SyntheticGroundTruth {
  std::vector<std::int32_t> true_cluster;
  Eigen::MatrixXd exposure_prob;
  Eigen::MatrixXd relevance_prob;

  std::size_t num_clusters() const { return static_cast<std::size_t>(exposure_prob.rows()); }
};

struct SyntheticWorld {
  InteractionDataset dataset;
  SyntheticGroundTruth truth;
};

/// Draw order, all from one stream seeded by derive_seed(seed, kSynthetic):
/// user clusters, exposure table, relevance table, train pairs row by row,
/// then per-user test items.
SyntheticWorld generate_synthetic(const SyntheticConfig& config);

/// `cluster item exposure relevance` lines (items file) and `user cluster`
/// lines (users file); values written as hex floats so they reload exactly.
void write_ground_truth(std::ostream& items_out, std::ostream& users_out,
                        const SyntheticGroundTruth& truth);
SyntheticGroundTruth read_ground_truth(std::istream& items_in, std::istream& users_in);

}  // namespace cips
