#include "cips/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "cips/random.hpp"

namespace cips {

namespace {

std::uint64_t pair_key(std::int32_t user, std::int32_t item) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(user)) << 32) |
         static_cast<std::uint32_t>(item);
}

void check_split(const std::vector<Interaction>& records, std::size_t num_users,
                 std::size_t num_items, const char* name) {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(records.size());
  for (const auto& r : records) {
    if (r.user < 0 || static_cast<std::size_t>(r.user) >= num_users || r.item < 0 ||
        static_cast<std::size_t>(r.item) >= num_items) {
      throw std::invalid_argument(std::string(name) + ": id out of range (user " +
                                  std::to_string(r.user) + ", item " +
                                  std::to_string(r.item) + ")");
    }
    if (r.label > 1) {
      throw std::invalid_argument(std::string(name) + ": label must be 0 or 1");
    }
    if (!seen.insert(pair_key(r.user, r.item)).second) {
      throw std::invalid_argument(std::string(name) + ": duplicate pair (user " +
                                  std::to_string(r.user) + ", item " +
                                  std::to_string(r.item) + ")");
    }
  }
}

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

UserFeatures::UserFeatures(std::size_t num_users, std::size_t num_items,
                           std::span<const Interaction> train)
    : num_items_(num_items), rows_(num_users) {
  for (const auto& r : train) rows_[r.user].push_back(r.item);
  for (auto& row : rows_) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
}

bool UserFeatures::contains(std::size_t user, std::int32_t item) const {
  const auto& row = rows_.at(user);
  return std::binary_search(row.begin(), row.end(), item);
}

Eigen::VectorXd UserFeatures::dense(std::size_t user) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_items_));
  for (auto v : rows_.at(user)) x[v] = 1.0;
  return x;
}

void InteractionDataset::rebuild_features() {
  user_features = UserFeatures(num_users, num_items, train);
}

void InteractionDataset::validate() const {
  check_split(train, num_users, num_items, "train");
  check_split(validation, num_users, num_items, "validation");
  check_split(test_mar, num_users, num_items, "test_mar");

  std::unordered_set<std::uint64_t> train_pairs;
  for (const auto& r : train) train_pairs.insert(pair_key(r.user, r.item));
  for (const auto& r : validation) {
    if (train_pairs.contains(pair_key(r.user, r.item))) {
      throw std::invalid_argument("validation pair also present in train");
    }
  }
  if (user_features.num_users() != num_users || user_features.num_items() != num_items) {
    throw std::invalid_argument("user_features shape does not match dataset");
  }
  if (!(user_features == UserFeatures(num_users, num_items, train))) {
    throw std::invalid_argument("user_features out of sync with train");
  }
}

std::vector<Interaction> parse_rating_log(std::istream& in, double positive_threshold,
                                          const std::string& source_name) {
  std::vector<Interaction> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    long long user = 0;
    long long item = 0;
    double rating = 0.0;
    std::string extra;
    if (!(fields >> user >> item >> rating) || (fields >> extra)) {
      throw ParseError(source_name, line_no, "expected `user item rating`");
    }
    if (user < 1 || item < 1 || user > INT32_MAX || item > INT32_MAX) {
      throw ParseError(source_name, line_no, "ids must be positive 1-based integers");
    }
    if (!(rating >= 1.0 && rating <= 5.0)) {
      throw std::invalid_argument(source_name + ":" + std::to_string(line_no) +
                                  ": rating outside [1,5]");
    }
    records.push_back({static_cast<std::int32_t>(user - 1),
                       static_cast<std::int32_t>(item - 1),
                       static_cast<std::uint8_t>(rating >= positive_threshold ? 1 : 0)});
  }
  if (records.empty()) {
    throw std::invalid_argument(source_name + ": no records");
  }
  return records;
}

InteractionDataset load_rating_log(std::istream& train_source, std::istream& test_source,
                                   double positive_threshold) {
  InteractionDataset ds;
  ds.train = parse_rating_log(train_source, positive_threshold, "train");
  ds.test_mar = parse_rating_log(test_source, positive_threshold, "test");
  for (const auto* split : {&ds.train, &ds.test_mar}) {
    for (const auto& r : *split) {
      ds.num_users = std::max(ds.num_users, static_cast<std::size_t>(r.user) + 1);
      ds.num_items = std::max(ds.num_items, static_cast<std::size_t>(r.item) + 1);
    }
  }
  ds.rebuild_features();
  ds.validate();
  return ds;
}

InteractionDataset load_rating_log(const std::filesystem::path& train_path,
                                   const std::filesystem::path& test_path,
                                   double positive_threshold) {
  std::ifstream train(train_path);
  if (!train) throw std::runtime_error("cannot open " + train_path.string());
  std::ifstream test(test_path);
  if (!test) throw std::runtime_error("cannot open " + test_path.string());
  return load_rating_log(train, test, positive_threshold);
}

void write_rating_log(std::ostream& out, std::span<const Interaction> records) {
  for (const auto& r : records) {
    out << (r.user + 1) << '\t' << (r.item + 1) << '\t' << (r.label ? 5 : 1) << '\n';
  }
}

InteractionDataset split_validation(InteractionDataset dataset, double ratio,
                                    std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("split ratio must lie in (0,1)");
  }
  if (dataset.train.empty()) throw std::invalid_argument("cannot split an empty train set");

  const std::size_t n = dataset.train.size();
  const auto keep = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));

  std::vector<char> moved(n, 0);
  for (std::size_t i = keep; i < n; ++i) moved[order[i]] = 1;

  std::vector<Interaction> kept;
  kept.reserve(keep);
  for (std::size_t i = 0; i < n; ++i) {
    (moved[i] ? dataset.validation : kept).push_back(dataset.train[i]);
  }
  dataset.train = std::move(kept);
  dataset.rebuild_features();
  return dataset;
}

std::vector<std::int64_t> item_popularity(const InteractionDataset& dataset) {
  std::vector<std::int64_t> counts(dataset.num_items, 0);
  for (const auto& r : dataset.train) ++counts[r.item];
  return counts;
}

SyntheticWorld generate_synthetic(const SyntheticConfig& config) {
  if (config.num_users < 1 || config.num_items < 1 || config.num_true_clusters < 1) {
    throw std::invalid_argument("synthetic counts must be at least 1");
  }
  if (config.num_true_clusters > config.num_users) {
    throw std::invalid_argument("more true clusters than users");
  }
  if (!(config.exposure_min > 0.0 && config.exposure_min <= config.exposure_max &&
        config.exposure_max <= 1.0)) {
    throw std::invalid_argument("exposure range must satisfy 0 < min <= max <= 1");
  }
  if (!(config.relevance_min >= 0.0 && config.relevance_min <= config.relevance_max &&
        config.relevance_max <= 1.0)) {
    throw std::invalid_argument("relevance range must satisfy 0 <= min <= max <= 1");
  }

  const auto n_users = config.num_users;
  const auto n_items = config.num_items;
  const auto n_clusters = config.num_true_clusters;
  Rng rng(derive_seed(config.seed, Phase::kSynthetic));

  SyntheticWorld world;
  auto& truth = world.truth;
  truth.true_cluster.resize(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    truth.true_cluster[u] = static_cast<std::int32_t>(u < n_clusters ? u : rng.below(n_clusters));
  }
  rng.shuffle(std::span(truth.true_cluster));

  const auto rows = static_cast<Eigen::Index>(n_clusters);
  const auto cols = static_cast<Eigen::Index>(n_items);
  truth.exposure_prob.resize(rows, cols);
  truth.relevance_prob.resize(rows, cols);
  for (Eigen::Index c = 0; c < rows; ++c) {
    for (Eigen::Index v = 0; v < cols; ++v) {
      truth.exposure_prob(c, v) = rng.uniform(config.exposure_min, config.exposure_max);
    }
  }
  for (Eigen::Index c = 0; c < rows; ++c) {
    for (Eigen::Index v = 0; v < cols; ++v) {
      truth.relevance_prob(c, v) = rng.uniform(config.relevance_min, config.relevance_max);
    }
  }

  auto& ds = world.dataset;
  ds.num_users = n_users;
  ds.num_items = n_items;
  for (std::size_t u = 0; u < n_users; ++u) {
    const auto c = truth.true_cluster[u];
    for (Eigen::Index v = 0; v < cols; ++v) {
      if (rng.bernoulli(truth.exposure_prob(c, v))) {
        const bool label = rng.bernoulli(truth.relevance_prob(c, v));
        ds.train.push_back({static_cast<std::int32_t>(u), static_cast<std::int32_t>(v),
                            static_cast<std::uint8_t>(label)});
      }
    }
  }

  const std::size_t per_user = std::min(config.test_items_per_user, n_items);
  std::vector<std::int32_t> items(n_items);
  for (std::size_t u = 0; u < n_users; ++u) {
    std::iota(items.begin(), items.end(), 0);
    // Partial Fisher-Yates: the first per_user slots become a uniform sample.
    for (std::size_t i = 0; i < per_user; ++i) {
      std::swap(items[i], items[i + rng.below(n_items - i)]);
    }
    std::vector<std::int32_t> picked(items.begin(), items.begin() + per_user);
    std::sort(picked.begin(), picked.end());
    const auto c = truth.true_cluster[u];
    for (auto v : picked) {
      const bool label = rng.bernoulli(truth.relevance_prob(c, v));
      ds.test_mar.push_back({static_cast<std::int32_t>(u), v, static_cast<std::uint8_t>(label)});
    }
  }
  ds.rebuild_features();
  return world;
}

void write_ground_truth(std::ostream& items_out, std::ostream& users_out,
                        const SyntheticGroundTruth& truth) {
  for (Eigen::Index c = 0; c < truth.exposure_prob.rows(); ++c) {
    for (Eigen::Index v = 0; v < truth.exposure_prob.cols(); ++v) {
      items_out << c << ' ' << v << ' ' << hex(truth.exposure_prob(c, v)) << ' '
                << hex(truth.relevance_prob(c, v)) << '\n';
    }
  }
  for (std::size_t u = 0; u < truth.true_cluster.size(); ++u) {
    users_out << u << ' ' << truth.true_cluster[u] << '\n';
  }
}

SyntheticGroundTruth read_ground_truth(std::istream& items_in, std::istream& users_in) {
  struct Row {
    long long cluster, item;
    double exposure, relevance;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  long long max_cluster = -1;
  long long max_item = -1;
  while (std::getline(items_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string e, r;
    Row row{};
    if (!(fields >> row.cluster >> row.item >> e >> r) || row.cluster < 0 || row.item < 0) {
      throw ParseError("truth items", line_no, "expected `cluster item exposure relevance`");
    }
    row.exposure = std::strtod(e.c_str(), nullptr);
    row.relevance = std::strtod(r.c_str(), nullptr);
    max_cluster = std::max(max_cluster, row.cluster);
    max_item = std::max(max_item, row.item);
    rows.push_back(row);
  }
  SyntheticGroundTruth truth;
  truth.exposure_prob = Eigen::MatrixXd::Zero(max_cluster + 1, max_item + 1);
  truth.relevance_prob = Eigen::MatrixXd::Zero(max_cluster + 1, max_item + 1);
  for (const auto& row : rows) {
    truth.exposure_prob(row.cluster, row.item) = row.exposure;
    truth.relevance_prob(row.cluster, row.item) = row.relevance;
  }
  line_no = 0;
  while (std::getline(users_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    long long user = 0;
    long long cluster = 0;
    if (!(fields >> user >> cluster) || user != static_cast<long long>(truth.true_cluster.size()) ||
        cluster < 0 || cluster > max_cluster) {
      throw ParseError("truth users", line_no, "expected consecutive `user cluster` lines");
    }
    truth.true_cluster.push_back(static_cast<std::int32_t>(cluster));
  }
  return truth;
}

}  // namespace cips
