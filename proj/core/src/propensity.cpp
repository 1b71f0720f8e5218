#include "cips/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace cips {

const char* to_string(PropensityMode mode) {
  switch (mode) {
    case PropensityMode::kCluster:
      return "cluster";
    case PropensityMode::kUserLevel:
      return "user_level";
    case PropensityMode::kItemPopularity:
      return "item_popularity";
  }
  return "unknown";
}

PropensityTable::PropensityTable(PropensityMode mode, Eigen::MatrixXd values,
                                 std::vector<std::int32_t> cluster_of, double clip_floor)
    : mode_(mode),
      values_(std::move(values)),
      cluster_of_(std::move(cluster_of)),
      clip_floor_(clip_floor) {
  if (!(clip_floor > 0.0 && clip_floor < 1.0)) {
    throw std::invalid_argument("clip floor must lie in (0,1)");
  }
  if (!values_.allFinite() || (values_.size() > 0 && (values_.minCoeff() < 0.0 || values_.maxCoeff() > 1.0))) {
    throw std::invalid_argument("propensity values must lie in [0,1]");
  }
  if (mode_ == PropensityMode::kCluster) {
    for (auto c : cluster_of_) {
      if (c < 0 || c >= values_.rows()) throw std::invalid_argument("cluster id without a row");
    }
  }
}

std::size_t PropensityTable::row_of(std::int64_t user) const {
  switch (mode_) {
    case PropensityMode::kCluster:
      if (user < 0 || static_cast<std::size_t>(user) >= cluster_of_.size()) break;
      return static_cast<std::size_t>(cluster_of_[static_cast<std::size_t>(user)]);
    case PropensityMode::kUserLevel:
      if (user < 0 || user >= values_.rows()) break;
      return static_cast<std::size_t>(user);
    case PropensityMode::kItemPopularity:
      if (user < 0) break;
      return 0;
  }
  throw std::out_of_range("propensity lookup: user id " + std::to_string(user) + " out of range");
}

double PropensityTable::raw(std::int64_t user, std::int64_t item) const {
  const auto row = row_of(user);
  if (item < 0 || item >= values_.cols()) {
    throw std::out_of_range("propensity lookup: item id " + std::to_string(item) + " out of range");
  }
  return values_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(item));
}

double PropensityTable::lookup(std::int64_t user, std::int64_t item) const {
  return std::max(raw(user, item), clip_floor_);
}

PropensityTable PropensityTable::with_clip_floor(double floor) const {
  return PropensityTable(mode_, values_, cluster_of_, floor);
}

bool operator==(const PropensityTable& a, const PropensityTable& b) {
  return a.mode_ == b.mode_ && a.clip_floor_ == b.clip_floor_ &&
         a.cluster_of_ == b.cluster_of_ && a.values_.rows() == b.values_.rows() &&
         a.values_.cols() == b.values_.cols() && a.values_ == b.values_;
}

namespace {

Eigen::MatrixXd count_by_row(const InteractionDataset& dataset,
                             std::span<const std::int32_t> row_of_user, Eigen::Index rows) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(dataset.num_items));
  for (const auto& r : dataset.train) counts(row_of_user[r.user], r.item) += 1.0;
  return counts;
}

}  // namespace

PropensityTable cluster_propensity(const InteractionDataset& dataset,
                                   std::span<const std::int32_t> cluster_of, double clip_floor,
                                   PropensityNormalization normalization) {
  if (cluster_of.size() != dataset.num_users) {
    throw std::invalid_argument("cluster_propensity: need one cluster id per user");
  }
  std::int32_t max_id = -1;
  for (auto c : cluster_of) {
    if (c < 0) throw std::invalid_argument("cluster_propensity: negative cluster id");
    max_id = std::max(max_id, c);
  }
  const Eigen::Index k = max_id + 1;
  std::vector<char> occupied(static_cast<std::size_t>(k), 0);
  for (auto c : cluster_of) occupied[static_cast<std::size_t>(c)] = 1;
  for (Eigen::Index c = 0; c < k; ++c) {
    if (!occupied[static_cast<std::size_t>(c)]) {
      throw std::invalid_argument("cluster_propensity: cluster " + std::to_string(c) +
                                  " has no users");
    }
  }

  Eigen::MatrixXd values = count_by_row(dataset, cluster_of, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    if (values.row(c).maxCoeff() <= 0.0) {
      throw std::invalid_argument("cluster_propensity: cluster " + std::to_string(c) +
                                  " has no interactions");
    }
  }
  if (normalization == PropensityNormalization::kMaxOverItems) {
    for (Eigen::Index c = 0; c < k; ++c) values.row(c) /= values.row(c).maxCoeff();
  } else {
    for (Eigen::Index v = 0; v < values.cols(); ++v) {
      const double top = values.col(v).maxCoeff();
      if (top > 0.0) values.col(v) /= top;
    }
  }
  return PropensityTable(PropensityMode::kCluster, std::move(values),
                         std::vector<std::int32_t>(cluster_of.begin(), cluster_of.end()),
                         clip_floor);
}

PropensityTable user_level_propensity(const InteractionDataset& dataset, double clip_floor) {
  std::vector<std::int32_t> identity(dataset.num_users);
  for (std::size_t u = 0; u < identity.size(); ++u) identity[u] = static_cast<std::int32_t>(u);
  Eigen::MatrixXd values =
      count_by_row(dataset, identity, static_cast<Eigen::Index>(dataset.num_users));
  for (Eigen::Index u = 0; u < values.rows(); ++u) {
    const double top = values.row(u).maxCoeff();
    if (top <= 0.0) {
      throw std::invalid_argument("user_level_propensity: user " + std::to_string(u) +
                                  " has no interactions");
    }
    values.row(u) /= top;
  }
  return PropensityTable(PropensityMode::kUserLevel, std::move(values), {}, clip_floor);
}

PropensityTable item_popularity_propensity(const InteractionDataset& dataset, double exponent,
                                           double clip_floor) {
  if (!(exponent > 0.0 && exponent <= 1.0)) {
    throw std::invalid_argument("item_popularity_propensity: exponent must lie in (0,1]");
  }
  const auto counts = item_popularity(dataset);
  const auto top = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  if (top <= 0) throw std::invalid_argument("item_popularity_propensity: all counts are zero");
  Eigen::MatrixXd values(1, static_cast<Eigen::Index>(counts.size()));
  for (std::size_t v = 0; v < counts.size(); ++v) {
    values(0, static_cast<Eigen::Index>(v)) =
        std::pow(static_cast<double>(counts[v]) / static_cast<double>(top), exponent);
  }
  return PropensityTable(PropensityMode::kItemPopularity, std::move(values), {}, clip_floor);
}

std::vector<std::int32_t> compact_clusters(std::span<const std::int32_t> cluster_of) {
  std::unordered_map<std::int32_t, std::int32_t> relabel;
  std::vector<std::int32_t> out;
  out.reserve(cluster_of.size());
  for (auto c : cluster_of) {
    auto [it, inserted] = relabel.try_emplace(c, static_cast<std::int32_t>(relabel.size()));
    out.push_back(it->second);
  }
  return out;
}

void write_propensity_table(std::ostream& out, const PropensityTable& table) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", table.clip_floor());
  out << "# mode " << to_string(table.mode()) << " floor " << buf << " K " << table.num_rows()
      << " items " << table.num_items() << '\n';
  for (Eigen::Index r = 0; r < table.values().rows(); ++r) {
    for (Eigen::Index v = 0; v < table.values().cols(); ++v) {
      std::snprintf(buf, sizeof(buf), "%.17g", table.values()(r, v));
      out << r << ' ' << v << ' ' << buf << '\n';
    }
  }
}

}  // namespace cips
