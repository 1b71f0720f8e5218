#include "cips/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cips {

const char* to_string(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::kMf:
      return "mf";
    case ModelVariant::kWmf:
      return "wmf";
    case ModelVariant::kRelMf:
      return "relmf";
    case ModelVariant::kCips:
      return "cips";
  }
  return "unknown";
}

ModelVariant parse_variant(std::string_view name) {
  if (name == "mf") return ModelVariant::kMf;
  if (name == "wmf") return ModelVariant::kWmf;
  if (name == "relmf") return ModelVariant::kRelMf;
  if (name == "cips") return ModelVariant::kCips;
  throw std::invalid_argument("unknown model variant '" + std::string(name) +
                              "' (expected mf, wmf, relmf or cips)");
}

void RecModel::refresh_user_embeddings(const UserFeatures& features) {
  if (encoder) user_embeddings = encoder->encode_all(features);
}

double RecModel::logit(std::int64_t user, std::int64_t item) const {
  if (user < 0 || user >= user_embeddings.rows()) {
    throw std::out_of_range("user id " + std::to_string(user) + " out of range");
  }
  if (item < 0 || item >= item_embeddings.rows()) {
    throw std::out_of_range("item id " + std::to_string(item) + " out of range");
  }
  return user_embeddings.row(user).dot(item_embeddings.row(item));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double predict(const RecModel& model, std::int64_t user, std::int64_t item) {
  constexpr double kLow = std::numeric_limits<double>::min();
  constexpr double kHigh = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  const double y = sigmoid(model.logit(user, item));
  return y < kLow ? kLow : (y > kHigh ? kHigh : y);
}

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace cips
