#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "cips/clustering.hpp"
#include "cips/data.hpp"

namespace cips {

enum class ModelVariant { kMf, kWmf, kRelMf, kCips };

const char* to_string(ModelVariant variant);
/// Accepts "mf", "wmf", "relmf", "cips"; throws std::invalid_argument otherwise.
ModelVariant parse_variant(std::string_view name);

/// Dot-product scorer. The user side is either a free table (baselines) or the
/// output of a shared encoder applied to each user's feature row (C-IPS). In
/// the tied case `user_embeddings` caches the encoder outputs and must be
/// refreshed whenever the encoder changes.
struct RecModel {
  ModelVariant variant = ModelVariant::kMf;
  std::optional<Encoder> encoder;
  Eigen::MatrixXd user_embeddings;  // N x d
  Eigen::MatrixXd item_embeddings;  // M x d

  bool tied() const { return encoder.has_value(); }
  std::size_t num_users() const { return static_cast<std::size_t>(user_embeddings.rows()); }
  std::size_t num_items() const { return static_cast<std::size_t>(item_embeddings.rows()); }
  std::size_t embedding_dim() const { return static_cast<std::size_t>(item_embeddings.cols()); }

  void refresh_user_embeddings(const UserFeatures& features);

  /// s_u . s_v. Throws std::out_of_range on bad ids.
  double logit(std::int64_t user, std::int64_t item) const;
};

/// Numerically safe logistic function.
double sigmoid(double z);

/// sigmoid(s_u . s_v), kept strictly inside (0,1) even where the logistic
/// function rounds to 0 or 1 in double precision.
double predict(const RecModel& model, std::int64_t user, std::int64_t item);

/// log(1 + exp(z)) without overflow. -log(sigmoid(z)) == softplus(-z).
double softplus(double z);

}  // namespace cips
