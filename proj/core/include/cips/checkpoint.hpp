#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "cips/clustering.hpp"
#include "cips/model.hpp"

namespace cips {

// Checkpoints are line-oriented text:
//
//   cips-checkpoint 1
//   kind cluster|recommender
//   variant mf|wmf|relmf|cips          (recommender only)
//   distance euclidean|squared         (when cluster blocks are present)
//   block <name> <rows> <cols>
//   <rows lines of <cols> hex floats>
//   ...
//   end
//
// Cluster blocks: encoder.w1 encoder.b1 encoder.w2 encoder.b2 centers.
// Recommender checkpoints add item_embeddings and user_embeddings, plus the
// encoder blocks when the user side is tied. Hex floats make reloads exact.

inline constexpr int kCheckpointVersion = 1;

void save_cluster_model(std::ostream& out, const ClusterModel& model);
ClusterModel load_cluster_model(std::istream& in);

struct LoadedModel {
  RecModel model;
  std::optional<ClusterModel> clusters;
};

void save_rec_model(std::ostream& out, const RecModel& model,
                    const ClusterModel* clusters = nullptr);
LoadedModel load_rec_model(std::istream& in);

void save_rec_model(const std::filesystem::path& path, const RecModel& model,
                    const ClusterModel* clusters = nullptr);
LoadedModel load_rec_model(const std::filesystem::path& path);

}  // namespace cips
