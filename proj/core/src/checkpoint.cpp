#include "cips/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cips {

namespace {

constexpr const char* kMagic = "cips-checkpoint";

void write_block(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
  out << "block " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%a", m(i, j));
      if (j) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

const char* distance_name(DistanceKind d) {
  return d == DistanceKind::kEuclidean ? "euclidean" : "squared";
}

DistanceKind parse_distance(const std::string& s) {
  if (s == "euclidean") return DistanceKind::kEuclidean;
  if (s == "squared") return DistanceKind::kSquaredEuclidean;
  throw std::runtime_error("checkpoint: unknown distance '" + s + "'");
}

void write_cluster_blocks(std::ostream& out, const ClusterModel& model) {
  write_block(out, "encoder.w1", model.encoder.w1);
  write_block(out, "encoder.b1", model.encoder.b1);
  write_block(out, "encoder.w2", model.encoder.w2);
  write_block(out, "encoder.b2", model.encoder.b2);
  write_block(out, "centers", model.centers);
}

struct Container {
  std::map<std::string, std::string> tags;
  std::map<std::string, Eigen::MatrixXd> blocks;

  const std::string& tag(const std::string& key) const {
    auto it = tags.find(key);
    if (it == tags.end()) throw std::runtime_error("checkpoint: missing '" + key + "' line");
    return it->second;
  }
  const Eigen::MatrixXd& block(const std::string& name) const {
    auto it = blocks.find(name);
    if (it == blocks.end()) throw std::runtime_error("checkpoint: missing block '" + name + "'");
    return it->second;
  }
  bool has_block(const std::string& name) const { return blocks.contains(name); }
};

Container read_container(std::istream& in) {
  Container c;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: empty input");
  {
    std::istringstream head(line);
    std::string magic;
    int version = 0;
    if (!(head >> magic >> version) || magic != kMagic) {
      throw std::runtime_error("checkpoint: not a cips checkpoint");
    }
    if (version != kCheckpointVersion) {
      throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
  }
  bool ended = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "end") {
      ended = true;
      break;
    }
    if (key != "block") {
      std::string value;
      fields >> value;
      c.tags[key] = value;
      continue;
    }
    std::string name;
    Eigen::Index rows = -1;
    Eigen::Index cols = -1;
    if (!(fields >> name >> rows >> cols) || rows < 0 || cols < 0) {
      throw std::runtime_error("checkpoint: malformed block header '" + line + "'");
    }
    Eigen::MatrixXd m(rows, cols);
    std::string token;
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (!(in >> token)) throw std::runtime_error("checkpoint: truncated block '" + name + "'");
        char* end = nullptr;
        m(i, j) = std::strtod(token.c_str(), &end);
        if (end == token.c_str() || *end != '\0') {
          throw std::runtime_error("checkpoint: bad number in block '" + name + "'");
        }
      }
    }
    std::getline(in, line);  // rest of the last row
    c.blocks[name] = std::move(m);
  }
  if (!ended) throw std::runtime_error("checkpoint: missing 'end' line");
  return c;
}

ClusterModel cluster_from(const Container& c) {
  ClusterModel model;
  model.distance = parse_distance(c.tag("distance"));
  model.encoder.w1 = c.block("encoder.w1");
  model.encoder.b1 = c.block("encoder.b1");
  model.encoder.w2 = c.block("encoder.w2");
  model.encoder.b2 = c.block("encoder.b2");
  model.centers = c.block("centers");
  const auto& e = model.encoder;
  if (e.b1.size() != e.w1.rows() || e.w2.cols() != e.w1.rows() || e.b2.size() != e.w2.rows() ||
      model.centers.cols() != e.w2.rows()) {
    throw std::runtime_error("checkpoint: inconsistent encoder/center shapes");
  }
  return model;
}

}  // namespace

void save_cluster_model(std::ostream& out, const ClusterModel& model) {
  out << kMagic << ' ' << kCheckpointVersion << '\n';
  out << "kind cluster\n";
  out << "distance " << distance_name(model.distance) << '\n';
  write_cluster_blocks(out, model);
  out << "end\n";
}

ClusterModel load_cluster_model(std::istream& in) {
  const auto c = read_container(in);
  if (c.tag("kind") != "cluster") throw std::runtime_error("checkpoint: not a cluster model");
  return cluster_from(c);
}

void save_rec_model(std::ostream& out, const RecModel& model, const ClusterModel* clusters) {
  out << kMagic << ' ' << kCheckpointVersion << '\n';
  out << "kind recommender\n";
  out << "variant " << to_string(model.variant) << '\n';
  if (clusters != nullptr) {
    out << "distance " << distance_name(clusters->distance) << '\n';
    write_cluster_blocks(out, *clusters);
  } else if (model.tied()) {
    out << "distance euclidean\n";
    write_block(out, "encoder.w1", model.encoder->w1);
    write_block(out, "encoder.b1", model.encoder->b1);
    write_block(out, "encoder.w2", model.encoder->w2);
    write_block(out, "encoder.b2", model.encoder->b2);
  }
  write_block(out, "item_embeddings", model.item_embeddings);
  write_block(out, "user_embeddings", model.user_embeddings);
  out << "end\n";
}

LoadedModel load_rec_model(std::istream& in) {
  const auto c = read_container(in);
  if (c.tag("kind") != "recommender") throw std::runtime_error("checkpoint: not a recommender");
  LoadedModel loaded;
  loaded.model.variant = parse_variant(c.tag("variant"));
  loaded.model.item_embeddings = c.block("item_embeddings");
  loaded.model.user_embeddings = c.block("user_embeddings");
  if (loaded.model.item_embeddings.cols() != loaded.model.user_embeddings.cols()) {
    throw std::runtime_error("checkpoint: user and item embedding widths differ");
  }
  if (c.has_block("encoder.w1")) {
    Encoder e;
    e.w1 = c.block("encoder.w1");
    e.b1 = c.block("encoder.b1");
    e.w2 = c.block("encoder.w2");
    e.b2 = c.block("encoder.b2");
    loaded.model.encoder = std::move(e);
    if (c.has_block("centers")) loaded.clusters = cluster_from(c);
  }
  if (loaded.model.variant == ModelVariant::kCips && !loaded.model.tied()) {
    throw std::runtime_error("checkpoint: cips model without encoder blocks");
  }
  return loaded;
}

void save_rec_model(const std::filesystem::path& path, const RecModel& model,
                    const ClusterModel* clusters) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_rec_model(out, model, clusters);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

LoadedModel load_rec_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_rec_model(in);
}

}  // namespace cips
