#include "cips/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace cips {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    const auto piece = trim(s.substr(0, comma));
    if (!piece.empty()) out.emplace_back(piece);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view text) {
  std::uint64_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw std::invalid_argument("config: '" + std::string(key) + "' expects a non-negative integer, got '" +
                                std::string(text) + "'");
  }
  return value;
}

}  // namespace

const std::vector<RunConfig::Key>& RunConfig::schema() {
  static const std::vector<Key> keys = {
      {"seed", "0", "root seed; every random phase derives from it"},
      {"seeds", "", "comma-separated seed list; overrides seed when set"},
      {"out", "out", "output directory"},
      {"data_dir", "", "directory holding train.txt/test.txt (defaults to out)"},
      {"train_path", "", "MNAR rating log (defaults to data_dir/train.txt)"},
      {"test_path", "", "MAR rating log (defaults to data_dir/test.txt)"},
      {"checkpoint", "", "checkpoint to evaluate (defaults to out/<variant>_seed<seed>.ckpt)"},
      {"positive_threshold", "4", "ratings at or above this become positives"},
      {"validation_ratio", "0.9", "share of MNAR records kept for training"},
      {"variant", "cips", "mf | wmf | relmf | cips"},
      {"k", "4", "number of user clusters"},
      {"k_list", "2,4,6,8,10", "cluster counts visited by sweep-k"},
      {"embedding_dim", "16", "user/item embedding width"},
      {"hidden_dim", "64", "encoder hidden width"},
      {"learning_rate", "0.001", "recommender Adam step size"},
      {"epochs", "20", "recommender epochs per outer iteration"},
      {"outer_iterations", "3", "cluster/propensity/train alternations"},
      {"batch_size", "256", "mini-batch size for both phases"},
      {"clip_floor", "0.05", "lower bound on propensities"},
      {"weight_decay", "0", "L2 coefficient on weights and embeddings"},
      {"wmf_positive_weight", "5", "positive-pair weight for wmf"},
      {"relmf_exponent", "0.5", "popularity exponent for relmf and selection propensities"},
      {"cluster_epochs", "20", "clustering epochs per outer iteration"},
      {"cluster_learning_rate", "0.001", "clustering Adam step size"},
      {"kmeans_iterations", "20", "Lloyd iterations when seeding centers"},
      {"kmeans_restarts", "1", "k-means++ restarts when seeding centers"},
      {"distance", "euclidean", "euclidean | squared (assignment kernel)"},
      {"propensity_normalization", "items", "items (max over items) | clusters (max over clusters)"},
      {"unobserved_per_user", "0", "sampled zero-label pairs per user per epoch"},
      {"selection_propensity", "item_popularity", "item_popularity | training"},
      {"non_popular_items", "500", "size of the least-popular evaluation segment"},
      {"synth_users", "200", "synthetic users"},
      {"synth_items", "50", "synthetic items"},
      {"synth_clusters", "4", "synthetic true clusters"},
      {"synth_test_items", "10", "uniformly exposed test items per synthetic user"},
      {"exposure_min", "0.02", "synthetic exposure probability range"},
      {"exposure_max", "0.6", ""},
      {"relevance_min", "0.05", "synthetic relevance probability range"},
      {"relevance_max", "0.9", ""},
  };
  return keys;
}

namespace {

const RunConfig::Key* find_key(std::string_view name) {
  for (const auto& k : RunConfig::schema()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

}  // namespace

RunConfig RunConfig::parse(std::istream& in, const std::string& source) {
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(source, line_no, "expected `key = value`");
    }
    const auto key = trim(view.substr(0, eq));
    const auto value = trim(view.substr(eq + 1));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    try {
      config.set(key, value);
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse(in, path.string());
}

void RunConfig::set(std::string_view key, std::string_view value) {
  if (find_key(key) == nullptr) {
    throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
  }
  values_.insert_or_assign(std::string(key), std::string(trim(value)));
}

bool RunConfig::is_set(std::string_view key) const { return values_.find(key) != values_.end(); }

std::string RunConfig::get(std::string_view key) const {
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  const auto* k = find_key(key);
  if (k == nullptr) throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
  return k->default_value;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& [key, value] : values_) out << key << " = " << value << '\n';
  return out.str();
}

std::uint64_t RunConfig::get_u64(std::string_view key) const { return to_u64(key, get(key)); }

std::size_t RunConfig::get_size(std::string_view key) const {
  return static_cast<std::size_t>(get_u64(key));
}

double RunConfig::get_double(std::string_view key) const {
  const auto text = get(key);
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw std::invalid_argument("config: '" + std::string(key) + "' expects a number, got '" + text + "'");
  }
  return value;
}

std::vector<std::size_t> RunConfig::get_size_list(std::string_view key) const {
  std::vector<std::size_t> out;
  for (const auto& piece : split_list(get(key))) {
    out.push_back(static_cast<std::size_t>(to_u64(key, piece)));
  }
  return out;
}

std::vector<std::uint64_t> RunConfig::get_u64_list(std::string_view key) const {
  std::vector<std::uint64_t> out;
  for (const auto& piece : split_list(get(key))) out.push_back(to_u64(key, piece));
  return out;
}

ModelVariant RunConfig::variant() const { return parse_variant(get("variant")); }

std::vector<std::uint64_t> RunConfig::seeds() const {
  auto list = get_u64_list("seeds");
  if (list.empty()) list.push_back(get_u64("seed"));
  return list;
}

std::filesystem::path RunConfig::out_dir() const {
  const auto out = get("out");
  if (out.empty()) throw std::invalid_argument("config: 'out' must not be empty");
  return out;
}

std::filesystem::path RunConfig::train_path() const {
  if (const auto p = get("train_path"); !p.empty()) return p;
  const auto dir = get("data_dir");
  return (dir.empty() ? out_dir() : std::filesystem::path(dir)) / "train.txt";
}

std::filesystem::path RunConfig::test_path() const {
  if (const auto p = get("test_path"); !p.empty()) return p;
  const auto dir = get("data_dir");
  return (dir.empty() ? out_dir() : std::filesystem::path(dir)) / "test.txt";
}

SyntheticConfig RunConfig::synthetic() const {
  SyntheticConfig s;
  s.num_users = get_size("synth_users");
  s.num_items = get_size("synth_items");
  s.num_true_clusters = get_size("synth_clusters");
  s.test_items_per_user = get_size("synth_test_items");
  s.exposure_min = get_double("exposure_min");
  s.exposure_max = get_double("exposure_max");
  s.relevance_min = get_double("relevance_min");
  s.relevance_max = get_double("relevance_max");
  s.seed = seeds().front();
  return s;
}

TrainConfig RunConfig::train(std::uint64_t seed) const {
  TrainConfig t;
  t.embedding_dim = get_size("embedding_dim");
  t.hidden_dim = get_size("hidden_dim");
  t.num_clusters = get_size("k");
  t.learning_rate = get_double("learning_rate");
  t.epochs = get_size("epochs");
  t.outer_iterations = get_size("outer_iterations");
  t.batch_size = get_size("batch_size");
  t.clip_floor = get_double("clip_floor");
  t.seed = seed;
  t.weight_decay = get_double("weight_decay");
  t.wmf_positive_weight = get_double("wmf_positive_weight");
  t.relmf_exponent = get_double("relmf_exponent");
  t.cluster_epochs = get_size("cluster_epochs");
  t.cluster_learning_rate = get_double("cluster_learning_rate");
  t.kmeans_iterations = get_size("kmeans_iterations");
  t.kmeans_restarts = get_size("kmeans_restarts");
  t.unobserved_per_user = get_size("unobserved_per_user");

  const auto distance = get("distance");
  if (distance == "euclidean") {
    t.distance = DistanceKind::kEuclidean;
  } else if (distance == "squared") {
    t.distance = DistanceKind::kSquaredEuclidean;
  } else {
    throw std::invalid_argument("config: distance must be euclidean or squared");
  }
  const auto norm = get("propensity_normalization");
  if (norm == "items") {
    t.normalization = PropensityNormalization::kMaxOverItems;
  } else if (norm == "clusters") {
    t.normalization = PropensityNormalization::kMaxOverClusters;
  } else {
    throw std::invalid_argument("config: propensity_normalization must be items or clusters");
  }
  const auto selection = get("selection_propensity");
  if (selection == "item_popularity") {
    t.selection = SelectionPropensity::kItemPopularity;
  } else if (selection == "training") {
    t.selection = SelectionPropensity::kTrainingTable;
  } else {
    throw std::invalid_argument("config: selection_propensity must be item_popularity or training");
  }
  return t;
}

SegmentConfig RunConfig::segments() const {
  SegmentConfig s;
  s.non_popular_items = get_size("non_popular_items");
  return s;
}

}  // namespace cips
