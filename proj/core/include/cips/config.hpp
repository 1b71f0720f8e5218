#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cips/data.hpp"
#include "cips/eval.hpp"
#include "cips/model.hpp"
#include "cips/recsys.hpp"

namespace cips {

/// Flat `key = value` run configuration. Only keys from a fixed schema are
/// accepted; anything not set falls back to the schema default. Later
/// assignments (file lines, then command-line overrides) win.
class RunConfig {
 public:
  struct Key {
    const char* name;
    const char* default_value;
    const char* help;
  };
  static const std::vector<Key>& schema();

  static RunConfig parse(std::istream& in, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  /// Throws std::invalid_argument for keys outside the schema.
  void set(std::string_view key, std::string_view value);
  bool is_set(std::string_view key) const;
  std::string get(std::string_view key) const;

  /// Explicitly set keys, sorted, one `key = value` per line.
  std::string to_text() const;

  std::uint64_t get_u64(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;
  double get_double(std::string_view key) const;
  std::vector<std::size_t> get_size_list(std::string_view key) const;
  std::vector<std::uint64_t> get_u64_list(std::string_view key) const;

  // Typed views, each validated.
  ModelVariant variant() const;
  std::vector<std::uint64_t> seeds() const;
  std::filesystem::path out_dir() const;
  std::filesystem::path train_path() const;
  std::filesystem::path test_path() const;
  SyntheticConfig synthetic() const;
  TrainConfig train(std::uint64_t seed) const;
  SegmentConfig segments() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace cips
