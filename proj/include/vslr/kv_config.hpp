#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace vslr {

// "key = value" text, one pair per line; '#' starts a comment. Later keys
// overwrite earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::optional<long long> get_int(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  // Throws a config error naming the first key outside `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

  std::string to_string() const;

 private:
  std::string source_;
  std::map<std::string, std::string> values_;
};

}  // namespace vslr
