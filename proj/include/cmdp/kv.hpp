#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cmdp {

struct ConfigInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Nested key-value text: "# comment" lines, "[section]" headers that prefix later keys
/// with "section.", and "key = value" entries. Leading comment lines form the header.
class KvFile {
 public:
  static KvFile parse(std::string_view text);
  static KvFile load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string require(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;

  /// Keys under `prefix.` with the prefix stripped.
  std::map<std::string, std::string> section(const std::string& prefix) const;
  const std::map<std::string, std::string>& values() const { return values_; }
  const std::string& header() const { return header_; }

  /// Throws ConfigInvalid naming the first key that is neither listed nor under a listed "prefix.*".
  void check_known(const std::set<std::string>& allowed) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  std::string str() const;

 private:
  std::map<std::string, std::string> values_;
  std::string header_;
};

std::vector<std::string> split_ws(std::string_view text);
std::string trim(std::string_view text);

}  // namespace cmdp
