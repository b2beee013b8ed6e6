#include "cmdp/kv.hpp"

#include <fstream>
#include <sstream>

namespace cmdp {

std::string trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

KvFile KvFile::parse(std::string_view text) {
  KvFile kv;
  std::istringstream in{std::string(text)};
  std::string prefix;
  bool in_header = true;
  int lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty()) {
      in_header = false;
      continue;
    }
    if (line[0] == '#') {
      if (in_header) kv.header_ += trim(line.substr(1)) + "\n";
      continue;
    }
    in_header = false;
    if (auto hash = line.find(" #"); hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigInvalid("line " + std::to_string(lineno) + ": unterminated section");
      prefix = trim(line.substr(1, line.size() - 2));
      if (!prefix.empty()) prefix += ".";
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigInvalid("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigInvalid("line " + std::to_string(lineno) + ": empty key");
    kv.values_[prefix + key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KvFile KvFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::optional<std::string> KvFile::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KvFile::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw ConfigInvalid("missing key: " + key);
  return *v;
}

std::string KvFile::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

std::int64_t KvFile::get_int(const std::string& key, std::int64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    auto x = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return x;
  } catch (const std::exception&) {
    throw ConfigInvalid("key " + key + ": expected an integer, got '" + *v + "'");
  }
}

double KvFile::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    double x = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return x;
  } catch (const std::exception&) {
    throw ConfigInvalid("key " + key + ": expected a number, got '" + *v + "'");
  }
}

std::map<std::string, std::string> KvFile::section(const std::string& prefix) const {
  std::map<std::string, std::string> out;
  const std::string p = prefix + ".";
  for (auto it = values_.lower_bound(p); it != values_.end() && it->first.compare(0, p.size(), p) == 0; ++it)
    out[it->first.substr(p.size())] = it->second;
  return out;
}

void KvFile::check_known(const std::set<std::string>& allowed) const {
  for (const auto& [key, value] : values_) {
    if (allowed.count(key)) continue;
    bool ok = false;
    for (const auto& a : allowed)
      if (a.size() > 2 && a.ends_with(".*") && key.compare(0, a.size() - 1, a, 0, a.size() - 1) == 0) ok = true;
    if (!ok) throw ConfigInvalid("unknown key: " + key);
  }
}

std::string KvFile::str() const {
  std::string out;
  std::istringstream header(header_);
  for (std::string line; std::getline(header, line);) out += "# " + line + "\n";
  if (!header_.empty()) out += "\n";
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace cmdp
