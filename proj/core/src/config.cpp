#include "mscg/config.hpp"

#include "mscg/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace mscg {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool valid_key(const std::string& k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  bool prev_dot = false;
  for (char c : k) {
    if (c == '.') {
      if (prev_dot) return false;
      prev_dot = true;
      continue;
    }
    prev_dot = false;
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
      return false;
  }
  return true;
}

void check_value(const std::string& v, const std::string& key) {
  int depth = 0;
  bool inq = false;
  for (char c : v) {
    if (c == '"') inq = !inq;
    if (inq) continue;
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (depth < 0) break;
  }
  if (depth != 0 || inq)
    throw ConfigError("config key '" + key + "': unbalanced value '" + v + "'");
}

// Splits a bracketed list body at top-level commas.
std::vector<std::string> split_top(const std::string& body) {
  std::vector<std::string> out;
  int depth = 0;
  bool inq = false;
  std::string cur;
  for (char c : body) {
    if (c == '"') inq = !inq;
    if (!inq) {
      if (c == '[') ++depth;
      if (c == ']') --depth;
      if (c == ',' && depth == 0) {
        out.push_back(trim(cur));
        cur.clear();
        continue;
      }
    }
    cur += c;
  }
  std::string last = trim(cur);
  if (!last.empty()) out.push_back(last);
  return out;
}

std::string list_body(const std::string& v, const std::string& key) {
  std::string s = trim(v);
  if (s.size() < 2 || s.front() != '[' || s.back() != ']')
    throw ConfigError("config key '" + key + "': expected a list, got '" + v + "'");
  return s.substr(1, s.size() - 2);
}

double parse_double(const std::string& v, const std::string& key) {
  const char* c = v.c_str();
  char* end = nullptr;
  double x = std::strtod(c, &end);
  if (end == c || *end != '\0')
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return x;
}

std::int64_t parse_int(const std::string& v, const std::string& key) {
  const char* c = v.c_str();
  char* end = nullptr;
  long long x = std::strtoll(c, &end, 10);
  if (end == c || *end != '\0')
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return x;
}

} // namespace

ConfigTree ConfigTree::parse(std::istream& is) {
  ConfigTree t;
  std::string line, prefix;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string raw;
    bool inq = false;
    for (char c : line) {
      if (c == '"') inq = !inq;
      if (c == '#' && !inq) break;
      raw += c;
    }
    std::string s = trim(raw);
    if (s.empty()) continue;
    std::string where = "config line " + std::to_string(lineno);

    if (s.front() == '[' && s.find('=') == std::string::npos) {
      if (s.back() != ']')
        throw ConfigError(where + ": malformed table header '" + s + "'");
      prefix = trim(s.substr(1, s.size() - 2));
      if (!valid_key(prefix))
        throw ConfigError(where + ": invalid table name '" + prefix + "'");
      continue;
    }

    size_t eq = std::string::npos;
    inq = false;
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') inq = !inq;
      if (s[i] == '=' && !inq) {
        eq = i;
        break;
      }
    }
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected 'key = value', got '" + s + "'");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (!prefix.empty()) key = prefix + "." + key;
    if (!valid_key(key))
      throw ConfigError(where + ": invalid key '" + key + "'");
    if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
    check_value(value, key);
    if (t.has(key))
      throw ConfigError(where + ": duplicate key '" + key + "'");
    t.items_.emplace_back(key, value);
  }
  return t;
}

ConfigTree ConfigTree::parse_text(const std::string& text) {
  std::istringstream is(text);
  return parse(is);
}

ConfigTree ConfigTree::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file: " + path);
  return parse(is);
}

void ConfigTree::serialize(std::ostream& os) const {
  for (const auto& [k, v] : items_)
    if (k.find('.') == std::string::npos) os << k << " = " << v << "\n";
  std::vector<std::string> sections;
  for (const auto& [k, v] : items_) {
    size_t dot = k.find('.');
    if (dot == std::string::npos) continue;
    std::string sec = k.substr(0, dot);
    if (std::find(sections.begin(), sections.end(), sec) == sections.end())
      sections.push_back(sec);
  }
  for (const std::string& sec : sections) {
    os << "\n[" << sec << "]\n";
    for (const auto& [k, v] : items_)
      if (k.size() > sec.size() + 1 && k.compare(0, sec.size(), sec) == 0 &&
          k[sec.size()] == '.')
        os << k.substr(sec.size() + 1) << " = " << v << "\n";
  }
}

std::string ConfigTree::serialize_text() const {
  std::ostringstream os;
  serialize(os);
  return os.str();
}

void ConfigTree::set_path(const std::string& key, const std::string& raw) {
  if (!valid_key(key)) throw ConfigError("invalid config key '" + key + "'");
  std::string value = trim(raw);
  if (value.empty()) throw ConfigError("empty value for config key '" + key + "'");
  check_value(value, key);
  for (auto& [k, v] : items_)
    if (k == key) {
      v = value;
      return;
    }
  items_.emplace_back(key, value);
}

const std::string* ConfigTree::find(const std::string& key) const {
  for (const auto& [k, v] : items_)
    if (k == key) {
      used_.insert(key);
      return &v;
    }
  return nullptr;
}

bool ConfigTree::has(const std::string& key) const {
  for (const auto& [k, v] : items_)
    if (k == key) return true;
  return false;
}

void ConfigTree::require(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing required config key '" + key + "'");
}

double ConfigTree::get_double(const std::string& key, double fallback) const {
  const std::string* v = find(key);
  return v ? parse_double(*v, key) : fallback;
}

std::int64_t ConfigTree::get_int(const std::string& key,
                                 std::int64_t fallback) const {
  const std::string* v = find(key);
  return v ? parse_int(*v, key) : fallback;
}

std::uint64_t ConfigTree::get_u64(const std::string& key,
                                  std::uint64_t fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  const char* c = v->c_str();
  char* end = nullptr;
  unsigned long long x = std::strtoull(c, &end, 10);
  if (end == c || *end != '\0' || v->front() == '-')
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" +
                      *v + "'");
  return x;
}

bool ConfigTree::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true") return true;
  if (*v == "false") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + *v +
                    "'");
}

std::string ConfigTree::get_str(const std::string& key,
                                const std::string& fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (v->size() >= 2 && v->front() == '"' && v->back() == '"')
    return v->substr(1, v->size() - 2);
  return *v;
}

std::vector<double> ConfigTree::get_list(const std::string& key,
                                         const std::vector<double>& fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const std::string& e : split_top(list_body(*v, key)))
    out.push_back(parse_double(e, key));
  return out;
}

std::vector<std::int64_t> ConfigTree::get_int_list(
    const std::string& key, const std::vector<std::int64_t>& fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::vector<std::int64_t> out;
  for (const std::string& e : split_top(list_body(*v, key)))
    out.push_back(parse_int(e, key));
  return out;
}

std::vector<std::pair<int, int>> ConfigTree::get_cells(
    const std::string& key,
    const std::vector<std::pair<int, int>>& fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::vector<std::pair<int, int>> out;
  for (const std::string& e : split_top(list_body(*v, key))) {
    std::vector<std::string> ij = split_top(list_body(e, key));
    if (ij.size() != 2)
      throw ConfigError("config key '" + key + "': expected [i, j] pairs, got '" + e +
                        "'");
    out.emplace_back(int(parse_int(ij[0], key)), int(parse_int(ij[1], key)));
  }
  return out;
}

void ConfigTree::finish() const {
  std::string unknown;
  for (const auto& [k, v] : items_)
    if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

bool ConfigTree::operator==(const ConfigTree& other) const {
  std::map<std::string, std::string> a(items_.begin(), items_.end());
  std::map<std::string, std::string> b(other.items_.begin(), other.items_.end());
  return a == b;
}

} // namespace mscg
