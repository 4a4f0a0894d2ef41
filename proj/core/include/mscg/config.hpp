#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace mscg {

// Experiment configuration as nested key-value tables:
//
//   workers = 4            # top-level key
//   [crystal]              # table header: prefixes the keys below
//   preset = "silicon-bend"
//   omega = 1.5
//   cells = [[0, 1], [2, 3]]
//
// Keys are dotted paths ([crystal] + "omega" stores "crystal.omega").
// Values are numbers, booleans, double-quoted strings, or single-line
// bracketed lists. Raw value text is kept verbatim, so parse -> serialize
// -> parse is the identity on the key/value map, and every typed read is
// reproducible from the file alone.
//
// Typed getters mark their key as consumed; finish() rejects any key that
// was never consumed, so misspelled settings fail loudly.
class ConfigTree {
public:
  static ConfigTree parse(std::istream& is);
  static ConfigTree parse_text(const std::string& text);
  static ConfigTree parse_file(const std::string& path);
  void serialize(std::ostream& os) const;
  std::string serialize_text() const;

  // Inserts or overwrites one key with raw value text ("--set a.b=1.5").
  void set_path(const std::string& key, const std::string& raw);

  bool has(const std::string& key) const;
  void require(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& fallback) const;
  std::vector<std::int64_t> get_int_list(
      const std::string& key, const std::vector<std::int64_t>& fallback) const;
  std::vector<std::pair<int, int>> get_cells(
      const std::string& key,
      const std::vector<std::pair<int, int>>& fallback) const;

  // Throws listing every stored key that no getter consumed.
  void finish() const;

  // Key/value-map equality (insertion order ignored).
  bool operator==(const ConfigTree& other) const;

private:
  const std::string* find(const std::string& key) const;

  std::vector<std::pair<std::string, std::string>> items_;  // insertion order
  mutable std::set<std::string> used_;
};

} // namespace mscg
