#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gapfuse {

/// Flat `key = value` settings with dotted keys, `#` comments and blank
/// lines. Later assignments override earlier ones.
class KeyValues {
 public:
  static KeyValues parse(std::istream& in, std::string_view origin = "<stream>");
  static KeyValues load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  [[nodiscard]] bool contains(std::string_view key) const;
  [[nodiscard]] std::optional<std::string> get(std::string_view key) const;

  [[nodiscard]] std::string get_string(std::string_view key, std::string fallback) const;
  [[nodiscard]] double get_double(std::string_view key, double fallback) const;
  [[nodiscard]] long long get_int(std::string_view key, long long fallback) const;
  [[nodiscard]] std::uint64_t get_uint64(std::string_view key, std::uint64_t fallback) const;
  [[nodiscard]] bool get_bool(std::string_view key, bool fallback) const;

  /// Keys that were never read through a getter; used to reject typos.
  [[nodiscard]] std::vector<std::string> unused_keys() const;

  [[nodiscard]] const std::map<std::string, std::string, std::less<>>& entries() const noexcept {
    return entries_;
  }

  void write(std::ostream& out) const;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
  mutable std::map<std::string, bool, std::less<>> used_;
};

double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);
std::uint64_t parse_uint64(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);
std::string_view trim(std::string_view s);

}  // namespace gapfuse
