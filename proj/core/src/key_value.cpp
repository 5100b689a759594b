#include "gapfuse/key_value.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "gapfuse/error.hpp"

namespace gapfuse {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

double parse_double(std::string_view text, std::string_view what) {
  text = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError("expected a number for " + std::string(what) + ", got '" + std::string(text) + "'");
  }
  return v;
}

long long parse_int(std::string_view text, std::string_view what) {
  text = trim(text);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError("expected an integer for " + std::string(what) + ", got '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_uint64(std::string_view text, std::string_view what) {
  text = trim(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError("expected a non-negative integer for " + std::string(what) + ", got '" +
                     std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view text, std::string_view what) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ParseError("expected a boolean for " + std::string(what) + ", got '" + std::string(text) + "'");
}

KeyValues KeyValues::parse(std::istream& in, std::string_view origin) {
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(std::string(origin) + ":" + std::to_string(line_no) +
                       ": expected 'key = value', got '" + std::string(s) + "'");
    }
    auto key = trim(s.substr(0, eq));
    auto value = trim(s.substr(eq + 1));
    if (key.empty()) {
      throw ParseError(std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
    }
    kv.set(std::string(key), std::string(value));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse(in, path.string());
}

void KeyValues::set(std::string key, std::string value) {
  used_.erase(key);
  entries_[std::move(key)] = std::move(value);
}

bool KeyValues::contains(std::string_view key) const { return entries_.find(key) != entries_.end(); }

std::optional<std::string> KeyValues::get(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  used_[it->first] = true;
  return it->second;
}

std::string KeyValues::get_string(std::string_view key, std::string fallback) const {
  auto v = get(key);
  return v ? *v : std::move(fallback);
}

double KeyValues::get_double(std::string_view key, double fallback) const {
  auto v = get(key);
  return v ? parse_double(*v, key) : fallback;
}

long long KeyValues::get_int(std::string_view key, long long fallback) const {
  auto v = get(key);
  return v ? parse_int(*v, key) : fallback;
}

std::uint64_t KeyValues::get_uint64(std::string_view key, std::uint64_t fallback) const {
  auto v = get(key);
  return v ? parse_uint64(*v, key) : fallback;
}

bool KeyValues::get_bool(std::string_view key, bool fallback) const {
  auto v = get(key);
  return v ? parse_bool(*v, key) : fallback;
}

std::vector<std::string> KeyValues::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (!used_.count(k)) out.push_back(k);
  }
  return out;
}

void KeyValues::write(std::ostream& out) const {
  for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
}

}  // namespace gapfuse
