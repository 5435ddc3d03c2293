#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace spikeslab {
namespace io {

class IoError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Round-trippable decimal (17 significant digits).
inline std::string fmt(double x)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path)
{
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

/// Minimal CSV row writer; fields are never quoted (all our fields are numeric or identifiers).
class CsvWriter
{
public:
  explicit CsvWriter(std::ostream& out) : out_(&out) {}

  CsvWriter& header(std::initializer_list<std::string_view> names)
  {
    bool first = true;
    for (auto n : names) {
      if (!first) *out_ << ',';
      *out_ << n;
      first = false;
    }
    *out_ << '\n';
    return *this;
  }

  template <typename... Ts>
  CsvWriter& row(const Ts&... fields)
  {
    bool first = true;
    ((write_field(fields, first)), ...);
    *out_ << '\n';
    return *this;
  }

private:
  template <typename T>
  void write_field(const T& v, bool& first)
  {
    if (!first) *out_ << ',';
    first = false;
    if constexpr (std::is_floating_point_v<T>)
      *out_ << fmt(static_cast<double>(v));
    else
      *out_ << v;
  }

  std::ostream* out_;
};

inline std::vector<std::string> split(std::string_view line, char sep = ',')
{
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// 64-bit FNV-1a over a byte range.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) noexcept
{
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// FNV-1a of a whole file, as 16 hex digits.
inline std::string file_hash(const std::filesystem::path& path)
{
  auto in = open_in(path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

/// Numeric CSV into rows of doubles; a first line that does not parse is treated as a header.
inline std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path)
{
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    bool ok = true;
    for (const auto& field : split(line)) {
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (field.empty() || end != field.c_str() + field.size()) {
        ok = false;
        break;
      }
      row.push_back(v);
    }
    if (!ok) {
      if (first) {
        first = false;
        continue;
      }
      throw IoError("non-numeric field in " + path.string() + ": " + line);
    }
    first = false;
    if (!rows.empty() && rows.back().size() != row.size()) throw IoError("ragged rows in " + path.string());
    rows.push_back(std::move(row));
  }
  return rows;
}

} // namespace io
} // namespace spikeslab
