#pragma once

// Raw numeric file I/O.
//
// Image file (binary, little-endian):
//   "KSIMG1\n"
//   "<d> <w> <h> <complex>\n"      w = columns, h = rows (1 for d = 1)
//   N float64 pairs (re, im) when complex = 1, else N float64 real parts.
//
// k-space file (binary, little-endian):
//   "KSKSP1\n"
//   "<M>\n"
//   M float64 pairs (re, im).
//
// Pattern file: CSV with header "kx" or "kx,ky", one row per point,
// 17 significant digits. Column j holds coordinate j, paired with grid axis j.

#include "offgrid/core.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

namespace offgrid {

struct FileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The file could not be opened, read or written.
struct IoError : FileError {
  using FileError::FileError;
};

/// The file's magic, header or a CSV row is malformed.
struct FormatError : FileError {
  using FileError::FileError;
};

/// The declared length disagrees with the amount of data present.
struct LengthMismatchError : FileError {
  using FileError::FileError;
};

namespace detail {

inline void put_f64(std::string& out, double v)
{
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int k = 0; k < 8; ++k) {
    out.push_back(static_cast<char>((bits >> (8 * k)) & 0xffu));
  }
}

inline double get_f64(const char* p)
{
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[k])) << (8 * k);
  }
  return std::bit_cast<double>(bits);
}

inline std::string read_all(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string() + " for reading");
  }
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("read failure on " + path.string());
  }
  return bytes;
}

inline void write_all(const std::filesystem::path& path, std::string_view bytes)
{
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failure on " + path.string());
  }
}

/// Splits off one '\n'-terminated line starting at pos; advances pos.
inline std::string_view next_line(std::string_view bytes, std::size_t& pos, const std::string& what)
{
  const auto end = bytes.find('\n', pos);
  if (end == std::string_view::npos) {
    throw FormatError(what + ": truncated header");
  }
  auto line = bytes.substr(pos, end - pos);
  pos = end + 1;
  return line;
}

inline std::string format_double(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(std::string_view s, const std::string& what)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(what + ": cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// KSIMG1 encoding of `image`.
inline std::string image_bytes(const ComplexImage& image)
{
  const auto& data = image.data();
  bool is_complex = false;
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    // Only a +0.0 imaginary part is dropped, so the round trip stays bitwise.
    if (std::bit_cast<std::uint64_t>(data[n].imag()) != 0) {
      is_complex = true;
      break;
    }
  }
  const auto& grid = image.grid();
  std::string out = "KSIMG1\n";
  out += std::to_string(grid.rank()) + " " + std::to_string(grid.cols()) + " " + std::to_string(grid.rows()) + " " +
         (is_complex ? "1" : "0") + "\n";
  out.reserve(out.size() + static_cast<std::size_t>(data.size()) * 16);
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    detail::put_f64(out, data[n].real());
    if (is_complex) {
      detail::put_f64(out, data[n].imag());
    }
  }
  return out;
}

inline void save_image(const std::filesystem::path& path, const ComplexImage& image)
{
  detail::write_all(path, image_bytes(image));
}

inline ComplexImage load_image(const std::filesystem::path& path)
{
  const std::string bytes = detail::read_all(path);
  const std::string what = "image file " + path.string();
  std::size_t pos = 0;
  if (detail::next_line(bytes, pos, what) != "KSIMG1") {
    throw FormatError(what + ": bad magic");
  }
  std::istringstream header{std::string(detail::next_line(bytes, pos, what))};
  int d = 0, w = 0, h = 0, cplx = -1;
  std::string extra;
  if (!(header >> d >> w >> h >> cplx) || (header >> extra) || (cplx != 0 && cplx != 1) || (d != 1 && d != 2) ||
      (d == 1 && h != 1)) {
    throw FormatError(what + ": malformed header");
  }
  ImageGrid grid = [&] {
    try {
      return d == 1 ? ImageGrid{w} : ImageGrid{h, w};
    } catch (const std::invalid_argument& e) {
      throw FormatError(what + ": " + e.what());
    }
  }();
  const std::size_t per_pixel = cplx ? 16 : 8;
  const std::size_t expected = static_cast<std::size_t>(grid.size()) * per_pixel;
  if (bytes.size() - pos != expected) {
    throw LengthMismatchError(what + ": expected " + std::to_string(expected) + " data bytes, found " +
                              std::to_string(bytes.size() - pos));
  }
  CVector data(grid.size());
  const char* p = bytes.data() + pos;
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    const double re = detail::get_f64(p);
    const double im = cplx ? detail::get_f64(p + 8) : 0.0;
    data[n] = Complex(re, im);
    p += per_pixel;
  }
  return ComplexImage(std::move(grid), std::move(data));
}

inline void save_kspace(const std::filesystem::path& path, const KSpaceVector& y)
{
  std::string out = "KSKSP1\n" + std::to_string(y.size()) + "\n";
  out.reserve(out.size() + static_cast<std::size_t>(y.size()) * 16);
  for (Eigen::Index m = 0; m < y.size(); ++m) {
    detail::put_f64(out, y[m].real());
    detail::put_f64(out, y[m].imag());
  }
  detail::write_all(path, out);
}

inline KSpaceVector load_kspace(const std::filesystem::path& path)
{
  const std::string bytes = detail::read_all(path);
  const std::string what = "k-space file " + path.string();
  std::size_t pos = 0;
  if (detail::next_line(bytes, pos, what) != "KSKSP1") {
    throw FormatError(what + ": bad magic");
  }
  const auto count_line = detail::next_line(bytes, pos, what);
  long long m_count = -1;
  const auto res = std::from_chars(count_line.data(), count_line.data() + count_line.size(), m_count);
  if (res.ec != std::errc() || res.ptr != count_line.data() + count_line.size() || m_count < 1) {
    throw FormatError(what + ": malformed sample count");
  }
  const std::size_t expected = static_cast<std::size_t>(m_count) * 16;
  if (bytes.size() - pos != expected) {
    throw LengthMismatchError(what + ": declared " + std::to_string(m_count) + " samples, found " +
                              std::to_string(bytes.size() - pos) + " data bytes");
  }
  CVector data(m_count);
  const char* p = bytes.data() + pos;
  for (Eigen::Index m = 0; m < data.size(); ++m) {
    data[m] = Complex(detail::get_f64(p), detail::get_f64(p + 8));
    p += 16;
  }
  return KSpaceVector(std::move(data));
}

inline std::string pattern_csv(const SamplingPattern& pattern)
{
  std::string out = pattern.rank() == 1 ? "kx\n" : "kx,ky\n";
  for (Eigen::Index m = 0; m < pattern.size(); ++m) {
    for (int j = 0; j < pattern.rank(); ++j) {
      if (j > 0) {
        out += ',';
      }
      out += detail::format_double(pattern(m, j));
    }
    out += '\n';
  }
  return out;
}

inline void save_pattern(const std::filesystem::path& path, const SamplingPattern& pattern)
{
  detail::write_all(path, pattern_csv(pattern));
}

/// Loads a pattern CSV. When expected_points > 0, a different row count is a
/// LengthMismatchError.
inline SamplingPattern load_pattern(const std::filesystem::path& path, Eigen::Index expected_points = 0)
{
  const std::string bytes = detail::read_all(path);
  const std::string what = "pattern file " + path.string();
  std::size_t pos = 0;
  auto header = detail::next_line(bytes, pos, what);
  if (!header.empty() && header.back() == '\r') {
    header.remove_suffix(1);
  }
  int d = 0;
  if (header == "kx") {
    d = 1;
  } else if (header == "kx,ky") {
    d = 2;
  } else {
    throw FormatError(what + ": header must be 'kx' or 'kx,ky'");
  }
  std::vector<double> values;
  std::size_t row = 1;
  while (pos < bytes.size()) {
    auto line = detail::next_line(bytes, pos, what);
    ++row;
    if (line.empty() || line == "\r") {
      continue;
    }
    int fields = 0;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      values.push_back(detail::parse_double(field, what + " row " + std::to_string(row)));
      ++fields;
      if (comma == std::string_view::npos) {
        break;
      }
      start = comma + 1;
    }
    if (fields != d) {
      throw FormatError(what + " row " + std::to_string(row) + ": expected " + std::to_string(d) + " columns");
    }
  }
  const auto m_count = static_cast<Eigen::Index>(values.size()) / d;
  if (m_count == 0) {
    throw LengthMismatchError(what + ": no points");
  }
  if (expected_points > 0 && m_count != expected_points) {
    throw LengthMismatchError(what + ": expected " + std::to_string(expected_points) + " points, found " +
                              std::to_string(m_count));
  }
  PointMatrix pts(m_count, d);
  std::copy(values.begin(), values.end(), pts.data());
  try {
    return SamplingPattern(std::move(pts));
  } catch (const std::invalid_argument& e) {
    throw FormatError(what + ": " + e.what());
  }
}

}  // namespace offgrid
