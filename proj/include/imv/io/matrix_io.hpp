#pragma once

// Text formats: matrix CSV with a "rows,cols" header, single-column vectors,
// and ASCII PGM heatmaps.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "imv/error.hpp"
#include "imv/numerics/matrix.hpp"

namespace imv::io {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto comma = line.find(',');
    out.push_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) return out;
    line.remove_prefix(comma + 1);
  }
}

inline double parse_double(std::string_view s, const std::string& where) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(where + ": '" + std::string(s) + "' is not a number");
  }
  if (!std::isfinite(v)) throw ParseError(where + ": non-finite value");
  return v;
}

inline std::size_t parse_size(std::string_view s, const std::string& where) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(where + ": '" + std::string(s) + "' is not a size");
  }
  return v;
}

/// Non-blank lines with their 1-based line numbers.
inline std::vector<std::pair<std::size_t, std::string>> lines(std::istream& in) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (!trim(line).empty()) out.emplace_back(n, line);
  }
  return out;
}

inline std::string format(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  return out;
}

}  // namespace detail

/// Reads "rows,cols" followed by `rows` lines of `cols` comma-separated values.
inline Matrix read_matrix(std::istream& in, const std::string& source = "matrix") {
  const auto ls = detail::lines(in);
  if (ls.empty()) throw ParseError(source + ": empty file");
  const auto header = detail::split(ls[0].second);
  const std::string at = source + ":" + std::to_string(ls[0].first);
  if (header.size() != 2) throw ParseError(at + ": expected header 'rows,cols'");
  const std::size_t rows = detail::parse_size(header[0], at);
  const std::size_t cols = detail::parse_size(header[1], at);
  if (rows == 0 || cols == 0) throw ParseError(at + ": empty shape " + std::to_string(rows) + "x" + std::to_string(cols));
  if (ls.size() - 1 != rows) {
    throw ParseError(source + ": header says " + std::to_string(rows) + " rows, found " + std::to_string(ls.size() - 1));
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string where = source + ":" + std::to_string(ls[r + 1].first);
    const auto fields = detail::split(ls[r + 1].second);
    if (fields.size() != cols) {
      throw ParseError(where + ": expected " + std::to_string(cols) + " values, found " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = detail::parse_double(fields[c], where);
  }
  return m;
}

inline Matrix read_matrix_file(const std::string& path) {
  auto in = detail::open_in(path);
  return read_matrix(in, path);
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
  out << m.rows() << ',' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << detail::format(m(r, c));
    out << '\n';
  }
}

inline void write_matrix_file(const std::string& path, const Matrix& m) {
  auto out = detail::open_out(path);
  write_matrix(out, m);
}

/// One value per line. A leading "n,1" shape header is accepted and checked.
inline Matrix read_vector(std::istream& in, const std::string& source = "vector") {
  const auto ls = detail::lines(in);
  if (ls.empty()) throw ParseError(source + ": empty file");
  std::size_t begin = 0;
  std::size_t expected = 0;
  const auto first = detail::split(ls[0].second);
  if (first.size() == 2) {
    const std::string at = source + ":" + std::to_string(ls[0].first);
    expected = detail::parse_size(first[0], at);
    if (detail::parse_size(first[1], at) != 1) throw ParseError(at + ": vector header must be 'n,1'");
    begin = 1;
    if (ls.size() - 1 != expected) {
      throw ParseError(source + ": header says " + std::to_string(expected) + " values, found " +
                       std::to_string(ls.size() - 1));
    }
  }
  std::vector<double> v;
  for (std::size_t k = begin; k < ls.size(); ++k) {
    const std::string where = source + ":" + std::to_string(ls[k].first);
    const auto fields = detail::split(ls[k].second);
    if (fields.size() != 1) throw ParseError(where + ": expected a single value per line");
    v.push_back(detail::parse_double(fields[0], where));
  }
  if (v.empty()) throw ParseError(source + ": no values");
  return Matrix::column(v);
}

inline Matrix read_vector_file(const std::string& path) {
  auto in = detail::open_in(path);
  return read_vector(in, path);
}

inline void write_vector(std::ostream& out, const Matrix& v) {
  for (double x : v.values()) out << detail::format(x) << '\n';
}

inline void write_vector_file(const std::string& path, const Matrix& v) {
  auto out = detail::open_out(path);
  write_vector(out, v);
}

/// Grey levels of a heatmap: round(255 * max(x, 0) / max entry); all zero
/// when the matrix has no positive entry.
inline std::vector<int> heatmap_levels(const Matrix& m) {
  double top = 0.0;
  for (double x : m.values()) top = std::max(top, x);
  std::vector<int> out(m.size(), 0);
  if (!(top > 0.0)) return out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    out[i] = static_cast<int>(std::lround(255.0 * std::max(m[i], 0.0) / top));
  }
  return out;
}

/// ASCII PGM (P2): width = columns (output steps), height = rows (input tokens).
inline void write_pgm(std::ostream& out, const Matrix& m) {
  if (!m.all_finite()) throw ContractError("heatmap: non-finite entries");
  const auto levels = heatmap_levels(m);
  out << "P2\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << levels[r * m.cols() + c];
    out << '\n';
  }
}

inline void write_pgm_file(const std::string& path, const Matrix& m) {
  auto out = detail::open_out(path);
  write_pgm(out, m);
}

/// Parses a P2 file back into grey levels (rows x cols).
inline Matrix read_pgm(std::istream& in) {
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  if (!(in >> magic) || magic != "P2") throw ParseError("pgm: missing P2 magic");
  if (!(in >> w >> h >> maxval)) throw ParseError("pgm: bad header");
  Matrix m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(in >> m[i])) throw ParseError("pgm: truncated pixel data");
  }
  return m;
}

}  // namespace imv::io
