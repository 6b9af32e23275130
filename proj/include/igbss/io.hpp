#pragma once
#ifndef IGBSS_IO_HPP
#define IGBSS_IO_HPP

// Matrix CSV: first line "rows,cols", then one comma-separated line per row.
// Values are written with 17 significant digits so they read back exactly.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "igbss/datagen.hpp"

namespace igbss {

/// Malformed input file. `line` and `column` are one-based; 0 means unknown.
class DataFormatError : public std::runtime_error {
 public:
  DataFormatError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : std::runtime_error(format(what, line, column)), line_(line), column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line, std::size_t column) {
    if (!line) return what;
    std::string s = "line " + std::to_string(line);
    if (column) s += ", column " + std::to_string(column);
    return s + ": " + what;
  }
  std::size_t line_;
  std::size_t column_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view tok, std::size_t line, std::size_t column) {
  T value{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty())
    throw DataFormatError("cannot parse '" + std::string(tok) + "' as a number", line, column);
  return value;
}

}  // namespace detail

inline Eigen::MatrixXd read_matrix_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!detail::trim(line).empty()) return true;
    }
    return false;
  };
  if (!next_line()) throw DataFormatError("empty file: expected a 'rows,cols' header");
  auto head = detail::split_commas(line);
  if (head.size() != 2) throw DataFormatError("header must be 'rows,cols'", lineno);
  const auto rows = detail::parse_number<long long>(head[0], lineno, 1);
  const auto cols = detail::parse_number<long long>(head[1], lineno, 2);
  if (rows <= 0 || cols <= 0) throw DataFormatError("header dimensions must be positive", lineno);

  Eigen::MatrixXd X(rows, cols);
  for (long long r = 0; r < rows; ++r) {
    if (!next_line())
      throw DataFormatError("expected " + std::to_string(rows) + " data rows, found " + std::to_string(r), lineno + 1);
    auto fields = detail::split_commas(line);
    if (static_cast<long long>(fields.size()) != cols)
      throw DataFormatError("expected " + std::to_string(cols) + " values, found " + std::to_string(fields.size()),
                            lineno, std::min<std::size_t>(fields.size(), static_cast<std::size_t>(cols)) + 1);
    for (long long c = 0; c < cols; ++c) {
      const double v = detail::parse_number<double>(fields[static_cast<std::size_t>(c)], lineno,
                                                    static_cast<std::size_t>(c) + 1);
      if (!std::isfinite(v)) throw DataFormatError("non-finite value", lineno, static_cast<std::size_t>(c) + 1);
      X(r, c) = v;
    }
  }
  if (next_line()) throw DataFormatError("unexpected data after the declared rows", lineno);
  return X;
}

inline Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  try {
    return read_matrix_csv(in);
  } catch (const DataFormatError& e) {
    throw DataFormatError(path + ": " + e.what());
  }
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

inline void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& X) {
  out << X.rows() << ',' << X.cols() << '\n';
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      if (c) out << ',';
      out << format_double(X(r, c));
    }
    out << '\n';
  }
}

inline void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& X) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_matrix_csv(out, X);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

/// Binary PPM (P6, maxval <= 255).
inline RgbImage read_ppm(std::istream& in) {
  auto token = [&]() {
    std::string tok;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(ch);
    }
    return tok;
  };
  if (token() != "P6") throw DataFormatError("not a binary PPM (P6) image");
  RgbImage img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    const unsigned long maxval = std::stoul(token());
    if (maxval == 0 || maxval > 255) throw DataFormatError("unsupported PPM maxval");
  } catch (const std::logic_error&) {
    throw DataFormatError("malformed PPM header");
  }
  std::vector<unsigned char> raw(img.size());
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw DataFormatError("truncated PPM pixel data");
  img.pixels.assign(raw.begin(), raw.end());
  return img;
}

inline void write_ppm(std::ostream& out, const RgbImage& img) {
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  for (double v : img.pixels) {
    const double c = std::clamp(std::round(v), 0.0, 255.0);
    out.put(static_cast<char>(static_cast<unsigned char>(c)));
  }
}

/// Reads a raster from .ppm, or from a matrix CSV whose entries are taken as
/// the flattened channels-last pixel sequence (width = entries / 3, height 1).
inline RgbImage read_raster(const std::string& path) {
  const bool ppm = path.size() >= 4 && path.compare(path.size() - 4, 4, ".ppm") == 0;
  if (ppm) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    return read_ppm(in);
  }
  const Eigen::MatrixXd X = read_matrix_csv(path);
  if (X.size() % 3 != 0) throw DataFormatError(path + ": raster CSV must hold a multiple of 3 values");
  RgbImage img;
  img.width = static_cast<std::size_t>(X.size() / 3);
  img.height = 1;
  img.pixels.reserve(static_cast<std::size_t>(X.size()));
  for (Eigen::Index r = 0; r < X.rows(); ++r)
    for (Eigen::Index c = 0; c < X.cols(); ++c) img.pixels.push_back(X(r, c));
  return img;
}

}  // namespace igbss

#endif  // IGBSS_IO_HPP
