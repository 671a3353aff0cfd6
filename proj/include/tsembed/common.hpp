#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tsembed {

/// Thrown for malformed input files. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string &what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const Matrix &o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Matrix &) const = default;
};

using Rng = std::mt19937_64;

/// Derives an independent generator from a base seed and a stream of ids.
/// Used wherever parallel work needs per-item randomness that does not
/// depend on the thread schedule.
Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex_digest(std::uint64_t h);

std::string read_file(const std::string &path);
void write_file(const std::string &path, std::string_view contents);

} // namespace tsembed
