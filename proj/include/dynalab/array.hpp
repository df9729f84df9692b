#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynalab {

class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major array of doubles. Rank is arbitrary, but everything the
// tape touches is 2-D: [rows, cols]. Scalars are [1, 1].
struct Array {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Array() = default;
  Array(std::vector<std::int64_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::int64_t>(data.size()) != count(shape))
      throw DimensionError("Array: element count does not match shape");
  }

  static std::int64_t count(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) {
      if (d < 0) throw DimensionError("Array: negative dimension");
      n *= d;
    }
    return n;
  }

  static Array zeros(std::vector<std::int64_t> s) {
    auto n = count(s);
    return Array(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  }
  static Array full(std::vector<std::int64_t> s, double v) {
    auto n = count(s);
    return Array(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
  }
  static Array scalar(double v) { return Array({1, 1}, {v}); }
  static Array row(std::vector<double> d) {
    auto n = static_cast<std::int64_t>(d.size());
    return Array({1, n}, std::move(d));
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::int64_t cols() const {
    if (shape.size() < 2) return shape.empty() ? 1 : shape[0];
    std::int64_t c = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return c;
  }

  double& operator()(std::int64_t r, std::int64_t c) {
    return data[static_cast<std::size_t>(r * cols() + c)];
  }
  double operator()(std::int64_t r, std::int64_t c) const {
    return data[static_cast<std::size_t>(r * cols() + c)];
  }
  double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  bool finite() const {
    return std::all_of(data.begin(), data.end(),
                       [](double v) { return std::isfinite(v); });
  }
};

inline void require_same_shape(const Array& a, const Array& b, const char* where) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(where) + ": shape mismatch");
}

}  // namespace dynalab
