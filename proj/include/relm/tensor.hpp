#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relm/errors.hpp"

namespace relm {

/// Dense row-major tensor of doubles with one to three axes (last axis fastest).
/// A default-constructed tensor has rank 0 and no elements; it stands for an
/// absent parameter block.
class DenseTensor {
 public:
  static constexpr std::size_t kMaxRank = 3;

  DenseTensor() = default;

  explicit DenseTensor(std::initializer_list<std::size_t> dims, double fill = 0.0)
      : DenseTensor(std::vector<std::size_t>(dims), fill) {}

  explicit DenseTensor(const std::vector<std::size_t>& dims, double fill = 0.0) {
    set_dims(dims);
    data_.assign(count(dims), fill);
  }

  DenseTensor(const std::vector<std::size_t>& dims, std::vector<double> data) {
    set_dims(dims);
    if (data.size() != count(dims)) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match extents (" + std::to_string(count(dims)) + ")");
    }
    data_ = std::move(data);
  }

  std::size_t rank() const noexcept { return rank_; }
  std::size_t extent(std::size_t axis) const noexcept { return axis < rank_ ? dims_[axis] : 1; }
  std::vector<std::size_t> dims() const { return {dims_.begin(), dims_.begin() + rank_}; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t offset(std::size_t i) const noexcept { return i; }
  std::size_t offset(std::size_t i, std::size_t j) const noexcept { return i * dims_[1] + j; }
  std::size_t offset(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return (i * dims_[1] + j) * dims_[2] + k;
  }

  double& operator()(std::size_t i) noexcept { return data_[i]; }
  double operator()(std::size_t i) const noexcept { return data_[i]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[offset(i, j)]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[offset(i, j)]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept {
    return data_[offset(i, j, k)];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return data_[offset(i, j, k)];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const double* raw() const noexcept { return data_.data(); }
  double* raw() noexcept { return data_.data(); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const DenseTensor& a, const DenseTensor& b) {
    return a.rank_ == b.rank_ && a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  void set_dims(const std::vector<std::size_t>& dims) {
    if (dims.empty() || dims.size() > kMaxRank) {
      throw DimensionError("tensor rank must be 1..3, got " + std::to_string(dims.size()));
    }
    for (auto d : dims) {
      if (d == 0) throw DimensionError("tensor extent must be positive");
    }
    rank_ = dims.size();
    dims_ = {1, 1, 1};
    std::copy(dims.begin(), dims.end(), dims_.begin());
  }

  std::array<std::size_t, kMaxRank> dims_{1, 1, 1};
  std::size_t rank_ = 0;
  std::vector<double> data_;
};

/// Read-only strided view, used for slices such as X[i, :, t].
struct StridedView {
  const double* base = nullptr;
  std::size_t length = 0;
  std::size_t stride = 1;

  double operator[](std::size_t s) const noexcept { return base[s * stride]; }
  std::size_t size() const noexcept { return length; }
};

/// Deterministic generator. The stream is std::mt19937_64 (fully specified by
/// the standard); floating-point draws use the top 53 bits so the sequence is
/// identical across standard-library implementations.
class SeededRng {
 public:
  static constexpr std::string_view kGeneratorId = "mt19937_64";

  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t position() const noexcept { return position_; }

  void reseed(std::uint64_t seed) {
    seed_ = seed;
    engine_.seed(seed);
    position_ = 0;
  }

  std::uint64_t next_u64() {
    ++position_;
    return engine_();
  }

  /// Uniform on [0, 1).
  double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) {
    double v = lo + (hi - lo) * unit();
    return v < hi ? v : std::nextafter(hi, lo);
  }

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  /// Standard normal via Box-Muller on the portable uniform stream.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = unit();
    } while (u1 <= 0.0);
    const double u2 = unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uint64_t position_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Tensor of i.i.d. uniform[lo, hi) draws, in row-major order.
inline DenseTensor uniform_fill(SeededRng& rng, const std::vector<std::size_t>& dims, double lo,
                                double hi) {
  if (!(lo < hi)) throw DimensionError("uniform_fill requires lo < hi");
  DenseTensor t(dims);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

enum class Activation : std::uint8_t { sigmoid, tanh };

inline double activation(Activation kind, double x) noexcept {
  if (kind == Activation::tanh) return std::tanh(x);
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Derivative expressed through the activation's output value y = f(x).
inline double activation_slope(Activation kind, double y) noexcept {
  return kind == Activation::tanh ? 1.0 - y * y : y * (1.0 - y);
}

inline std::string_view to_string(Activation a) noexcept {
  return a == Activation::tanh ? "tanh" : "sigmoid";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  throw FormatError("unknown activation '" + std::string(s) + "'");
}

}  // namespace relm
