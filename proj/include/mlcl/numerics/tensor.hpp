#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlcl {

/// Dense row-major tensor of 64-bit floats.
class Tensor {
 public:
  /// Empty tensor of shape [0].
  Tensor() : shape_{0} {}

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(extent_product(shape_), fill) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != extent_product(shape_)) {
      throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_string());
    }
  }

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }

  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool is_scalar() const { return data_.size() == 1 && shape_.size() <= 1; }

  std::size_t rows() const {
    require_rank(2);
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank(2);
    return shape_[1];
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double item() const {
    if (data_.size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_string());
    return data_[0];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  Tensor reshaped(std::vector<std::size_t> shape) const { return Tensor(std::move(shape), data_); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static std::size_t extent_product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  void require_rank(std::size_t r) const {
    if (shape_.size() != r) {
      throw std::invalid_argument("expected rank-" + std::to_string(r) + " tensor, got " + shape_string());
    }
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Process-wide counters for numerically degenerate inputs that were handled
/// by a fallback instead of an error.
struct Diagnostics {
  std::atomic<long> zero_norm_fallbacks{0};
};

inline Diagnostics& diagnostics() {
  static Diagnostics d;
  return d;
}

inline constexpr double kNormEpsilon = 1e-12;

/// Euclidean normalization. A zero vector is divided by epsilon instead of
/// its norm and the fallback is counted in diagnostics().
inline std::vector<double> l2_normalize(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  double norm = std::sqrt(sq);
  if (norm == 0.0) {
    diagnostics().zero_norm_fallbacks.fetch_add(1, std::memory_order_relaxed);
    norm += kNormEpsilon;
  }
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= norm;
  return out;
}

/// Max-shifted log-sum-exp.
inline double logsumexp(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("empty reduction");
  double m = xs[0];
  for (double x : xs) m = std::max(m, x);
  if (std::isinf(m) && m < 0) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace mlcl
