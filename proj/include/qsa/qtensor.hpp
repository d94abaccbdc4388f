#pragma once

/**
 * Quaternion-valued tensors in split-plane (structure-of-arrays) layout.
 *
 * A tensor of shape [d0, d1, ...] owns four contiguous row-major real arrays
 * (p0, p1, p2, p3) holding the real, i, j and k components. Matrix-shaped
 * tensors expose each plane as an Eigen map so that quaternion products
 * become signed sums of real matrix products.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qsa/costs.hpp"
#include "qsa/errors.hpp"
#include "qsa/quaternion.hpp"
#include "qsa/rng.hpp"

namespace qsa {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RealMatrix = RowMatrix<double>;

template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
class BasicQTensor {
 public:
  using value_type = T;
  using Plane = std::vector<T>;

  BasicQTensor() : BasicQTensor(Shape{0}) {}

  /// Zero-filled tensor.
  explicit BasicQTensor(Shape shape) : shape_(std::move(shape)) {
    const std::size_t n = shape_size(shape_);
    for (auto& p : planes_) p.assign(n, T{0});
  }

  BasicQTensor(Shape shape, std::array<Plane, 4> planes) : shape_(std::move(shape)), planes_(std::move(planes)) {
    const std::size_t n = shape_size(shape_);
    for (int c = 0; c < 4; ++c) {
      if (planes_[c].size() != n) {
        throw ShapeMismatch("plane " + std::to_string(c) + " has " + std::to_string(planes_[c].size()) +
                            " elements, shape " + shape_string(shape_) + " needs " + std::to_string(n));
      }
    }
  }

  /// Builds a [rows x cols] tensor from four equally sized real matrices.
  template <typename Derived>
  static BasicQTensor from_matrices(const std::array<Derived, 4>& m) {
    const auto rows = static_cast<std::size_t>(m[0].rows());
    const auto cols = static_cast<std::size_t>(m[0].cols());
    BasicQTensor out(Shape{rows, cols});
    for (int c = 0; c < 4; ++c) {
      if (static_cast<std::size_t>(m[c].rows()) != rows || static_cast<std::size_t>(m[c].cols()) != cols) {
        throw ShapeMismatch("component matrices differ in shape");
      }
      out.mat(c) = m[c];
    }
    return out;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return planes_[0].size(); }

  std::size_t rows() const {
    require_rank(2, "rows");
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank(2, "cols");
    return shape_[1];
  }

  std::span<const T> plane(int c) const { return planes_[c]; }
  std::span<T> plane(int c) { return planes_[c]; }
  const std::array<Plane, 4>& planes() const { return planes_; }

  ConstMatrixMap<T> mat(int c) const {
    require_rank(2, "mat");
    return ConstMatrixMap<T>(planes_[c].data(), Eigen::Index(shape_[0]), Eigen::Index(shape_[1]));
  }
  MatrixMap<T> mat(int c) {
    require_rank(2, "mat");
    return MatrixMap<T>(planes_[c].data(), Eigen::Index(shape_[0]), Eigen::Index(shape_[1]));
  }

  BasicQuaternion<T> at(std::size_t flat) const {
    return {planes_[0][flat], planes_[1][flat], planes_[2][flat], planes_[3][flat]};
  }
  BasicQuaternion<T> at(std::size_t r, std::size_t c) const { return at(r * cols() + c); }

  void set(std::size_t flat, const BasicQuaternion<T>& q) {
    planes_[0][flat] = q.q0;
    planes_[1][flat] = q.q1;
    planes_[2][flat] = q.q2;
    planes_[3][flat] = q.q3;
  }
  void set(std::size_t r, std::size_t c, const BasicQuaternion<T>& q) { set(r * cols() + c, q); }

  template <typename U>
  BasicQTensor<U> cast() const {
    std::array<std::vector<U>, 4> p;
    for (int c = 0; c < 4; ++c) p[c].assign(planes_[c].begin(), planes_[c].end());
    return BasicQTensor<U>(shape_, std::move(p));
  }

  bool operator==(const BasicQTensor&) const = default;

  void require_rank(std::size_t r, const char* op) const {
    if (shape_.size() != r) {
      throw ShapeMismatch(std::string(op) + ": expected rank " + std::to_string(r) + ", got shape " +
                          shape_string(shape_));
    }
  }

 private:
  Shape shape_;
  std::array<Plane, 4> planes_;
};

using QTensor = BasicQTensor<double>;

/// Validated construction from explicit planes.
template <typename T = double>
BasicQTensor<T> qt_new(Shape shape, std::array<std::vector<T>, 4> planes) {
  return BasicQTensor<T>(std::move(shape), std::move(planes));
}

/// Quaternion identity matrix: identity on plane 0, zero imaginary planes.
template <typename T = double>
BasicQTensor<T> qt_identity(std::size_t n) {
  BasicQTensor<T> out(Shape{n, n});
  out.mat(0).setIdentity();
  return out;
}

namespace detail {

/// A ⊗ B for matrix-shaped operands; each of the sixteen plane products is a
/// real GEMM accumulated with the Hamilton sign.
template <typename T>
BasicQTensor<T> hamilton_matmul(const BasicQTensor<T>& a, const BasicQTensor<T>& b, const char* op) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeMismatch(std::string(op) + ": operands must be matrices");
  if (a.cols() != b.rows()) {
    throw ShapeMismatch(std::string(op) + ": inner dimensions " + shape_string(a.shape()) + " x " +
                        shape_string(b.shape()));
  }
  BasicQTensor<T> y(Shape{a.rows(), b.cols()});
  for (int alpha = 0; alpha < 4; ++alpha) {
    auto out = y.mat(alpha);
    for (const auto& t : kHamiltonTerms[alpha]) {
      if (t.sign > 0) {
        out.noalias() += a.mat(t.mu) * b.mat(t.nu);
      } else {
        out.noalias() -= a.mat(t.mu) * b.mat(t.nu);
      }
    }
  }
  return y;
}

}  // namespace detail

/// Quaternion matrix product A ⊗ B as sixteen signed real products.
template <typename T>
BasicQTensor<T> qt_matmul(const BasicQTensor<T>& a, const BasicQTensor<T>& b) {
  auto y = detail::hamilton_matmul(a, b, "qt_matmul");
  cost_counters().other_matmuls += 16;
  return y;
}

/// Plain transpose of every plane (no conjugation).
template <typename T>
BasicQTensor<T> qt_transpose(const BasicQTensor<T>& a) {
  a.require_rank(2, "qt_transpose");
  BasicQTensor<T> out(Shape{a.cols(), a.rows()});
  for (int c = 0; c < 4; ++c) out.mat(c) = a.mat(c).transpose();
  return out;
}

/// A† = (A*)ᵀ: transpose all planes and negate the imaginary ones.
template <typename T>
BasicQTensor<T> qt_conj_transpose(const BasicQTensor<T>& a) {
  a.require_rank(2, "qt_conj_transpose");
  BasicQTensor<T> out(Shape{a.cols(), a.rows()});
  out.mat(0) = a.mat(0).transpose();
  for (int c = 1; c < 4; ++c) out.mat(c) = -a.mat(c).transpose();
  return out;
}

/// Component-grouped flattening into R^{4d}: all real parts, then all i parts, ...
template <typename T>
std::vector<T> vectorize(const BasicQTensor<T>& q) {
  q.require_rank(1, "vectorize");
  std::vector<T> out;
  out.reserve(4 * q.size());
  for (int c = 0; c < 4; ++c) out.insert(out.end(), q.plane(c).begin(), q.plane(c).end());
  return out;
}

/// <q, k> = sum over positions of the quaternion scalar product.
template <typename T>
T qvec_inner(const BasicQTensor<T>& q, const BasicQTensor<T>& k) {
  q.require_rank(1, "qvec_inner");
  k.require_rank(1, "qvec_inner");
  if (q.size() != k.size()) throw ShapeMismatch("qvec_inner: length mismatch");
  T acc{0};
  for (int c = 0; c < 4; ++c) {
    const auto a = q.plane(c);
    const auto b = k.plane(c);
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  }
  return acc;
}

/// Columns [first, first + count) of a matrix-shaped tensor.
template <typename T>
BasicQTensor<T> qt_col_slice(const BasicQTensor<T>& a, std::size_t first, std::size_t count) {
  if (first + count > a.cols()) throw ShapeMismatch("qt_col_slice: range exceeds columns");
  BasicQTensor<T> out(Shape{a.rows(), count});
  for (int c = 0; c < 4; ++c) {
    out.mat(c) = a.mat(c).middleCols(Eigen::Index(first), Eigen::Index(count));
  }
  return out;
}

/// Zero-mean Gaussian fill with standard deviation `scale`. Plane c, element i
/// consumes sample slot first + c*n + i of the generator.
template <typename T = double>
BasicQTensor<T> qt_random(Shape shape, Rng& rng, double scale) {
  if (!(scale > 0.0)) throw InvalidArgument("qt_random: scale must be > 0");
  BasicQTensor<T> out(std::move(shape));
  const std::size_t n = out.size();
  const std::uint64_t first = rng.advance(4 * n);
  for (int c = 0; c < 4; ++c) {
    auto p = out.plane(c);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<T>(scale * rng.normal_at(first + std::uint64_t(c) * n + i));
    }
  }
  return out;
}

template <typename T>
T max_abs_diff(const BasicQTensor<T>& a, const BasicQTensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("max_abs_diff: shape mismatch");
  T m{0};
  for (int c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.plane(c)[i] - b.plane(c)[i]));
  }
  return m;
}

}  // namespace qsa
