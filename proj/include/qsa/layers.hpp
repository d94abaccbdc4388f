#pragma once

// Quaternion linear layer, reference quaternion convolution, QRMSNorm and
// parameter accounting.

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "qsa/qtensor.hpp"

namespace qsa {

/// Y = X ⊗ W with W ∈ H^{d_in × d_out}.
struct QLinear {
  QTensor weight;

  explicit QLinear(QTensor w) : weight(std::move(w)) { weight.require_rank(2, "QLinear"); }

  std::size_t d_in() const { return weight.rows(); }
  std::size_t d_out() const { return weight.cols(); }
  std::size_t real_params() const { return 4 * d_in() * d_out(); }

  /// Zero-mean Gaussian weights with std 1/sqrt(4 d_in).
  static QLinear random(std::size_t d_in, std::size_t d_out, Rng& rng) {
    return QLinear(qt_random(Shape{d_in, d_out}, rng, 1.0 / std::sqrt(4.0 * double(d_in))));
  }
};

template <typename T>
BasicQTensor<T> qlinear_forward(const BasicQTensor<T>& x, const BasicQTensor<T>& weight) {
  auto y = detail::hamilton_matmul(x, weight, "qlinear_forward");
  cost_counters().projection_matmuls += 16;
  return y;
}

inline QTensor qlinear_forward(const QTensor& x, const QLinear& layer) { return qlinear_forward(x, layer.weight); }

/// 4x4 real matrix M(w) with M(w) [x0 x1 x2 x3]ᵀ = components of x ⊗ w.
inline Eigen::Matrix4d qlinear_real_matrix(const Quaternion& w) {
  Eigen::Matrix4d m;
  // clang-format off
  m << w.q0, -w.q1, -w.q2, -w.q3,
       w.q1,  w.q0,  w.q3, -w.q2,
       w.q2, -w.q3,  w.q0,  w.q1,
       w.q3,  w.q2, -w.q1,  w.q0;
  // clang-format on
  return m;
}

/// Quaternion kernel W ∈ H^{C_out × C_in × k × k}.
struct QConv2d {
  QTensor weight;

  explicit QConv2d(QTensor w) : weight(std::move(w)) {
    weight.require_rank(4, "QConv2d");
    if (weight.shape()[2] != weight.shape()[3]) throw ShapeMismatch("QConv2d: kernel must be square");
  }

  std::size_t c_out() const { return weight.shape()[0]; }
  std::size_t c_in() const { return weight.shape()[1]; }
  std::size_t kernel() const { return weight.shape()[2]; }
  std::size_t real_params() const { return 4 * c_out() * c_in() * kernel() * kernel(); }
};

namespace detail {

// out[o] += sign * sum_c xcorr(x[c], w[o][c]) over one plane pair, valid padding, stride 1.
inline void accumulate_xcorr(std::span<const double> x, std::span<const double> w, std::span<double> out,
                             std::size_t c_in, std::size_t c_out, std::size_t h, std::size_t wd, std::size_t k,
                             double sign) {
  const std::size_t ho = h - k + 1;
  const std::size_t wo = wd - k + 1;
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t c = 0; c < c_in; ++c) {
      const double* xp = x.data() + c * h * wd;
      const double* wp = w.data() + (o * c_in + c) * k * k;
      double* op = out.data() + o * ho * wo;
      for (std::size_t r = 0; r < ho; ++r) {
        for (std::size_t s = 0; s < wo; ++s) {
          double acc = 0.0;
          for (std::size_t u = 0; u < k; ++u) {
            for (std::size_t v = 0; v < k; ++v) acc += xp[(r + u) * wd + (s + v)] * wp[u * k + v];
          }
          op[r * wo + s] += sign * acc;
        }
      }
    }
  }
}

}  // namespace detail

/// Valid-padding, stride-1 quaternion cross-correlation; each output plane is
/// a four-term signed sum of real cross-correlations.
inline QTensor qconv2d_forward(const QTensor& x, const QConv2d& layer) {
  x.require_rank(3, "qconv2d_forward");
  const std::size_t c_in = x.shape()[0];
  const std::size_t h = x.shape()[1];
  const std::size_t w = x.shape()[2];
  const std::size_t k = layer.kernel();
  if (c_in != layer.c_in()) throw ShapeMismatch("qconv2d_forward: input channels do not match kernel");
  if (k > h || k > w || k == 0) throw ShapeMismatch("qconv2d_forward: kernel larger than input");
  QTensor y(Shape{layer.c_out(), h - k + 1, w - k + 1});
  for (int alpha = 0; alpha < 4; ++alpha) {
    for (const auto& t : kHamiltonTerms[alpha]) {
      detail::accumulate_xcorr(x.plane(t.mu), layer.weight.plane(t.nu), y.plane(alpha), c_in, layer.c_out(), h, w,
                               k, double(t.sign));
    }
  }
  return y;
}

struct QRmsNormParams {
  std::vector<double> gamma;
  double eps = 1e-8;

  static QRmsNormParams ones(std::size_t d, double eps = 1e-8) { return {std::vector<double>(d, 1.0), eps}; }
};

/// Per quaternion unit: q / sqrt((q0² + q1² + q2² + q3²)/4 + eps) * gamma.
/// Normalizes over the last axis, whose length must equal gamma.size().
template <typename T>
BasicQTensor<T> qrmsnorm(const BasicQTensor<T>& x, const QRmsNormParams& params) {
  if (x.rank() == 0) throw ShapeMismatch("qrmsnorm: scalar tensor");
  const std::size_t d = x.shape().back();
  if (d != params.gamma.size()) throw ShapeMismatch("qrmsnorm: gamma length does not match last axis");
  if (params.eps < 0.0) throw InvalidArgument("qrmsnorm: eps must be >= 0");
  BasicQTensor<T> out(x.shape());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto q = x.at(i);
    const T mean_sq = qnorm_sq(q) / T(4);
    const T inv = T(params.gamma[i % d]) / std::sqrt(mean_sq + T(params.eps));
    out.set(i, q * inv);
  }
  return out;
}

struct LinearSpec {
  std::size_t d_in;
  std::size_t d_out;
};

struct ConvSpec {
  std::size_t c_in;
  std::size_t c_out;
  std::size_t kernel;
};

using LayerSpec = std::variant<LinearSpec, ConvSpec>;

struct ParamCount {
  std::size_t quaternion_real_params;
  std::size_t equivalent_real_params;
  double ratio;
};

/// Real parameters of the quaternion layer vs a real layer with the same
/// (4x wider) input/output dimensionality.
inline ParamCount param_count(const LayerSpec& spec) {
  return std::visit(
      [](const auto& s) -> ParamCount {
        using S = std::decay_t<decltype(s)>;
        std::size_t q = 0;
        std::size_t r = 0;
        if constexpr (std::is_same_v<S, LinearSpec>) {
          if (s.d_in == 0 || s.d_out == 0) throw InvalidArgument("param_count: zero linear dimension");
          q = 4 * s.d_in * s.d_out;
          r = (4 * s.d_in) * (4 * s.d_out);
        } else {
          if (s.c_in == 0 || s.c_out == 0 || s.kernel == 0) throw InvalidArgument("param_count: zero conv dimension");
          q = 4 * s.c_in * s.c_out * s.kernel * s.kernel;
          r = 16 * s.c_in * s.c_out * s.kernel * s.kernel;
        }
        return {q, r, double(q) / double(r)};
      },
      spec);
}

}  // namespace qsa
