#pragma once

/**
 * Quaternion self-attention in two formulations.
 *
 * Shared score:   S = scale * Re(Q ⊗ K†) = scale * (Q0 K0ᵀ + Q1 K1ᵀ + Q2 K2ᵀ + Q3 K3ᵀ),
 *                 A = softmax_rows(S), O_c = A V_c for every component c.
 *                 Four real score products and one softmax per head.
 *
 * Component-wise: S_α = scale * (Q ⊗ Kᵀ)_α (sixteen real score products),
 *                 A_α = softmax_rows(S_α), O_α = A_α V_α.
 *                 Four softmaxes per head.
 *
 * The forward kernels process query rows in tiles so the T x T score block
 * never has to be materialized. They fold the scale into Q and normalize the
 * T x d output rows instead of the T x T map, so they agree with the
 * full-matrix helpers to rounding, not bit for bit.
 */

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "qsa/layers.hpp"
#include "qsa/qtensor.hpp"

namespace qsa {

enum class AttentionMode { shared, componentwise };

inline const char* to_string(AttentionMode m) { return m == AttentionMode::shared ? "shared" : "componentwise"; }

inline AttentionMode parse_mode(const std::string& s) {
  if (s == "shared") return AttentionMode::shared;
  if (s == "componentwise" || s == "tay") return AttentionMode::componentwise;
  throw InvalidArgument("unknown attention mode '" + s + "'");
}

struct AttnConfig {
  std::size_t seq_len = 1;
  std::size_t d_model = 1;
  std::size_t heads = 1;
  std::size_t d_h = 1;
  AttentionMode mode = AttentionMode::shared;
  bool qk_norm = false;
  // Component-wise variant that multiplies by conj(K)ᵀ instead of Kᵀ.
  bool conjugate_keys = false;
  double scale_shared = 1.0;
  double scale_tay = 1.0;

  /// Config with d_h = d_model / heads and the standard scales 1/sqrt(4 d_h), 1/sqrt(d_h).
  static AttnConfig make(std::size_t seq_len, std::size_t d_model, std::size_t heads,
                         AttentionMode mode = AttentionMode::shared) {
    if (heads == 0 || d_model == 0 || seq_len == 0) throw InvalidArgument("AttnConfig: zero dimension");
    if (d_model % heads != 0) throw InvalidArgument("AttnConfig: d_model must be divisible by heads");
    AttnConfig c;
    c.seq_len = seq_len;
    c.d_model = d_model;
    c.heads = heads;
    c.d_h = d_model / heads;
    c.mode = mode;
    c.scale_shared = 1.0 / std::sqrt(4.0 * double(c.d_h));
    c.scale_tay = 1.0 / std::sqrt(double(c.d_h));
    return c;
  }

  double scale() const { return mode == AttentionMode::shared ? scale_shared : scale_tay; }

  void validate() const {
    if (seq_len == 0 || d_h == 0 || heads == 0) throw InvalidArgument("AttnConfig: zero dimension");
    if (d_model != heads * d_h) throw InvalidArgument("AttnConfig: d_model != heads * d_h");
    if (!(scale_shared > 0.0) || !(scale_tay > 0.0)) throw InvalidArgument("AttnConfig: scales must be > 0");
  }
};

/// Scores of one head: one matrix (shared) or four (component-wise).
template <typename T>
struct BasicScoreBundle {
  AttentionMode mode = AttentionMode::shared;
  RowMatrix<T> shared;
  std::array<RowMatrix<T>, 4> components;
  double scale = 1.0;
};
using ScoreBundle = BasicScoreBundle<double>;

namespace detail {

template <typename T>
void require_qk(const BasicQTensor<T>& q, const BasicQTensor<T>& k, const char* op) {
  if (q.rank() != 2 || k.rank() != 2) throw ShapeMismatch(std::string(op) + ": Q and K must be matrices");
  if (q.cols() != k.cols()) throw ShapeMismatch(std::string(op) + ": Q and K differ in d_h");
}

template <typename T>
void require_qkv(const BasicQTensor<T>& q, const BasicQTensor<T>& k, const BasicQTensor<T>& v, const char* op) {
  require_qk(q, k, op);
  if (v.rank() != 2 || v.rows() != k.rows()) throw ShapeMismatch(std::string(op) + ": V rows must match K rows");
}

/// Row-wise stabilized softmax in place.
template <typename Derived>
void softmax_rows_inplace(Eigen::MatrixBase<Derived>& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto row = s.row(i).array();
    const auto m = row.maxCoeff();
    row = (row - m).exp();
    row /= row.sum();
  }
}

// Sign applied to K_nu in component alpha, including the optional conjugation.
constexpr int key_sign(int sign, int nu, bool conjugate_keys) { return (conjugate_keys && nu != 0) ? -sign : sign; }

// [P0 | P1 | P2 | P3] as one T x 4d matrix.
template <typename T>
RowMatrix<T> concat_planes(const BasicQTensor<T>& p) {
  const auto n = Eigen::Index(p.rows());
  const auto d = Eigen::Index(p.cols());
  RowMatrix<T> out(n, 4 * d);
  for (int c = 0; c < 4; ++c) out.middleCols(c * d, d) = p.mat(c);
  return out;
}

// Keys arranged so that concat(Q) * keys_for_component(K, alpha)ᵀ = (Q ⊗ Kᵀ)_alpha.
template <typename T>
RowMatrix<T> keys_for_component(const BasicQTensor<T>& k, int alpha, bool conjugate_keys) {
  const auto n = Eigen::Index(k.rows());
  const auto d = Eigen::Index(k.cols());
  RowMatrix<T> out(n, 4 * d);
  for (const auto& t : kHamiltonTerms[alpha]) {
    out.middleCols(t.mu * d, d) = T(key_sign(t.sign, t.nu, conjugate_keys)) * k.mat(t.nu);
  }
  return out;
}

inline constexpr Eigen::Index kRowTile = 64;

// Rows of s become exp(s - rowmax); inv receives 1 / rowsum.
template <typename Derived, typename Vec>
void exp_rows_inplace(Eigen::MatrixBase<Derived>& s, Vec& inv) {
  using T = typename Derived::Scalar;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto row = s.row(i).array();
    const T m = row.maxCoeff();
    row = (row - m).exp();
    inv[i] = T(1) / row.sum();
  }
}

}  // namespace detail

/// S = scale * sum_c Q_c K_cᵀ (T x T).
template <typename T>
RowMatrix<T> shared_score(const BasicQTensor<T>& q, const BasicQTensor<T>& k, double scale) {
  detail::require_qk(q, k, "shared_score");
  RowMatrix<T> s = RowMatrix<T>::Zero(Eigen::Index(q.rows()), Eigen::Index(k.rows()));
  for (int c = 0; c < 4; ++c) s.noalias() += q.mat(c) * k.mat(c).transpose();
  s *= T(scale);
  cost_counters().score_matmuls += 4;
  return s;
}

/// Components of scale * (Q ⊗ Kᵀ); with conjugate_keys, scale * (Q ⊗ conj(K)ᵀ).
template <typename T>
std::array<RowMatrix<T>, 4> tay_score(const BasicQTensor<T>& q, const BasicQTensor<T>& k, double scale,
                                      bool conjugate_keys = false) {
  detail::require_qk(q, k, "tay_score");
  std::array<RowMatrix<T>, 4> s;
  for (int alpha = 0; alpha < 4; ++alpha) {
    s[alpha] = RowMatrix<T>::Zero(Eigen::Index(q.rows()), Eigen::Index(k.rows()));
    for (const auto& t : kHamiltonTerms[alpha]) {
      const int sign = detail::key_sign(t.sign, t.nu, conjugate_keys);
      if (sign > 0) {
        s[alpha].noalias() += q.mat(t.mu) * k.mat(t.nu).transpose();
      } else {
        s[alpha].noalias() -= q.mat(t.mu) * k.mat(t.nu).transpose();
      }
    }
    s[alpha] *= T(scale);
  }
  cost_counters().score_matmuls += 16;
  return s;
}

template <typename T>
BasicScoreBundle<T> compute_scores(const BasicQTensor<T>& q, const BasicQTensor<T>& k, const AttnConfig& cfg) {
  BasicScoreBundle<T> b;
  b.mode = cfg.mode;
  b.scale = cfg.scale();
  if (cfg.mode == AttentionMode::shared) {
    b.shared = shared_score(q, k, b.scale);
  } else {
    b.components = tay_score(q, k, b.scale, cfg.conjugate_keys);
  }
  return b;
}

template <typename Derived>
RowMatrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& s) {
  RowMatrix<typename Derived::Scalar> a = s;
  detail::softmax_rows_inplace(a);
  cost_counters().softmax_calls += 1;
  return a;
}

/// Index of the row maximum; ties resolve to the lowest index.
template <typename Derived>
Eigen::Index argmax_row(const Eigen::MatrixBase<Derived>& m, Eigen::Index row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < m.cols(); ++j) {
    if (m(row, j) > m(row, best)) best = j;
  }
  return best;
}

/// softmax_rows(shared_score(Q, K, scale)).
template <typename T>
RowMatrix<T> shared_attention_map(const BasicQTensor<T>& q, const BasicQTensor<T>& k, double scale) {
  return softmax_rows(shared_score(q, k, scale));
}

template <typename T>
std::array<RowMatrix<T>, 4> tay_attention_maps(const BasicQTensor<T>& q, const BasicQTensor<T>& k, double scale,
                                               bool conjugate_keys = false) {
  auto s = tay_score(q, k, scale, conjugate_keys);
  for (auto& m : s) m = softmax_rows(m);
  return s;
}

/// One shared attention map applied to all four value planes.
template <typename T>
BasicQTensor<T> shared_attention(const BasicQTensor<T>& q, const BasicQTensor<T>& k, const BasicQTensor<T>& v,
                                 double scale) {
  detail::require_qkv(q, k, v, "shared_attention");
  const auto n = Eigen::Index(q.rows());
  const auto m = Eigen::Index(k.rows());
  const auto dv = Eigen::Index(v.cols());
  RowMatrix<T> qcat = detail::concat_planes(q);
  qcat *= T(scale);
  const RowMatrix<T> kcat = detail::concat_planes(k);
  const RowMatrix<T> vcat = detail::concat_planes(v);
  RowMatrix<T> ocat(n, 4 * dv);
  RowMatrix<T> block(std::min(detail::kRowTile, n), m);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv(block.rows());
  for (Eigen::Index r0 = 0; r0 < n; r0 += detail::kRowTile) {
    const Eigen::Index b = std::min(detail::kRowTile, n - r0);
    auto s = block.topRows(b);
    s.noalias() = qcat.middleRows(r0, b) * kcat.transpose();
    detail::exp_rows_inplace(s, inv);
    auto o = ocat.middleRows(r0, b);
    o.noalias() = s * vcat;
    o = inv.head(b).asDiagonal() * o;
  }
  auto& cc = cost_counters();
  cc.score_matmuls += 4;
  cc.softmax_calls += 1;
  cc.value_matmuls += 4;
  BasicQTensor<T> out(Shape{std::size_t(n), std::size_t(dv)});
  for (int c = 0; c < 4; ++c) out.mat(c) = ocat.middleCols(c * dv, dv);
  return out;
}

/// Component-wise attention: an independent softmax map per quaternion component.
template <typename T>
BasicQTensor<T> tay_attention(const BasicQTensor<T>& q, const BasicQTensor<T>& k, const BasicQTensor<T>& v,
                              double scale, bool conjugate_keys = false) {
  detail::require_qkv(q, k, v, "tay_attention");
  const auto n = Eigen::Index(q.rows());
  const auto m = Eigen::Index(k.rows());
  RowMatrix<T> qcat = detail::concat_planes(q);
  qcat *= T(scale);
  std::array<RowMatrix<T>, 4> keys;
  for (int alpha = 0; alpha < 4; ++alpha) keys[alpha] = detail::keys_for_component(k, alpha, conjugate_keys);
  BasicQTensor<T> out(Shape{std::size_t(n), v.cols()});
  RowMatrix<T> block(std::min(detail::kRowTile, n), m);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv(block.rows());
  for (Eigen::Index r0 = 0; r0 < n; r0 += detail::kRowTile) {
    const Eigen::Index b = std::min(detail::kRowTile, n - r0);
    auto s = block.topRows(b);
    for (int alpha = 0; alpha < 4; ++alpha) {
      s.noalias() = qcat.middleRows(r0, b) * keys[alpha].transpose();
      detail::exp_rows_inplace(s, inv);
      auto o = out.mat(alpha).middleRows(r0, b);
      o.noalias() = s * v.mat(alpha);
      o = inv.head(b).asDiagonal() * o;
    }
  }
  auto& cc = cost_counters();
  cc.score_matmuls += 16;
  cc.softmax_calls += 4;
  cc.value_matmuls += 4;
  return out;
}

template <typename T>
struct BasicAttnWeights {
  BasicQTensor<T> wq;
  BasicQTensor<T> wk;
  BasicQTensor<T> wv;
  std::optional<QRmsNormParams> q_norm;
  std::optional<QRmsNormParams> k_norm;

  /// i.i.d. zero-mean Gaussian projections with std 1/sqrt(4 d_model); unit norm gains.
  static BasicAttnWeights random(const AttnConfig& cfg, Rng& rng) {
    const double sd = 1.0 / std::sqrt(4.0 * double(cfg.d_model));
    BasicAttnWeights w{qt_random<T>(Shape{cfg.d_model, cfg.d_h}, rng, sd),
                       qt_random<T>(Shape{cfg.d_model, cfg.d_h}, rng, sd),
                       qt_random<T>(Shape{cfg.d_model, cfg.d_h}, rng, sd),
                       std::nullopt,
                       std::nullopt};
    if (cfg.qk_norm) {
      w.q_norm = QRmsNormParams::ones(cfg.d_h);
      w.k_norm = QRmsNormParams::ones(cfg.d_h);
    }
    return w;
  }
};
using AttnWeights = BasicAttnWeights<double>;

template <typename T>
std::vector<BasicAttnWeights<T>> random_heads(const AttnConfig& cfg, Rng& rng) {
  std::vector<BasicAttnWeights<T>> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) heads.push_back(BasicAttnWeights<T>::random(cfg, rng));
  return heads;
}

/// Projected (and optionally normalized) Q, K, V of one head.
template <typename T>
struct HeadProjection {
  BasicQTensor<T> q, k, v;
};

template <typename T>
HeadProjection<T> project_head(const BasicQTensor<T>& x, const BasicAttnWeights<T>& w, const AttnConfig& cfg) {
  HeadProjection<T> p{qlinear_forward(x, w.wq), qlinear_forward(x, w.wk), qlinear_forward(x, w.wv)};
  if (cfg.qk_norm) {
    p.q = qrmsnorm(p.q, w.q_norm.value_or(QRmsNormParams::ones(cfg.d_h)));
    p.k = qrmsnorm(p.k, w.k_norm.value_or(QRmsNormParams::ones(cfg.d_h)));
  }
  return p;
}

/// Multi-head forward: per head project, optionally QRMSNorm Q and K, attend,
/// and write the head's output to columns [h d_h, (h+1) d_h). No output projection.
///
/// With workers > 1 the heads are spread over that many threads. Each head is
/// computed exactly as in the sequential path, so the output is bit-identical;
/// the workers' cost counters are added to the calling thread's.
template <typename T>
BasicQTensor<T> mha_forward(const BasicQTensor<T>& x, const std::vector<BasicAttnWeights<T>>& weights,
                            const AttnConfig& cfg, std::size_t workers = 1) {
  cfg.validate();
  x.require_rank(2, "mha_forward");
  if (x.cols() != cfg.d_model) throw ShapeMismatch("mha_forward: input width != d_model");
  if (weights.size() != cfg.heads) throw ShapeMismatch("mha_forward: expected one weight set per head");
  if (workers == 0) throw InvalidArgument("mha_forward: workers must be >= 1");
  for (const auto& w : weights) {
    for (const auto* m : {&w.wq, &w.wk, &w.wv}) {
      if (m->shape() != Shape{cfg.d_model, cfg.d_h}) throw ShapeMismatch("mha_forward: projection shape");
    }
  }
  BasicQTensor<T> out(Shape{x.rows(), cfg.d_model});
  auto run_head = [&](std::size_t h) {
    const auto p = project_head(x, weights[h], cfg);
    const auto o = cfg.mode == AttentionMode::shared ? shared_attention(p.q, p.k, p.v, cfg.scale_shared)
                                                     : tay_attention(p.q, p.k, p.v, cfg.scale_tay, cfg.conjugate_keys);
    for (int c = 0; c < 4; ++c) {
      out.mat(c).middleCols(Eigen::Index(h * cfg.d_h), Eigen::Index(cfg.d_h)) = o.mat(c);
    }
  };

  const std::size_t n = std::min(workers, cfg.heads);
  if (n <= 1) {
    for (std::size_t h = 0; h < cfg.heads; ++h) run_head(h);
    return out;
  }
  std::vector<CostCounters> counts(n);
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    pool.reserve(n);
    for (std::size_t w = 0; w < n; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t h = w; h < cfg.heads; h += n) run_head(h);
        } catch (...) {
          errors[w] = std::current_exception();
        }
        counts[w] = cost_counters();
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const auto& c : counts) cost_counters() += c;
  return out;
}

/// Real maps as a QTB-ready tensor of shape [N, T, T] (or [T, T] for one map):
/// values in plane q0, imaginary planes zero.
inline QTensor maps_to_tensor(const std::vector<RealMatrix>& maps) {
  if (maps.empty()) throw ShapeMismatch("maps_to_tensor: no maps");
  const auto r = std::size_t(maps[0].rows());
  const auto c = std::size_t(maps[0].cols());
  QTensor out(maps.size() == 1 ? Shape{r, c} : Shape{maps.size(), r, c});
  auto p = out.plane(0);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (std::size_t(maps[i].rows()) != r || std::size_t(maps[i].cols()) != c) {
      throw ShapeMismatch("maps_to_tensor: maps differ in shape");
    }
    std::copy(maps[i].data(), maps[i].data() + r * c, p.begin() + std::ptrdiff_t(i * r * c));
  }
  return out;
}

/// Inverse of maps_to_tensor; reads plane q0 of a [T, T] or [N, T, T] tensor.
inline std::vector<RealMatrix> tensor_to_maps(const QTensor& t) {
  if (t.rank() != 2 && t.rank() != 3) throw ShapeMismatch("tensor_to_maps: expected [T,T] or [N,T,T]");
  const std::size_t n = t.rank() == 2 ? 1 : t.shape()[0];
  const std::size_t r = t.shape()[t.rank() - 2];
  const std::size_t c = t.shape()[t.rank() - 1];
  std::vector<RealMatrix> maps;
  for (std::size_t i = 0; i < n; ++i) {
    maps.emplace_back(ConstMatrixMap<double>(t.plane(0).data() + i * r * c, Eigen::Index(r), Eigen::Index(c)));
  }
  return maps;
}

}  // namespace qsa
