#pragma once

// Score-matrix gradients for both attention formulations, a central
// finite-difference oracle, and the gradient-norm experiments.
//
// Shared:          dL/dA = sum_α dL/dO_α V_αᵀ, dL/dS = J_sm(S)ᵀ dL/dA     (aggregation)
// Component-wise:  dL/dS_α = J_sm(S_α)ᵀ (dL/dO_α V_αᵀ)                   (separation)

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "qsa/attention.hpp"

namespace qsa {

using Planes = std::array<RealMatrix, 4>;

/// Row-softmax vector-Jacobian product: dS = A ⊙ (G − rowdot(A, G)).
inline RealMatrix softmax_vjp(const RealMatrix& a, const RealMatrix& g) {
  if (a.rows() != g.rows() || a.cols() != g.cols()) throw ShapeMismatch("softmax_vjp: shape mismatch");
  RealMatrix ds(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double dot = a.row(i).dot(g.row(i));
    ds.row(i) = a.row(i).array() * (g.row(i).array() - dot);
  }
  return ds;
}

enum class LossKind { sum_output, mean_sq_output };

inline const char* to_string(LossKind k) { return k == LossKind::sum_output ? "sum_output" : "mean_sq_output"; }

inline LossKind parse_loss(const std::string& s) {
  if (s == "sum_output") return LossKind::sum_output;
  if (s == "mean_sq_output") return LossKind::mean_sq_output;
  throw InvalidArgument("unknown loss '" + s + "'");
}

/// Scalar loss over all four output planes.
///   sum_output:     L = sum of every component of O
///   mean_sq_output: L = sum(O²) / count, count = 4 * numel(plane) unless overridden
struct LossSpec {
  LossKind kind = LossKind::sum_output;
  double count = 0.0;

  double normalizer(const QTensor& o) const { return count > 0.0 ? count : 4.0 * double(o.size()); }

  double value(const QTensor& o) const {
    double acc = 0.0;
    for (int c = 0; c < 4; ++c) {
      for (double v : o.plane(c)) acc += kind == LossKind::sum_output ? v : v * v;
    }
    return kind == LossKind::sum_output ? acc : acc / normalizer(o);
  }

  Planes gradient(const QTensor& o) const {
    Planes g;
    for (int c = 0; c < 4; ++c) {
      if (kind == LossKind::sum_output) {
        g[c] = RealMatrix::Ones(o.mat(c).rows(), o.mat(c).cols());
      } else {
        g[c] = (2.0 / normalizer(o)) * o.mat(c);
      }
    }
    return g;
  }
};

namespace detail {

inline void require_grad_shapes(const QTensor& q, const QTensor& k, const QTensor& v, const Planes& d_out,
                                const char* op) {
  require_qkv(q, k, v, op);
  for (const auto& g : d_out) {
    if (std::size_t(g.rows()) != q.rows() || std::size_t(g.cols()) != v.cols()) {
      throw ShapeMismatch(std::string(op) + ": dL/dO shape does not match output");
    }
  }
}

}  // namespace detail

struct SharedGrad {
  RealMatrix attn;    // A
  RealMatrix d_attn;  // dL/dA, aggregated over the four components
  RealMatrix d_score; // dL/dS
};

inline SharedGrad grad_shared(const QTensor& q, const QTensor& k, const QTensor& v, const Planes& d_out,
                              double scale) {
  detail::require_grad_shapes(q, k, v, d_out, "grad_shared");
  SharedGrad g;
  g.attn = shared_attention_map(q, k, scale);
  g.d_attn = RealMatrix::Zero(g.attn.rows(), g.attn.cols());
  for (int c = 0; c < 4; ++c) g.d_attn.noalias() += d_out[c] * v.mat(c).transpose();
  g.d_score = softmax_vjp(g.attn, g.d_attn);
  return g;
}

struct TayGrad {
  Planes attn;
  Planes d_attn;
  Planes d_score;
};

inline TayGrad grad_tay(const QTensor& q, const QTensor& k, const QTensor& v, const Planes& d_out, double scale,
                        bool conjugate_keys = false) {
  detail::require_grad_shapes(q, k, v, d_out, "grad_tay");
  TayGrad g;
  g.attn = tay_attention_maps(q, k, scale, conjugate_keys);
  for (int a = 0; a < 4; ++a) {
    g.d_attn[a] = d_out[a] * v.mat(a).transpose();
    g.d_score[a] = softmax_vjp(g.attn[a], g.d_attn[a]);
  }
  return g;
}

/// Central differences (f(x + h e_i) − f(x − h e_i)) / 2h for every coordinate.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("fd_gradient: step must be > 0");
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

/// |analytic − numeric| / max(1, |analytic|).
inline double grad_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

inline double frobenius(const RealMatrix& m) { return m.norm(); }

struct GradNormConfig {
  std::size_t batch = 32;
  std::size_t seq_len = 128;
  std::size_t d_model = 64;
  std::size_t heads = 1;
  std::size_t trials = 100;
  LossKind loss = LossKind::sum_output;
  bool qk_norm = false;
  double input_std = 1.0;
  // Score entries per trial checked against finite differences (0 disables).
  std::size_t fd_probes = 8;
  double fd_step = 1e-5;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / double(xs.size() - 1));
  }
  return r;
}

struct GradReport {
  GradNormConfig config;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  MeanStd shared_norm;
  std::array<MeanStd, 4> tay_norm;
  /// sum_α mean ‖dL/dS_α‖_F / mean ‖dL/dS‖_F
  double ratio = 0.0;
  /// sqrt(sum_α (mean ‖dL/dS_α‖_F)²) / mean ‖dL/dS‖_F: the four scores taken as one stacked tensor.
  double stacked_ratio = 0.0;
  /// Largest relative deviation of the component means from their average.
  double component_spread = 0.0;
  /// Worst analytic-vs-finite-difference error over the probed score entries.
  double max_rel_error = 0.0;
};

/// Per-sample, per-mode gradient norms of one forward/backward pass.
struct SampleGradNorms {
  double shared_sq = 0.0;
  std::array<double, 4> tay_sq{};
  double max_rel_error = 0.0;
};

namespace detail {

// Contribution of one output row to the loss as a function of the matching
// score row; the remaining rows do not depend on it.
inline double row_loss(const RealMatrix& s_row, const QTensor& v, std::initializer_list<int> planes,
                       const LossSpec& loss) {
  RealMatrix a = s_row;
  softmax_rows_inplace(a);
  double acc = 0.0;
  for (int c : planes) {
    const RealMatrix o = a * v.mat(c);
    for (Eigen::Index j = 0; j < o.size(); ++j) {
      const double x = o.data()[j];
      acc += loss.kind == LossKind::sum_output ? x : x * x / loss.count;
    }
  }
  return acc;
}

inline SampleGradNorms sample_gradients(const QTensor& x, const std::vector<AttnWeights>& heads,
                                        const AttnConfig& cfg, const LossSpec& loss, Rng& probe_rng,
                                        std::size_t probes, double fd_step, bool want_shared = true) {
  SampleGradNorms r;
  // Normalizer over the whole multi-head output of this sample.
  LossSpec l = loss;
  l.count = 4.0 * double(x.rows() * cfg.d_model);
  for (const auto& w : heads) {
    const auto p = project_head(x, w, cfg);
    if (want_shared) {
      const auto o = shared_attention(p.q, p.k, p.v, cfg.scale_shared);
      const auto g = grad_shared(p.q, p.k, p.v, l.gradient(o), cfg.scale_shared);
      r.shared_sq += g.d_score.squaredNorm();
      if (probes > 0) {
        const RealMatrix s = shared_score(p.q, p.k, cfg.scale_shared);
        for (std::size_t i = 0; i < probes; ++i) {
          const auto row = Eigen::Index(probe_rng.uniform() * double(s.rows()));
          const auto col = Eigen::Index(probe_rng.uniform() * double(s.cols()));
          auto f = [&](const std::vector<double>& z) {
            RealMatrix sr = s.row(row);
            sr(0, col) = z[0];
            return row_loss(sr, p.v, {0, 1, 2, 3}, l);
          };
          const double num = fd_gradient(f, {s(row, col)}, fd_step)[0];
          r.max_rel_error = std::max(r.max_rel_error, grad_rel_error(g.d_score(row, col), num));
        }
      }
    }
    const auto o = tay_attention(p.q, p.k, p.v, cfg.scale_tay, cfg.conjugate_keys);
    const auto g = grad_tay(p.q, p.k, p.v, l.gradient(o), cfg.scale_tay, cfg.conjugate_keys);
    for (int a = 0; a < 4; ++a) r.tay_sq[a] += g.d_score[a].squaredNorm();
    if (probes > 0) {
      const auto s = tay_score(p.q, p.k, cfg.scale_tay, cfg.conjugate_keys);
      for (std::size_t i = 0; i < probes; ++i) {
        const int a = int(probe_rng.uniform() * 4.0);
        const auto row = Eigen::Index(probe_rng.uniform() * double(s[a].rows()));
        const auto col = Eigen::Index(probe_rng.uniform() * double(s[a].cols()));
        auto f = [&](const std::vector<double>& z) {
          RealMatrix sr = s[a].row(row);
          sr(0, col) = z[0];
          return row_loss(sr, p.v, {a}, l);
        };
        const double num = fd_gradient(f, {s[a](row, col)}, fd_step)[0];
        r.max_rel_error = std::max(r.max_rel_error, grad_rel_error(g.d_score[a](row, col), num));
      }
    }
  }
  return r;
}

inline void require_grad_config(const GradNormConfig& c) {
  if (c.batch == 0 || c.seq_len == 0 || c.d_model == 0 || c.heads == 0 || c.trials == 0) {
    throw InvalidArgument("gradient experiment: zero dimension");
  }
  if (c.d_model % c.heads != 0) throw InvalidArgument("gradient experiment: d_model must be divisible by heads");
  if (!(c.input_std > 0.0)) throw InvalidArgument("gradient experiment: input_std must be > 0");
}

inline AttnConfig attn_config_for(const GradNormConfig& c) {
  auto cfg = AttnConfig::make(c.seq_len, c.d_model, c.heads);
  cfg.qk_norm = c.qk_norm;
  return cfg;
}

}  // namespace detail

/// Frobenius norms of dL/dS (shared) and dL/dS_α (component-wise) at random
/// initialization. Every trial draws fresh weights and a fresh batch from
/// substream `trial`; a trial's norm is taken over the whole [B, H, T, T]
/// gradient tensor.
inline GradReport grad_norm_experiment(const GradNormConfig& c, std::uint64_t seed) {
  detail::require_grad_config(c);
  const auto cfg = detail::attn_config_for(c);
  const LossSpec loss{c.loss};
  const Rng root(seed);
  std::vector<double> shared;
  std::array<std::vector<double>, 4> tay;
  GradReport rep;
  rep.config = c;
  rep.seed = seed;
  rep.trials = c.trials;
  for (std::size_t t = 0; t < c.trials; ++t) {
    Rng rng = root.substream(t);
    const auto heads = random_heads<double>(cfg, rng);
    Rng probe = rng.substream(0xfd);
    double s_sq = 0.0;
    std::array<double, 4> t_sq{};
    for (std::size_t b = 0; b < c.batch; ++b) {
      const QTensor x = qt_random(Shape{c.seq_len, c.d_model}, rng, c.input_std);
      const std::size_t probes = b == 0 ? c.fd_probes : 0;
      const auto r = detail::sample_gradients(x, heads, cfg, loss, probe, probes, c.fd_step);
      s_sq += r.shared_sq;
      for (int a = 0; a < 4; ++a) t_sq[a] += r.tay_sq[a];
      rep.max_rel_error = std::max(rep.max_rel_error, r.max_rel_error);
    }
    shared.push_back(std::sqrt(s_sq));
    for (int a = 0; a < 4; ++a) tay[a].push_back(std::sqrt(t_sq[a]));
  }
  rep.shared_norm = mean_std(shared);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int a = 0; a < 4; ++a) {
    rep.tay_norm[a] = mean_std(tay[a]);
    sum += rep.tay_norm[a].mean;
    sum_sq += rep.tay_norm[a].mean * rep.tay_norm[a].mean;
  }
  rep.ratio = sum / rep.shared_norm.mean;
  rep.stacked_ratio = std::sqrt(sum_sq) / rep.shared_norm.mean;
  const double avg = sum / 4.0;
  for (int a = 0; a < 4; ++a) {
    rep.component_spread = std::max(rep.component_spread, std::abs(rep.tay_norm[a].mean - avg) / avg);
  }
  return rep;
}

/// Pearson correlation matrix of a stream of 4-vectors. Entries involving a
/// zero-variance stream are NaN.
inline Eigen::Matrix4d pearson_matrix(const std::vector<std::array<double, 4>>& obs) {
  if (obs.size() < 2) throw InvalidArgument("pearson_matrix: need at least two observations");
  Eigen::MatrixXd m(Eigen::Index(obs.size()), 4);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    for (int a = 0; a < 4; ++a) m(Eigen::Index(i), a) = obs[i][a];
  }
  const Eigen::RowVectorXd mean = m.colwise().mean();
  const Eigen::MatrixXd centered = m.rowwise() - mean;
  const Eigen::Matrix4d cov = centered.transpose() * centered;
  Eigen::Matrix4d corr;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      corr(i, j) = i == j ? 1.0 : cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
    }
  }
  return corr;
}

enum class CorrelationUnit { per_sample, per_trial };

inline const char* to_string(CorrelationUnit u) { return u == CorrelationUnit::per_sample ? "per_sample" : "per_trial"; }

inline CorrelationUnit parse_unit(const std::string& s) {
  if (s == "per_sample") return CorrelationUnit::per_sample;
  if (s == "per_trial") return CorrelationUnit::per_trial;
  throw InvalidArgument("unknown correlation unit '" + s + "'");
}

struct GradCorrelation {
  Eigen::Matrix4d corr;
  std::size_t observations = 0;
  double max_abs_off_diagonal = 0.0;
};

/// Correlation of the four component-wise gradient norms ‖dL/dS_α‖_F under
/// fixed weights and random inputs. With per_sample every batch item of every
/// trial is one observation; with per_trial each trial's batch-aggregated
/// norms form one observation.
inline GradCorrelation grad_norm_correlation(const std::vector<AttnWeights>& weights, const GradNormConfig& c,
                                             std::uint64_t seed, CorrelationUnit unit = CorrelationUnit::per_sample) {
  detail::require_grad_config(c);
  if (c.trials < 2) throw InvalidArgument("grad_norm_correlation: trials must be >= 2");
  const auto cfg = detail::attn_config_for(c);
  if (weights.size() != cfg.heads) throw ShapeMismatch("grad_norm_correlation: one weight set per head required");
  const LossSpec loss{c.loss};
  const Rng root(seed);
  std::vector<std::array<double, 4>> obs;
  for (std::size_t t = 0; t < c.trials; ++t) {
    Rng rng = root.substream(t);
    Rng probe = rng.substream(0xfd);
    std::array<double, 4> trial_sq{};
    for (std::size_t b = 0; b < c.batch; ++b) {
      const QTensor x = qt_random(Shape{c.seq_len, c.d_model}, rng, c.input_std);
      const auto r = detail::sample_gradients(x, weights, cfg, loss, probe, 0, c.fd_step, false);
      if (unit == CorrelationUnit::per_sample) {
        obs.push_back({std::sqrt(r.tay_sq[0]), std::sqrt(r.tay_sq[1]), std::sqrt(r.tay_sq[2]), std::sqrt(r.tay_sq[3])});
      }
      for (int a = 0; a < 4; ++a) trial_sq[a] += r.tay_sq[a];
    }
    if (unit == CorrelationUnit::per_trial) {
      obs.push_back({std::sqrt(trial_sq[0]), std::sqrt(trial_sq[1]), std::sqrt(trial_sq[2]), std::sqrt(trial_sq[3])});
    }
  }
  GradCorrelation out;
  out.corr = pearson_matrix(obs);
  out.observations = obs.size();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i != j) out.max_abs_off_diagonal = std::max(out.max_abs_off_diagonal, std::abs(out.corr(i, j)));
    }
  }
  return out;
}

}  // namespace qsa
