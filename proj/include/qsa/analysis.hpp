#pragma once

// Inter-component agreement, distribution-similarity statistics, and exact
// score-decomposition verifiers.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qsa/attention.hpp"
#include "qsa/layers.hpp"

namespace qsa {

// ---------------------------------------------------------------- agreement

namespace detail {

inline void require_same_maps(const RealMatrix& a, const RealMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeMismatch(std::string(op) + ": map shapes differ");
  if (a.rows() == 0 || a.cols() == 0) throw ShapeMismatch(std::string(op) + ": empty map");
}

// Rank of entry j within row t (0 = largest); equal values rank lower index first.
inline Eigen::Index rank_in_row(const RealMatrix& m, Eigen::Index t, Eigen::Index j) {
  Eigen::Index r = 0;
  const double v = m(t, j);
  for (Eigen::Index s = 0; s < m.cols(); ++s) {
    if (m(t, s) > v || (m(t, s) == v && s < j)) ++r;
  }
  return r;
}

}  // namespace detail

/// Fraction of rows whose argmax positions coincide (ties: lowest index).
inline double agreement_rate(const RealMatrix& am, const RealMatrix& an) {
  detail::require_same_maps(am, an, "agreement_rate");
  Eigen::Index hits = 0;
  for (Eigen::Index t = 0; t < am.rows(); ++t) hits += argmax_row(am, t) == argmax_row(an, t) ? 1 : 0;
  return double(hits) / double(am.rows());
}

/// Fraction of rows where argmax(A_m) lies among the k largest entries of A_n.
/// Directional: A_m into A_n. Chance level is k/T.
inline double topk_agreement(const RealMatrix& am, const RealMatrix& an, std::size_t k) {
  detail::require_same_maps(am, an, "topk_agreement");
  if (k < 1 || k > std::size_t(an.cols())) throw InvalidArgument("topk_agreement: k must lie in [1, T]");
  Eigen::Index hits = 0;
  for (Eigen::Index t = 0; t < am.rows(); ++t) {
    hits += detail::rank_in_row(an, t, argmax_row(am, t)) < Eigen::Index(k) ? 1 : 0;
  }
  return double(hits) / double(am.rows());
}

inline constexpr std::array<std::pair<int, int>, 6> kComponentPairs{{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

/// Four component maps of one (layer, head, input) instance.
struct ComponentMaps {
  std::string label;
  std::array<RealMatrix, 4> maps;
};

struct PairAgreement {
  int m = 0;
  int n = 0;
  double mean = 0.0;    // unweighted mean over instances
  double std = 0.0;
  double pooled = 0.0;  // matching rows / all rows
  double topk_mean = 0.0;            // m into n
  double topk_symmetric_mean = 0.0;  // average of both directions
};

struct InstanceAgreement {
  std::string label;
  double mean = 0.0;  // average over the six pairs
  double std = 0.0;
};

struct AgreementReport {
  std::size_t seq_len = 0;
  std::size_t k = 1;
  double chance_level = 0.0;       // 1/T
  double topk_chance_level = 0.0;  // k/T
  std::vector<PairAgreement> pairs;
  double overall_mean = 0.0;
  double overall_std = 0.0;
  double overall_topk_mean = 0.0;
  std::vector<InstanceAgreement> instances;
};

inline AgreementReport agreement_report(const std::vector<ComponentMaps>& instances, std::size_t k = 5) {
  if (instances.empty()) throw InvalidArgument("agreement_report: no attention maps");
  const auto t_len = std::size_t(instances[0].maps[0].cols());
  for (const auto& inst : instances) {
    for (const auto& m : inst.maps) {
      if (std::size_t(m.cols()) != t_len) throw ShapeMismatch("agreement_report: inconsistent sequence length");
    }
  }
  AgreementReport rep;
  rep.seq_len = t_len;
  rep.k = std::min(k, t_len);
  rep.chance_level = 1.0 / double(t_len);
  rep.topk_chance_level = double(rep.k) / double(t_len);
  std::vector<double> overall(instances.size(), 0.0);
  std::vector<double> overall_topk(instances.size(), 0.0);
  for (const auto& [m, n] : kComponentPairs) {
    PairAgreement p;
    p.m = m;
    p.n = n;
    std::vector<double> rates;
    std::vector<double> topk;
    std::vector<double> topk_sym;
    double rows = 0.0;
    double hits = 0.0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& am = instances[i].maps[m];
      const auto& an = instances[i].maps[n];
      const double r = agreement_rate(am, an);
      rates.push_back(r);
      hits += r * double(am.rows());
      rows += double(am.rows());
      const double tk = topk_agreement(am, an, rep.k);
      topk.push_back(tk);
      topk_sym.push_back(0.5 * (tk + topk_agreement(an, am, rep.k)));
      overall[i] += r / 6.0;
      overall_topk[i] += tk / 6.0;
    }
    double sum = 0.0;
    for (double r : rates) sum += r;
    p.mean = sum / double(rates.size());
    double ss = 0.0;
    for (double r : rates) ss += (r - p.mean) * (r - p.mean);
    p.std = rates.size() > 1 ? std::sqrt(ss / double(rates.size() - 1)) : 0.0;
    p.pooled = hits / rows;
    for (std::size_t i = 0; i < topk.size(); ++i) {
      p.topk_mean += topk[i] / double(topk.size());
      p.topk_symmetric_mean += topk_sym[i] / double(topk.size());
    }
    rep.pairs.push_back(p);
  }
  double sum = 0.0;
  for (double o : overall) sum += o;
  rep.overall_mean = sum / double(overall.size());
  double ss = 0.0;
  for (double o : overall) ss += (o - rep.overall_mean) * (o - rep.overall_mean);
  rep.overall_std = overall.size() > 1 ? std::sqrt(ss / double(overall.size() - 1)) : 0.0;
  for (double o : overall_topk) rep.overall_topk_mean += o / double(overall_topk.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    std::vector<double> r;
    for (const auto& [m, n] : kComponentPairs) r.push_back(agreement_rate(instances[i].maps[m], instances[i].maps[n]));
    InstanceAgreement ia;
    ia.label = instances[i].label;
    ia.mean = overall[i];
    for (double x : r) ia.std += (x - ia.mean) * (x - ia.mean);
    ia.std = std::sqrt(ia.std / 5.0);
    rep.instances.push_back(ia);
  }
  return rep;
}

// --------------------------------------------------------------- similarity

namespace detail {

inline std::vector<double> sorted_copy(std::span<const double> x, const char* op) {
  if (x.empty()) throw InvalidArgument(std::string(op) + ": empty sample");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  return s;
}

// Linear interpolation between order statistics at probability p in [0, 1].
inline double quantile_sorted(const std::vector<double>& s, double p) {
  if (s.size() == 1) return s[0];
  const double pos = p * double(s.size() - 1);
  const auto lo = std::size_t(std::floor(pos));
  if (lo + 1 >= s.size()) return s.back();
  const double frac = pos - double(lo);
  return s[lo] + frac * (s[lo + 1] - s[lo]);
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw InvalidArgument("pearson: zero-variance input, correlation undefined");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

/// Two-sample KS statistic sup |F_a − F_b|, exact merge-scan over sorted samples.
inline double ks_statistic(std::span<const double> a, std::span<const double> b) {
  const auto sa = detail::sorted_copy(a, "ks_statistic");
  const auto sb = detail::sorted_copy(b, "ks_statistic");
  const double na = double(sa.size());
  const double nb = double(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    d = std::max(d, std::abs(double(i) / na - double(j) / nb));
  }
  return d;
}

/// 1-Wasserstein distance between empirical distributions. Equal sizes: mean
/// |sorted a − sorted b|. Unequal sizes: the larger sample is replaced by its
/// linearly interpolated quantiles at the smaller sample's positions i/(n−1).
inline double wasserstein1(std::span<const double> a, std::span<const double> b) {
  auto sa = detail::sorted_copy(a, "wasserstein1");
  auto sb = detail::sorted_copy(b, "wasserstein1");
  if (sa.size() != sb.size()) {
    auto& small = sa.size() < sb.size() ? sa : sb;
    auto& large = sa.size() < sb.size() ? sb : sa;
    std::vector<double> resampled(small.size());
    for (std::size_t i = 0; i < small.size(); ++i) {
      const double p = small.size() == 1 ? 0.5 : double(i) / double(small.size() - 1);
      resampled[i] = detail::quantile_sorted(large, p);
    }
    large = std::move(resampled);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) acc += std::abs(sa[i] - sb[i]);
  return acc / double(sa.size());
}

/// Pearson correlation of the two empirical quantile functions at n_q
/// equispaced probabilities i/(n_q − 1).
inline double quantile_correlation(std::span<const double> a, std::span<const double> b, std::size_t n_q) {
  if (n_q < 2) throw InvalidArgument("quantile_correlation: n_q must be >= 2");
  const auto sa = detail::sorted_copy(a, "quantile_correlation");
  const auto sb = detail::sorted_copy(b, "quantile_correlation");
  std::vector<double> qa(n_q);
  std::vector<double> qb(n_q);
  for (std::size_t i = 0; i < n_q; ++i) {
    const double p = double(i) / double(n_q - 1);
    qa[i] = detail::quantile_sorted(sa, p);
    qb[i] = detail::quantile_sorted(sb, p);
  }
  return detail::pearson(qa, qb);
}

struct SimilarityReport {
  double ks_stat = 0.0;
  double wasserstein = 0.0;
  std::optional<double> quantile_corr;  // empty when undefined (zero variance)
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  std::size_t n_q = 0;
};

inline SimilarityReport similarity_report(std::span<const double> a, std::span<const double> b,
                                          std::size_t n_q = 1000) {
  SimilarityReport r;
  r.ks_stat = ks_statistic(a, b);
  r.wasserstein = wasserstein1(a, b);
  try {
    r.quantile_corr = quantile_correlation(a, b, n_q);
  } catch (const InvalidArgument&) {
    r.quantile_corr.reset();
  }
  r.n_a = a.size();
  r.n_b = b.size();
  r.n_q = n_q;
  return r;
}

/// All entries of the four planes, plane by plane.
inline std::vector<double> flatten_planes(const QTensor& t) {
  std::vector<double> out;
  out.reserve(4 * t.size());
  for (int c = 0; c < 4; ++c) out.insert(out.end(), t.plane(c).begin(), t.plane(c).end());
  return out;
}

// ------------------------------------------------------------ decomposition
//
// With Q = X ⊗ W_Q and K = X ⊗ W_K, Q_μ = Σ_β X_β Φ_μβ and K_ν = Σ_γ X_γ Ψ_νγ,
// where Φ_μβ = σ W_Q,ν for the Hamilton term (β, ν, σ) of component μ.
// Then  S_α^Tay = Σ_βγ X_β Λ_α^βγ X_γᵀ,  Λ_α^βγ = Σ_(μ,ν)∈I_α σ_α,μν Φ_μβ Ψ_νγᵀ
// and   S       = Σ_βγ X_β M^βγ X_γᵀ,    M^βγ   = Σ_α Φ_αβ Ψ_αγᵀ.
// Scores here are unscaled.

using BlockGrid = std::array<std::array<RealMatrix, 4>, 4>;

/// Φ(W)[μ][β], each d_in x d_h.
inline BlockGrid phi_blocks(const QTensor& w) {
  w.require_rank(2, "phi_blocks");
  BlockGrid phi;
  for (int mu = 0; mu < 4; ++mu) {
    for (int beta = 0; beta < 4; ++beta) {
      const auto [nu, sign] = hamilton_partner(mu, beta);
      phi[mu][beta] = double(sign) * w.mat(nu);
    }
  }
  return phi;
}

enum class DecompositionKind { componentwise, shared };

struct DecompositionReport {
  DecompositionKind kind = DecompositionKind::componentwise;
  /// max |bilinear reconstruction − directly computed unscaled score|
  double residual_max_abs = 0.0;
  /// max |coefficient matrices via block products − via unit/sign sums of generators|
  double membership_residual = 0.0;
  /// componentwise: blocks[α][β][γ] = Λ_α^βγ. shared: blocks[0][β][γ] = M^βγ.
  std::vector<BlockGrid> blocks;
};

namespace detail {

inline void require_decomposition_shapes(const QTensor& x, const QTensor& wq, const QTensor& wk) {
  x.require_rank(2, "decompose");
  wq.require_rank(2, "decompose");
  wk.require_rank(2, "decompose");
  if (wq.shape() != wk.shape()) throw ShapeMismatch("decompose: W_Q and W_K shapes differ");
  if (x.cols() != wq.rows()) throw ShapeMismatch("decompose: X width != d_in");
}

// Big 4 d_in x 4 d_h matrix with block (β, μ) = Φ_μβ.
inline RealMatrix stacked_blocks(const BlockGrid& phi) {
  const auto din = phi[0][0].rows();
  const auto dh = phi[0][0].cols();
  RealMatrix p(4 * din, 4 * dh);
  for (int mu = 0; mu < 4; ++mu) {
    for (int beta = 0; beta < 4; ++beta) p.block(beta * din, mu * dh, din, dh) = phi[mu][beta];
  }
  return p;
}

// Σ_βγ X_β C^βγ X_γᵀ
inline RealMatrix bilinear_reconstruction(const QTensor& x, const BlockGrid& coeff) {
  RealMatrix s = RealMatrix::Zero(Eigen::Index(x.rows()), Eigen::Index(x.rows()));
  for (int beta = 0; beta < 4; ++beta) {
    for (int gamma = 0; gamma < 4; ++gamma) s.noalias() += x.mat(beta) * coeff[beta][gamma] * x.mat(gamma).transpose();
  }
  return s;
}

inline double max_abs(const RealMatrix& a, const RealMatrix& b) {
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Verifies S_α^Tay = Σ X_β Λ_α^βγ X_γᵀ against the directly computed,
/// unscaled component-wise score.
inline DecompositionReport decompose_tay(const QTensor& x, const QTensor& wq, const QTensor& wk,
                                         bool conjugate_keys = false) {
  detail::require_decomposition_shapes(x, wq, wk);
  const auto phi = phi_blocks(wq);
  const auto psi = phi_blocks(wk);
  const auto din = Eigen::Index(wq.rows());
  const auto dh = Eigen::Index(wq.cols());

  // Route 1: generator sums with the Hamilton signs.
  DecompositionReport rep;
  rep.kind = DecompositionKind::componentwise;
  rep.blocks.resize(4);
  for (int alpha = 0; alpha < 4; ++alpha) {
    for (int beta = 0; beta < 4; ++beta) {
      for (int gamma = 0; gamma < 4; ++gamma) {
        RealMatrix lam = RealMatrix::Zero(din, din);
        for (const auto& t : kHamiltonTerms[alpha]) {
          const int sign = detail::key_sign(t.sign, t.nu, conjugate_keys);
          lam.noalias() += double(sign) * phi[t.mu][beta] * psi[t.nu][gamma].transpose();
        }
        rep.blocks[alpha][beta][gamma] = std::move(lam);
      }
    }
  }

  // Route 2: one block product P D_α Rᵀ with D_α the signed selection of I_α.
  const RealMatrix p = detail::stacked_blocks(phi);
  const RealMatrix r = detail::stacked_blocks(psi);
  for (int alpha = 0; alpha < 4; ++alpha) {
    RealMatrix d = RealMatrix::Zero(4 * dh, 4 * dh);
    for (const auto& t : kHamiltonTerms[alpha]) {
      d.block(t.mu * dh, t.nu * dh, dh, dh) =
          double(detail::key_sign(t.sign, t.nu, conjugate_keys)) * RealMatrix::Identity(dh, dh);
    }
    const RealMatrix full = p * d * r.transpose();
    for (int beta = 0; beta < 4; ++beta) {
      for (int gamma = 0; gamma < 4; ++gamma) {
        rep.membership_residual = std::max(
            rep.membership_residual,
            detail::max_abs(full.block(beta * din, gamma * din, din, din), rep.blocks[alpha][beta][gamma]));
      }
    }
  }

  const QTensor q = qlinear_forward(x, wq);
  const QTensor k = qlinear_forward(x, wk);
  const auto direct = tay_score(q, k, 1.0, conjugate_keys);
  for (int alpha = 0; alpha < 4; ++alpha) {
    rep.residual_max_abs = std::max(rep.residual_max_abs,
                                    detail::max_abs(detail::bilinear_reconstruction(x, rep.blocks[alpha]), direct[alpha]));
  }
  return rep;
}

/// Verifies S = Re(Q ⊗ K†) = Σ X_β M^βγ X_γᵀ, M^βγ = Σ_α Φ_αβ Ψ_αγᵀ.
inline DecompositionReport decompose_ours(const QTensor& x, const QTensor& wq, const QTensor& wk) {
  detail::require_decomposition_shapes(x, wq, wk);
  const auto phi = phi_blocks(wq);
  const auto psi = phi_blocks(wk);
  const auto din = Eigen::Index(wq.rows());

  DecompositionReport rep;
  rep.kind = DecompositionKind::shared;
  rep.blocks.resize(1);
  for (int beta = 0; beta < 4; ++beta) {
    for (int gamma = 0; gamma < 4; ++gamma) {
      RealMatrix m = RealMatrix::Zero(din, din);
      for (int alpha = 0; alpha < 4; ++alpha) m.noalias() += phi[alpha][beta] * psi[alpha][gamma].transpose();
      rep.blocks[0][beta][gamma] = std::move(m);
    }
  }

  // The unit-coefficient combination of generators, formed as one block product.
  const RealMatrix full = detail::stacked_blocks(phi) * detail::stacked_blocks(psi).transpose();
  for (int beta = 0; beta < 4; ++beta) {
    for (int gamma = 0; gamma < 4; ++gamma) {
      rep.membership_residual = std::max(
          rep.membership_residual, detail::max_abs(full.block(beta * din, gamma * din, din, din), rep.blocks[0][beta][gamma]));
    }
  }

  const QTensor q = qlinear_forward(x, wq);
  const QTensor k = qlinear_forward(x, wk);
  rep.residual_max_abs = detail::max_abs(detail::bilinear_reconstruction(x, rep.blocks[0]), shared_score(q, k, 1.0));
  return rep;
}

struct DecompositionInputs {
  QTensor x;
  QTensor wq;
  QTensor wk;
};

/// Random instance `i`: X on stream 3i with unit std, W_Q and W_K on streams
/// 3i+1 and 3i+2 with std 1/sqrt(4 d_in). Matches `gen` with the same seed
/// and stream.
inline DecompositionInputs decomposition_inputs(std::size_t i, std::size_t seq_len, std::size_t d_in,
                                                std::size_t d_h, std::uint64_t seed) {
  if (seq_len == 0 || d_in == 0 || d_h == 0) throw InvalidArgument("decomposition_inputs: zero dimension");
  Rng rx(seed, 3 * i);
  Rng rq(seed, 3 * i + 1);
  Rng rk(seed, 3 * i + 2);
  const double ws = 1.0 / std::sqrt(4.0 * double(d_in));
  return {qt_random(Shape{seq_len, d_in}, rx, 1.0), qt_random(Shape{d_in, d_h}, rq, ws),
          qt_random(Shape{d_in, d_h}, rk, ws)};
}

struct DecompositionSweep {
  std::size_t instances = 0;
  double tay_residual = 0.0;
  double ours_residual = 0.0;
  double membership_residual = 0.0;
};

/// Worst residuals over `instances` random draws of decomposition_inputs.
inline DecompositionSweep decomposition_sweep(std::size_t instances, std::size_t seq_len, std::size_t d_in,
                                              std::size_t d_h, std::uint64_t seed) {
  if (instances == 0) throw InvalidArgument("decomposition_sweep: no instances");
  DecompositionSweep sw;
  sw.instances = instances;
  for (std::size_t i = 0; i < instances; ++i) {
    const auto in = decomposition_inputs(i, seq_len, d_in, d_h, seed);
    const auto t = decompose_tay(in.x, in.wq, in.wk);
    const auto o = decompose_ours(in.x, in.wq, in.wk);
    sw.tay_residual = std::max(sw.tay_residual, t.residual_max_abs);
    sw.ours_residual = std::max(sw.ours_residual, o.residual_max_abs);
    sw.membership_residual = std::max({sw.membership_residual, t.membership_residual, o.membership_residual});
  }
  return sw;
}

}  // namespace qsa
