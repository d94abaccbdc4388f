#pragma once

// Command-line front end. run() returns 0 on success, 1 when a verification
// fails or a file cannot be read/written, 2 on usage errors.

#include <functional>
#include <iomanip>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qsa/qsa.hpp"

namespace qsa::cli {

inline constexpr int kOk = 0;
inline constexpr int kVerificationFailure = 1;
inline constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutputOptions {
  std::string path;
  std::string format;  // "csv", "json", or empty for by-extension

  bool json() const {
    if (!format.empty()) return format == "json";
    return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  }
};

inline void add_output_flags(CLI::App* cmd, OutputOptions& o) {
  cmd->add_option("--out", o.path, "Write the report to this file (CSV or JSON)");
  cmd->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"csv", "json"}));
}

inline void emit(const OutputOptions& o, const std::string& csv, const Json& json) {
  if (o.path.empty()) return;
  try {
    write_text(o.path, o.json() ? json.dump(2) + "\n" : csv);
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
}

inline QTensor load_qtb(const std::string& path) {
  try {
    return read_qtb(path);
  } catch (const QtbError& e) {
    throw IoError(e.what());
  }
}

// ------------------------------------------------------------------ selftest

struct SelfTestOptions {
  std::uint64_t seed = 42;
  double tol_decomp = 1e-9;
  double tol_grad = 1e-6;
  double tol_algebra = 1e-12;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline std::vector<CheckResult> run_selftest(const SelfTestOptions& o) {
  std::vector<CheckResult> out;
  const auto check = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    try {
      auto [ok, detail] = fn();
      out.push_back({name, ok, detail});
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("exception: ") + e.what()});
    }
  };

  check("hamilton_basis", [] {
    const std::array<Quaternion, 4> e{Quaternion{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    for (int mu = 0; mu < 4; ++mu) {
      for (int nu = 0; nu < 4; ++nu) {
        const auto p = qmul(e[mu], e[nu]);
        for (int alpha = 0; alpha < 4; ++alpha) {
          int expect = 0;
          for (const auto& t : kHamiltonTerms[alpha]) {
            if (t.mu == mu && t.nu == nu) expect = t.sign;
          }
          if (p[alpha] != double(expect)) return std::pair{false, std::string("sign table disagrees with qmul")};
        }
      }
    }
    return std::pair{true, std::string("16 basis products")};
  });

  check("inner_product", [&] {
    Rng rng(o.seed, 101);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const auto r = [&] { return Quaternion{rng.normal(), rng.normal(), rng.normal(), rng.normal()}; };
      const auto p = r();
      const auto q = r();
      const auto s = r();
      const double a = rng.normal();
      worst = std::max(worst, std::abs(qdot(p, q) - qdot(q, p)));
      worst = std::max(worst, std::abs(qdot(p * a + s, q) - (a * qdot(p, q) + qdot(s, q))));
      worst = std::max(worst, std::abs(qdot(p, q) - qmul(p, qconj(q)).q0));
      if (!(qdot(p, p) > 0.0)) return std::pair{false, std::string("not positive")};
    }
    const Quaternion i{0, 1, 0, 0};
    const bool counter = qmul(i, i).q0 == -1.0;
    return std::pair{worst <= o.tol_algebra && counter, "max err " + fmt_num(worst)};
  });

  check("shared_score_equivalence", [&] {
    Rng rng(o.seed, 102);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const auto q = qt_random(Shape{6, 4}, rng, 1.0);
      const auto k = qt_random(Shape{5, 4}, rng, 1.0);
      const RealMatrix s = shared_score(q, k, 1.0);
      for (Eigen::Index a = 0; a < s.rows(); ++a) {
        for (Eigen::Index b = 0; b < s.cols(); ++b) {
          double acc = 0.0;
          for (std::size_t d = 0; d < 4; ++d) acc += qmul(q.at(a, d), qconj(k.at(b, d))).q0;
          worst = std::max(worst, std::abs(acc - s(a, b)));
        }
      }
    }
    return std::pair{worst <= o.tol_algebra, "max err " + fmt_num(worst)};
  });

  check("decomposition", [&] {
    const auto sw = decomposition_sweep(20, 6, 3, 2, o.seed);
    const double worst = std::max({sw.tay_residual, sw.ours_residual, sw.membership_residual});
    return std::pair{worst < o.tol_decomp, "max residual " + fmt_num(worst)};
  });

  check("gradients", [&] {
    GradNormConfig c;
    c.batch = 2;
    c.seq_len = 6;
    c.d_model = 4;
    c.trials = 3;
    c.fd_probes = 16;
    const auto r = grad_norm_experiment(c, o.seed);
    return std::pair{r.max_rel_error <= o.tol_grad, "max rel err " + fmt_num(r.max_rel_error)};
  });

  check("cost_counters", [&] {
    for (auto mode : {AttentionMode::shared, AttentionMode::componentwise}) {
      auto cfg = AttnConfig::make(16, 8, 2, mode);
      Rng rng(o.seed, 103);
      const auto x = qt_random(Shape{16, 8}, rng, 1.0);
      const auto heads = random_heads<double>(cfg, rng);
      reset_cost_counters();
      (void)mha_forward(x, heads, cfg);
      if (!(cost_counters() == expected_counters(cfg, mode))) {
        return std::pair{false, std::string("counter mismatch in ") + to_string(mode)};
      }
    }
    return std::pair{true, std::string("4/1 vs 16/4 per head")};
  });

  check("macs_ratio", [] {
    const auto cfg = AttnConfig::make(512, 64, 8);
    const auto s = macs_model(cfg, AttentionMode::shared);
    const auto t = macs_model(cfg, AttentionMode::componentwise);
    const bool ok = 4 * s.score_stage == t.score_stage && 4 * s.softmax_ops == t.softmax_ops;
    return std::pair{ok, "total ratio " + fmt_num(double(t.total) / double(s.total))};
  });

  check("param_ratio", [] {
    const auto l = param_count(LinearSpec{64, 64});
    const auto c = param_count(ConvSpec{3, 3, 3});
    return std::pair{l.ratio == 0.25 && c.ratio == 0.25, std::string("0.25")};
  });

  check("agreement", [] {
    RealMatrix a = RealMatrix::Identity(4, 4);
    RealMatrix b = a;
    b.row(0).setZero();
    b(0, 1) = 1.0;
    b.row(1).setZero();
    b(1, 2) = 1.0;
    const bool ok = agreement_rate(a, a) == 1.0 && agreement_rate(a, b) == 0.5 && topk_agreement(a, b, 4) == 1.0;
    return std::pair{ok, std::string("constructed maps")};
  });

  check("similarity", [] {
    const std::vector<double> a{0.1, 0.4, 0.4, 2.0, -1.0};
    const auto r = similarity_report(a, a, 16);
    const bool ok = r.ks_stat == 0.0 && r.wasserstein == 0.0 && r.quantile_corr && std::abs(*r.quantile_corr - 1.0) < 1e-12;
    return std::pair{ok, std::string("identical samples")};
  });

  check("qtb_roundtrip", [&] {
    Rng rng(o.seed, 104);
    const auto t = qt_random(Shape{3, 2, 2}, rng, 1.0);
    return std::pair{qtb_decode(qtb_encode(t)) == t, std::string("bit-exact")};
  });
  return out;
}

// ----------------------------------------------------------------- commands

inline std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

inline int cmd_selftest(const SelfTestOptions& o, std::ostream& out) {
  const auto results = run_selftest(o);
  bool all = true;
  for (const auto& r : results) {
    out << (r.pass ? "ok   " : "FAIL ") << pad(r.name, 26) << r.detail << '\n';
    all = all && r.pass;
  }
  out << (all ? "all checks passed" : "selftest failed") << '\n';
  return all ? kOk : kVerificationFailure;
}

struct BenchOptions {
  std::vector<std::size_t> seq{512, 1024, 2048, 4096};
  std::size_t d_model = 64;
  std::size_t heads = 8;
  std::string mode = "both";
  std::size_t warmup = 50;
  std::size_t reps = 200;
  std::size_t workers = 1;
  std::string precision = "f64";
  bool include_projections = false;
  std::uint64_t seed = 42;
  OutputOptions output;
};

inline std::vector<AttentionMode> modes_for(const std::string& m) {
  if (m == "both") return {AttentionMode::shared, AttentionMode::componentwise};
  return {parse_mode(m)};
}

inline std::vector<BenchRow> macs_rows(const BenchOptions& o) {
  std::vector<BenchRow> rows;
  for (auto t : o.seq) {
    for (auto mode : modes_for(o.mode)) {
      const auto cfg = AttnConfig::make(t, o.d_model, o.heads, mode);
      rows.push_back({t, mode, macs_model(cfg, mode, o.include_projections), std::nullopt, std::nullopt});
    }
  }
  return rows;
}

inline void print_bench(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << pad("T", 7) << pad("mode", 15) << pad("macs_total", 14) << pad("macs_score", 14) << pad("softmax", 9)
      << pad("median_ms", 12) << pad("mad_ms", 10) << "speedup\n";
  for (const auto& r : rows) {
    out << pad(std::to_string(r.seq_len), 7) << pad(to_string(r.mode), 15) << pad(std::to_string(r.macs.total), 14)
        << pad(std::to_string(r.macs.score_stage), 14) << pad(std::to_string(r.macs.softmax_ops), 9)
        << pad(r.timing ? fmt_num(std::round(r.timing->median_ms * 1000) / 1000) : "-", 12)
        << pad(r.timing ? fmt_num(std::round(r.timing->mad_ms * 1000) / 1000) : "-", 10)
        << (r.speedup_vs_componentwise ? fmt_num(std::round(*r.speedup_vs_componentwise * 100) / 100) : "-") << '\n';
  }
}

inline int cmd_macs(const BenchOptions& o, std::ostream& out) {
  const auto rows = macs_rows(o);
  print_bench(rows, out);
  for (auto t : o.seq) {
    const auto cfg = AttnConfig::make(t, o.d_model, o.heads);
    const auto s = macs_model(cfg, AttentionMode::shared, o.include_projections);
    const auto c = macs_model(cfg, AttentionMode::componentwise, o.include_projections);
    out << "T=" << t << "  total ratio componentwise/shared = " << fmt_num(double(c.total) / double(s.total))
        << "  score ratio = " << fmt_num(double(c.score_stage) / double(s.score_stage)) << '\n';
  }
  emit(o.output, bench_csv(rows), bench_json(rows));
  return kOk;
}

inline int cmd_bench(const BenchOptions& o, std::ostream& out) {
  auto rows = macs_rows(o);
  const auto prec = parse_precision(o.precision);
  bool counters_ok = true;
  for (auto& r : rows) {
    const auto cfg = AttnConfig::make(r.seq_len, o.d_model, o.heads, r.mode);
    r.timing = time_attention(cfg, r.mode, o.warmup, o.reps, o.seed, prec, o.workers);
    counters_ok = counters_ok && r.timing->counters_match_model;
  }
  fill_speedups(rows);
  print_bench(rows, out);
  out << "precision " << to_string(prec) << ", warmup " << o.warmup << ", reps " << o.reps;
  if (o.workers == 1) {
    out << ", single worker\n";
  } else {
    out << ", " << o.workers << " workers (not comparable with single-worker timings)\n";
  }
  emit(o.output, bench_csv(rows), bench_json(rows));
  if (!counters_ok) {
    out << "instrumented counters disagree with the MACs model\n";
    return kVerificationFailure;
  }
  return kOk;
}

struct GradOptions {
  GradNormConfig cfg;
  std::string loss = "sum_output";
  std::string unit = "per_sample";
  double tol_grad = 1e-6;
  double tol_offdiag = 0.1;
  std::uint64_t seed = 42;
  OutputOptions output;
};

inline int cmd_gradnorm(GradOptions o, std::ostream& out) {
  o.cfg.loss = parse_loss(o.loss);
  const auto r = grad_norm_experiment(o.cfg, o.seed);
  out << "shared         ||dL/dS||     mean " << fmt_num(r.shared_norm.mean) << "  std " << fmt_num(r.shared_norm.std)
      << '\n';
  for (int a = 0; a < 4; ++a) {
    out << "componentwise  ||dL/dS_" << a << "||   mean " << fmt_num(r.tay_norm[a].mean) << "  std "
        << fmt_num(r.tay_norm[a].std) << '\n';
  }
  out << "ratio sum_a/shared " << fmt_num(r.ratio) << "  stacked " << fmt_num(r.stacked_ratio) << "  component spread " << fmt_num(r.component_spread)
      << "  fd max rel err " << fmt_num(r.max_rel_error) << '\n';
  emit(o.output, gradnorm_csv(r), to_json(r));
  return r.max_rel_error <= o.tol_grad ? kOk : kVerificationFailure;
}

inline int cmd_gradcorr(GradOptions o, std::ostream& out) {
  o.cfg.loss = parse_loss(o.loss);
  const auto unit = parse_unit(o.unit);
  auto cfg = detail::attn_config_for(o.cfg);
  Rng wrng(o.seed, 0x77);
  const auto weights = random_heads<double>(cfg, wrng);
  const auto g = grad_norm_correlation(weights, o.cfg, o.seed, unit);
  out << "correlation of ||dL/dS_a|| (" << to_string(unit) << ", " << g.observations << " observations)\n";
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 4; ++k) out << std::setw(10) << std::fixed << std::setprecision(4) << g.corr(i, k);
    out << '\n';
  }
  out.unsetf(std::ios::floatfield);
  out << "max |off-diagonal| " << fmt_num(g.max_abs_off_diagonal) << '\n';
  emit(o.output, gradcorr_csv(g), to_json(g, unit));
  return g.max_abs_off_diagonal < o.tol_offdiag ? kOk : kVerificationFailure;
}

struct AgreementOptions {
  std::vector<std::string> maps;
  std::size_t seq = 64;
  std::size_t d_model = 64;
  std::size_t heads = 8;
  std::size_t inputs = 4;
  std::size_t k = 5;
  std::uint64_t seed = 42;
  OutputOptions output;
};

/// Maps from QTB tensors of shape [4, T, T] or [N, 4, T, T], values in q0.
inline std::vector<ComponentMaps> maps_from_files(const std::vector<std::string>& paths) {
  std::vector<ComponentMaps> out;
  for (const auto& p : paths) {
    const auto t = load_qtb(p);
    const auto& s = t.shape();
    if (!((s.size() == 3 && s[0] == 4) || (s.size() == 4 && s[1] == 4))) {
      throw UsageError(p + ": expected shape [4,T,T] or [N,4,T,T], got " + shape_string(s));
    }
    const std::size_t n = s.size() == 3 ? 1 : s[0];
    const std::size_t r = s[s.size() - 2];
    const std::size_t c = s[s.size() - 1];
    for (std::size_t i = 0; i < n; ++i) {
      ComponentMaps cm;
      cm.label = p + "#" + std::to_string(i);
      for (int a = 0; a < 4; ++a) {
        cm.maps[a] = ConstMatrixMap<double>(t.plane(0).data() + (i * 4 + a) * r * c, Eigen::Index(r), Eigen::Index(c));
      }
      out.push_back(std::move(cm));
    }
  }
  return out;
}

/// Component maps of randomly initialized heads on random inputs.
inline std::vector<ComponentMaps> random_init_maps(const AgreementOptions& o) {
  auto cfg = AttnConfig::make(o.seq, o.d_model, o.heads, AttentionMode::componentwise);
  Rng rng(o.seed);
  const auto heads = random_heads<double>(cfg, rng);
  std::vector<ComponentMaps> out;
  for (std::size_t i = 0; i < o.inputs; ++i) {
    const auto x = qt_random(Shape{o.seq, o.d_model}, rng, 1.0);
    for (std::size_t h = 0; h < o.heads; ++h) {
      const auto p = project_head(x, heads[h], cfg);
      auto maps = tay_attention_maps(p.q, p.k, cfg.scale_tay, cfg.conjugate_keys);
      ComponentMaps cm;
      cm.label = "input" + std::to_string(i) + "/head" + std::to_string(h);
      for (int a = 0; a < 4; ++a) cm.maps[a] = std::move(maps[a]);
      out.push_back(std::move(cm));
    }
  }
  return out;
}

inline int cmd_agreement(const AgreementOptions& o, std::ostream& out) {
  const auto inst = o.maps.empty() ? random_init_maps(o) : maps_from_files(o.maps);
  const auto r = agreement_report(inst, o.k);
  out << inst.size() << " map sets, T=" << r.seq_len << ", k=" << r.k << '\n';
  out << pad("pair", 8) << pad("mean%", 10) << pad("std%", 10) << pad("pooled%", 10) << pad("top-k%", 10)
      << "top-k sym%\n";
  const auto pct = [](double v) { return fmt_num(std::round(v * 10000) / 100); };
  for (const auto& p : r.pairs) {
    out << pad("q" + std::to_string(p.m) + "-q" + std::to_string(p.n), 8) << pad(pct(p.mean), 10)
        << pad(pct(p.std), 10) << pad(pct(p.pooled), 10) << pad(pct(p.topk_mean), 10) << pct(p.topk_symmetric_mean)
        << '\n';
  }
  out << pad("overall", 8) << pad(pct(r.overall_mean), 10) << pad(pct(r.overall_std), 10) << '\n';
  out << "chance 1/T = " << pct(r.chance_level) << "%, k/T = " << pct(r.topk_chance_level) << "%\n";
  emit(o.output, agreement_csv(r), to_json(r));
  return kOk;
}

struct SimOptions {
  std::string a;
  std::string b;
  int plane = -1;
  std::size_t n_q = 1000;
  std::size_t seq = 128;
  std::size_t d_model = 64;
  std::size_t heads = 8;
  std::uint64_t seed = 42;
  OutputOptions output;
};

inline std::vector<double> sample_values(const QTensor& t, int plane) {
  if (plane < 0) return flatten_planes(t);
  return {t.plane(plane).begin(), t.plane(plane).end()};
}

inline int cmd_simcompare(const SimOptions& o, std::ostream& out) {
  std::vector<double> a;
  std::vector<double> b;
  if (o.a.empty() != o.b.empty()) throw UsageError("simcompare: give both --a and --b, or neither");
  if (!o.a.empty()) {
    a = sample_values(load_qtb(o.a), o.plane);
    b = sample_values(load_qtb(o.b), o.plane);
    out << "comparing " << o.a << " and " << o.b << '\n';
  } else {
    // Shared vs componentwise outputs for one random input under identical weights.
    auto cfg = AttnConfig::make(o.seq, o.d_model, o.heads);
    Rng rng(o.seed);
    const auto heads = random_heads<double>(cfg, rng);
    const auto x = qt_random(Shape{o.seq, o.d_model}, rng, 1.0);
    a = sample_values(mha_forward(x, heads, cfg), o.plane);
    cfg.mode = AttentionMode::componentwise;
    b = sample_values(mha_forward(x, heads, cfg), o.plane);
    out << "comparing shared vs componentwise outputs at random init\n";
  }
  const auto r = similarity_report(a, b, o.n_q);
  out << "n_a " << r.n_a << "  n_b " << r.n_b << '\n';
  out << "KS statistic        " << fmt_num(r.ks_stat) << '\n';
  out << "Wasserstein-1       " << fmt_num(r.wasserstein) << '\n';
  out << "quantile corr       " << (r.quantile_corr ? fmt_num(*r.quantile_corr) : "undefined") << '\n';
  emit(o.output, similarity_csv(r), to_json(r));
  return kOk;
}

struct DecomposeOptions {
  std::size_t d_in = 2;
  std::size_t d_h = 2;
  std::size_t seq = 4;
  std::size_t instances = 1;
  std::vector<std::string> from_files;
  bool conjugate_keys = false;
  double tol_decomp = 1e-9;
  std::uint64_t seed = 42;
  OutputOptions output;
};

inline int cmd_decompose(const DecomposeOptions& o, std::ostream& out) {
  std::vector<DecompositionInputs> cases;
  if (!o.from_files.empty()) {
    if (o.from_files.size() != 3) throw UsageError("decompose: --from-files takes X W_Q W_K");
    cases.push_back({load_qtb(o.from_files[0]), load_qtb(o.from_files[1]), load_qtb(o.from_files[2])});
  } else {
    for (std::size_t i = 0; i < o.instances; ++i) cases.push_back(decomposition_inputs(i, o.seq, o.d_in, o.d_h, o.seed));
  }
  DecompositionReport worst_tay;
  DecompositionReport worst_ours;
  worst_ours.kind = DecompositionKind::shared;
  for (const auto& c : cases) {
    const auto t = decompose_tay(c.x, c.wq, c.wk, o.conjugate_keys);
    const auto s = decompose_ours(c.x, c.wq, c.wk);
    worst_tay.residual_max_abs = std::max(worst_tay.residual_max_abs, t.residual_max_abs);
    worst_tay.membership_residual = std::max(worst_tay.membership_residual, t.membership_residual);
    worst_ours.residual_max_abs = std::max(worst_ours.residual_max_abs, s.residual_max_abs);
    worst_ours.membership_residual = std::max(worst_ours.membership_residual, s.membership_residual);
  }
  out << cases.size() << " instance(s)\n";
  out << "componentwise  residual " << fmt_num(worst_tay.residual_max_abs) << "  membership "
      << fmt_num(worst_tay.membership_residual) << '\n';
  out << "shared         residual " << fmt_num(worst_ours.residual_max_abs) << "  membership "
      << fmt_num(worst_ours.membership_residual) << '\n';
  CsvWriter w({"mode", "residual_max_abs", "membership_residual", "tolerance"});
  w.row({"componentwise", fmt_num(worst_tay.residual_max_abs), fmt_num(worst_tay.membership_residual),
         fmt_num(o.tol_decomp)});
  w.row({"shared", fmt_num(worst_ours.residual_max_abs), fmt_num(worst_ours.membership_residual), fmt_num(o.tol_decomp)});
  emit(o.output, w.str(), decomposition_json(worst_tay, worst_ours, o.tol_decomp));
  const bool ok = std::max({worst_tay.residual_max_abs, worst_tay.membership_residual, worst_ours.residual_max_abs,
                            worst_ours.membership_residual}) < o.tol_decomp;
  out << (ok ? "within tolerance " : "EXCEEDS tolerance ") << fmt_num(o.tol_decomp) << '\n';
  return ok ? kOk : kVerificationFailure;
}

struct GenOptions {
  std::string kind = "input";
  std::vector<std::size_t> shape;
  std::uint64_t seed = 42;
  std::uint64_t stream = 0;
  double scale = 0.0;
  std::string out;
};

/// input: N(0, scale²), default scale 1. weight: default scale 1/sqrt(4 shape[0]).
/// maps: row-softmax of standard normal scores in q0, shape [..., T, T].
inline QTensor generate(const GenOptions& o) {
  if (o.shape.empty() || shape_size(o.shape) == 0) throw UsageError("gen: shape must be non-empty with no zero extent");
  Rng rng(o.seed, o.stream);
  if (o.kind == "input") return qt_random(Shape(o.shape), rng, o.scale > 0 ? o.scale : 1.0);
  if (o.kind == "weight") {
    if (o.shape.size() != 2) throw UsageError("gen: weight shape must be [d_in, d_out]");
    return qt_random(Shape(o.shape), rng, o.scale > 0 ? o.scale : 1.0 / std::sqrt(4.0 * double(o.shape[0])));
  }
  if (o.kind == "maps") {
    if (o.shape.size() < 2 || o.shape[o.shape.size() - 1] != o.shape[o.shape.size() - 2]) {
      throw UsageError("gen: maps shape must end in [T, T]");
    }
    QTensor t(Shape(o.shape));
    const auto tl = Eigen::Index(o.shape.back());
    const std::size_t n = shape_size(o.shape) / std::size_t(tl * tl);
    const std::uint64_t first = rng.advance(t.size());
    for (std::size_t i = 0; i < n; ++i) {
      MatrixMap<double> m(t.plane(0).data() + i * std::size_t(tl * tl), tl, tl);
      for (Eigen::Index j = 0; j < tl * tl; ++j) {
        m.data()[j] = (o.scale > 0 ? o.scale : 1.0) * rng.normal_at(first + i * std::size_t(tl * tl) + std::size_t(j));
      }
      RealMatrix a = m;
      detail::softmax_rows_inplace(a);
      m = a;
    }
    return t;
  }
  throw UsageError("gen: unknown kind '" + o.kind + "'");
}

inline int cmd_gen(const GenOptions& o, std::ostream& out) {
  const auto t = generate(o);
  try {
    write_qtb(o.out, t);
  } catch (const QtbError& e) {
    throw IoError(e.what());
  }
  out << "wrote " << o.out << " shape " << shape_string(t.shape()) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------- run

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Quaternion self-attention: shared-score vs component-wise"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SelfTestOptions st;
  auto* selftest = app.add_subcommand("selftest", "Run the built-in invariant suite");
  selftest->add_option("--seed", st.seed);
  selftest->add_option("--tol-decomp", st.tol_decomp, "Decomposition residual tolerance");
  selftest->add_option("--tol-grad", st.tol_grad, "Gradient relative error tolerance");
  selftest->add_option("--tol-algebra", st.tol_algebra, "Algebraic identity tolerance");

  BenchOptions bo;
  auto* bench = app.add_subcommand("bench", "Time the forward pass of both attention modes");
  auto* macs = app.add_subcommand("macs", "Print the analytic MACs model");
  for (auto* c : {bench, macs}) {
    c->add_option("--seq", bo.seq, "Sequence lengths")->delimiter(',');
    c->add_option("--d-model", bo.d_model);
    c->add_option("--heads", bo.heads);
    c->add_option("--mode", bo.mode)->check(CLI::IsMember({"shared", "componentwise", "both"}));
    c->add_flag("--include-projections", bo.include_projections, "Count Q/K/V projections in macs_total");
    add_output_flags(c, bo.output);
  }
  bench->add_option("--warmup", bo.warmup);
  bench->add_option("--reps", bo.reps);
  bench->add_option("--workers", bo.workers, "Spread heads over this many threads")->check(CLI::PositiveNumber);
  bench->add_option("--precision", bo.precision)->check(CLI::IsMember({"f64", "f32"}));
  bench->add_option("--seed", bo.seed);

  GradOptions go;
  auto* gradnorm = app.add_subcommand("gradnorm", "Score-gradient norms at random initialization");
  auto* gradcorr = app.add_subcommand("gradcorr", "Correlation of component score-gradient norms");
  for (auto* c : {gradnorm, gradcorr}) {
    c->add_option("--batch", go.cfg.batch);
    c->add_option("--seq", go.cfg.seq_len);
    c->add_option("--d-model", go.cfg.d_model);
    c->add_option("--heads", go.cfg.heads);
    c->add_option("--trials", go.cfg.trials);
    c->add_option("--loss", go.loss)->check(CLI::IsMember({"sum_output", "mean_sq_output"}));
    c->add_flag("--qk-norm", go.cfg.qk_norm);
    c->add_option("--input-std", go.cfg.input_std);
    c->add_option("--seed", go.seed);
    add_output_flags(c, go.output);
  }
  gradnorm->add_option("--fd-probes", go.cfg.fd_probes, "Finite-difference probes per trial");
  gradnorm->add_option("--fd-step", go.cfg.fd_step);
  gradnorm->add_option("--tol-grad", go.tol_grad);
  gradcorr->add_option("--unit", go.unit)->check(CLI::IsMember({"per_sample", "per_trial"}));
  gradcorr->add_option("--tol-offdiag", go.tol_offdiag, "Bound on |off-diagonal| correlations");

  AgreementOptions ao;
  auto* agreement = app.add_subcommand("agreement", "Argmax agreement between component attention maps");
  agreement->add_option("--maps", ao.maps, "QTB files of shape [4,T,T] or [N,4,T,T]")->check(CLI::ExistingFile);
  agreement->add_option("--seq", ao.seq);
  agreement->add_option("--d-model", ao.d_model);
  agreement->add_option("--heads", ao.heads);
  agreement->add_option("--inputs", ao.inputs, "Random inputs when no --maps are given");
  agreement->add_option("--k", ao.k, "Top-k size");
  agreement->add_option("--seed", ao.seed);
  add_output_flags(agreement, ao.output);

  SimOptions so;
  auto* simcompare = app.add_subcommand("simcompare", "KS / Wasserstein / quantile correlation of two samples");
  simcompare->add_option("--a", so.a)->check(CLI::ExistingFile);
  simcompare->add_option("--b", so.b)->check(CLI::ExistingFile);
  simcompare->add_option("--plane", so.plane, "Only this component plane (default all)")->check(CLI::Range(0, 3));
  simcompare->add_option("--n-q", so.n_q, "Quantile grid size");
  simcompare->add_option("--seq", so.seq);
  simcompare->add_option("--d-model", so.d_model);
  simcompare->add_option("--heads", so.heads);
  simcompare->add_option("--seed", so.seed);
  add_output_flags(simcompare, so.output);

  DecomposeOptions dop;
  auto* decompose = app.add_subcommand("decompose", "Verify the bilinear score decompositions");
  decompose->add_option("--d-in", dop.d_in);
  decompose->add_option("--d-h", dop.d_h);
  decompose->add_option("--T,--seq", dop.seq);
  decompose->add_option("--instances", dop.instances);
  decompose->add_option("--from-files", dop.from_files, "X.qtb WQ.qtb WK.qtb")->expected(3)->check(CLI::ExistingFile);
  decompose->add_flag("--conjugate-keys", dop.conjugate_keys);
  decompose->add_option("--tol-decomp", dop.tol_decomp);
  decompose->add_option("--seed", dop.seed);
  add_output_flags(decompose, dop.output);

  GenOptions gen_o;
  auto* gen = app.add_subcommand("gen", "Write a seeded random QTB tensor");
  gen->add_option("--kind", gen_o.kind)->check(CLI::IsMember({"input", "weight", "maps"}));
  gen->add_option("--shape", gen_o.shape)->delimiter(',')->required();
  gen->add_option("--seed", gen_o.seed);
  gen->add_option("--stream", gen_o.stream, "RNG stream");
  gen->add_option("--scale", gen_o.scale, "Standard deviation (kind-specific default)");
  gen->add_option("--out", gen_o.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*selftest) return cmd_selftest(st, out);
    if (*bench) return cmd_bench(bo, out);
    if (*macs) return cmd_macs(bo, out);
    if (*gradnorm) return cmd_gradnorm(go, out);
    if (*gradcorr) return cmd_gradcorr(go, out);
    if (*agreement) return cmd_agreement(ao, out);
    if (*simcompare) return cmd_simcompare(so, out);
    if (*decompose) return cmd_decompose(dop, out);
    if (*gen) return cmd_gen(gen_o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kVerificationFailure;
  }
  return kUsageError;
}

}  // namespace qsa::cli
