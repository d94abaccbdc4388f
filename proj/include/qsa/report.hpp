#pragma once

// CSV and JSON serialization of experiment results. CSV: '.' decimals, '\n'
// line ends, header row always present. JSON reports carry schema_version.

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsa/analysis.hpp"
#include "qsa/bench.hpp"
#include "qsa/gradcheck.hpp"

namespace qsa {

inline constexpr int kReportSchemaVersion = 1;

using Json = nlohmann::ordered_json;

/// Locale-independent shortest round-trip formatting.
inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // prefer the shorter form when it round-trips
  for (int prec = 6; prec < 17; ++prec) {
    char shorter[32];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) { row(header); }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != cols_) throw InvalidArgument("CsvWriter: wrong number of cells");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }

 private:
  std::size_t cols_;
  std::ostringstream out_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

inline Json config_json(const AttnConfig& c) {
  Json j;
  j["seq_len"] = c.seq_len;
  j["d_model"] = c.d_model;
  j["heads"] = c.heads;
  j["d_h"] = c.d_h;
  j["mode"] = to_string(c.mode);
  j["qk_norm"] = c.qk_norm;
  j["conjugate_keys"] = c.conjugate_keys;
  j["scale_shared"] = c.scale_shared;
  j["scale_tay"] = c.scale_tay;
  return j;
}

inline Json to_json(const MacsBreakdown& m) {
  Json j;
  j["projections"] = m.projections;
  j["score_stage"] = m.score_stage;
  j["softmax_ops"] = m.softmax_ops;
  j["av_stage"] = m.av_stage;
  j["total"] = m.total;
  j["score_mults_per_pair"] = m.score_mults_per_pair;
  j["projections_included"] = m.projections_included;
  return j;
}

// ------------------------------------------------------------------- bench

struct BenchRow {
  std::size_t seq_len = 0;
  AttentionMode mode = AttentionMode::shared;
  MacsBreakdown macs;
  std::optional<TimingResult> timing;
  std::optional<double> speedup_vs_componentwise;
};

/// Fills speedup_vs_componentwise = median(componentwise) / median(row) for
/// rows whose T has a timed componentwise entry.
inline void fill_speedups(std::vector<BenchRow>& rows) {
  std::map<std::size_t, double> ref;
  for (const auto& r : rows) {
    if (r.mode == AttentionMode::componentwise && r.timing) ref[r.seq_len] = r.timing->median_ms;
  }
  for (auto& r : rows) {
    const auto it = ref.find(r.seq_len);
    if (r.timing && it != ref.end() && r.timing->median_ms > 0.0) r.speedup_vs_componentwise = it->second / r.timing->median_ms;
  }
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
  CsvWriter w({"T", "mode", "macs_total", "macs_score", "softmax_ops", "median_ms", "dispersion",
               "speedup_vs_componentwise"});
  for (const auto& r : rows) {
    w.row({std::to_string(r.seq_len), to_string(r.mode), std::to_string(r.macs.total), std::to_string(r.macs.score_stage),
           std::to_string(r.macs.softmax_ops), r.timing ? fmt_num(r.timing->median_ms) : "",
           r.timing ? fmt_num(r.timing->mad_ms) : "",
           r.speedup_vs_componentwise ? fmt_num(*r.speedup_vs_componentwise) : ""});
  }
  return w.str();
}

inline Json bench_json(const std::vector<BenchRow>& rows) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["report"] = "bench";
  j["dispersion"] = "median_absolute_deviation_ms";
  Json arr = Json::array();
  for (const auto& r : rows) {
    Json e;
    e["T"] = r.seq_len;
    e["mode"] = to_string(r.mode);
    e["macs"] = to_json(r.macs);
    if (r.timing) {
      e["precision"] = to_string(r.timing->precision);
      e["warmup"] = r.timing->warmup;
      e["reps"] = r.timing->reps;
      e["workers"] = r.timing->workers;
      e["comparable_protocol"] = r.timing->workers == 1;
      e["median_ms"] = r.timing->median_ms;
      e["dispersion"] = r.timing->mad_ms;
      e["min_ms"] = r.timing->min_ms;
      e["counters_match_model"] = r.timing->counters_match_model;
      e["config"] = config_json(r.timing->config);
    }
    if (r.speedup_vs_componentwise) e["speedup_vs_componentwise"] = *r.speedup_vs_componentwise;
    arr.push_back(e);
  }
  j["rows"] = arr;
  return j;
}

// -------------------------------------------------------------- gradients

inline Json to_json(const GradReport& g) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["report"] = "gradnorm";
  j["seed"] = g.seed;
  Json c;
  c["batch"] = g.config.batch;
  c["seq_len"] = g.config.seq_len;
  c["d_model"] = g.config.d_model;
  c["heads"] = g.config.heads;
  c["trials"] = g.config.trials;
  c["loss"] = to_string(g.config.loss);
  c["qk_norm"] = g.config.qk_norm;
  c["input_std"] = g.config.input_std;
  j["config"] = c;
  j["shared"] = {{"mean", g.shared_norm.mean}, {"std", g.shared_norm.std}};
  Json comps = Json::array();
  for (int a = 0; a < 4; ++a) comps.push_back({{"component", a}, {"mean", g.tay_norm[a].mean}, {"std", g.tay_norm[a].std}});
  j["componentwise"] = comps;
  j["ratio"] = g.ratio;
  j["stacked_ratio"] = g.stacked_ratio;
  j["component_spread"] = g.component_spread;
  j["max_rel_error"] = g.max_rel_error;
  return j;
}

inline std::string gradnorm_csv(const GradReport& g) {
  CsvWriter w({"mode", "component", "mean_norm", "std_norm"});
  w.row({"shared", "", fmt_num(g.shared_norm.mean), fmt_num(g.shared_norm.std)});
  for (int a = 0; a < 4; ++a) {
    w.row({"componentwise", std::to_string(a), fmt_num(g.tay_norm[a].mean), fmt_num(g.tay_norm[a].std)});
  }
  return w.str();
}

inline Json to_json(const GradCorrelation& g, CorrelationUnit unit) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["report"] = "gradcorr";
  j["unit"] = to_string(unit);
  j["observations"] = g.observations;
  Json m = Json::array();
  for (int i = 0; i < 4; ++i) {
    Json row = Json::array();
    for (int k = 0; k < 4; ++k) row.push_back(g.corr(i, k));
    m.push_back(row);
  }
  j["corr"] = m;
  j["max_abs_off_diagonal"] = g.max_abs_off_diagonal;
  return j;
}

inline std::string gradcorr_csv(const GradCorrelation& g) {
  CsvWriter w({"component", "q0", "q1", "q2", "q3"});
  for (int i = 0; i < 4; ++i) {
    w.row({"q" + std::to_string(i), fmt_num(g.corr(i, 0)), fmt_num(g.corr(i, 1)), fmt_num(g.corr(i, 2)),
           fmt_num(g.corr(i, 3))});
  }
  return w.str();
}

// --------------------------------------------------------------- analysis

inline Json to_json(const AgreementReport& r) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["report"] = "agreement";
  j["T"] = r.seq_len;
  j["k"] = r.k;
  j["chance_level"] = r.chance_level;
  j["topk_chance_level"] = r.topk_chance_level;
  Json pairs = Json::array();
  for (const auto& p : r.pairs) {
    Json e;
    e["pair"] = "q" + std::to_string(p.m) + "-q" + std::to_string(p.n);
    e["mean"] = p.mean;
    e["std"] = p.std;
    e["pooled"] = p.pooled;
    e["topk_mean"] = p.topk_mean;
    e["topk_symmetric_mean"] = p.topk_symmetric_mean;
    pairs.push_back(e);
  }
  j["pairs"] = pairs;
  j["overall"] = {{"mean", r.overall_mean}, {"std", r.overall_std}, {"topk_mean", r.overall_topk_mean}};
  Json inst = Json::array();
  for (const auto& i : r.instances) inst.push_back({{"label", i.label}, {"mean", i.mean}, {"std", i.std}});
  j["instances"] = inst;
  return j;
}

/// Pair rows with percentages, then an Overall row.
inline std::string agreement_csv(const AgreementReport& r) {
  CsvWriter w({"pair", "mean_pct", "std_pct", "pooled_pct", "topk_pct", "topk_symmetric_pct", "chance_pct",
               "topk_chance_pct"});
  const auto pct = [](double v) { return fmt_num(100.0 * v); };
  for (const auto& p : r.pairs) {
    w.row({"q" + std::to_string(p.m) + "-q" + std::to_string(p.n), pct(p.mean), pct(p.std), pct(p.pooled),
           pct(p.topk_mean), pct(p.topk_symmetric_mean), pct(r.chance_level), pct(r.topk_chance_level)});
  }
  double pooled = 0.0;
  double sym = 0.0;
  for (const auto& p : r.pairs) {
    pooled += p.pooled / double(r.pairs.size());
    sym += p.topk_symmetric_mean / double(r.pairs.size());
  }
  w.row({"overall", pct(r.overall_mean), pct(r.overall_std), pct(pooled), pct(r.overall_topk_mean), pct(sym),
         pct(r.chance_level), pct(r.topk_chance_level)});
  return w.str();
}

inline Json to_json(const SimilarityReport& s) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["report"] = "simcompare";
  j["n_a"] = s.n_a;
  j["n_b"] = s.n_b;
  j["n_q"] = s.n_q;
  j["ks_stat"] = s.ks_stat;
  j["wasserstein"] = s.wasserstein;
  j["quantile_corr"] = s.quantile_corr ? Json(*s.quantile_corr) : Json(nullptr);
  return j;
}

inline std::string similarity_csv(const SimilarityReport& s) {
  CsvWriter w({"n_a", "n_b", "ks_stat", "wasserstein", "quantile_corr"});
  w.row({std::to_string(s.n_a), std::to_string(s.n_b), fmt_num(s.ks_stat), fmt_num(s.wasserstein),
         s.quantile_corr ? fmt_num(*s.quantile_corr) : "undefined"});
  return w.str();
}

inline Json decomposition_json(const DecompositionReport& tay, const DecompositionReport& ours, double tol) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["report"] = "decompose";
  j["tolerance"] = tol;
  j["componentwise"] = {{"residual_max_abs", tay.residual_max_abs}, {"membership_residual", tay.membership_residual}};
  j["shared"] = {{"residual_max_abs", ours.residual_max_abs}, {"membership_residual", ours.membership_residual}};
  return j;
}

}  // namespace qsa
