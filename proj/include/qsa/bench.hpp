#pragma once

// Analytic MACs model and a wall-clock harness for the multi-head forward.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "qsa/attention.hpp"
#include "qsa/costs.hpp"

namespace qsa {

/// Real multiply-accumulate counts for one forward of all heads, batch 1.
///
/// Convention: quaternion linear projection = 16 T d_model d_h per head per
/// projection (Q, K, V); score stage = 4 (shared) or 16 (componentwise)
/// T² d_h per head; AV stage = 4 T² d_h per head. Softmax is counted in
/// invocations (H or 4H), not in MACs. Projections are left out of `total`
/// unless requested, since they are identical for both modes.
struct MacsBreakdown {
  std::uint64_t projections = 0;
  std::uint64_t score_stage = 0;
  std::uint64_t softmax_ops = 0;
  std::uint64_t av_stage = 0;
  std::uint64_t total = 0;
  std::uint64_t score_mults_per_pair = 0;
  bool projections_included = false;
};

inline MacsBreakdown macs_model(const AttnConfig& cfg, AttentionMode mode, bool include_projections = false) {
  if (cfg.seq_len == 0 || cfg.d_model == 0 || cfg.heads == 0 || cfg.d_h == 0) {
    throw InvalidArgument("macs_model: zero dimension");
  }
  const std::uint64_t t = cfg.seq_len;
  const std::uint64_t h = cfg.heads;
  const std::uint64_t dh = cfg.d_h;
  MacsBreakdown m;
  m.score_mults_per_pair = mode == AttentionMode::shared ? 4 : 16;
  m.projections = h * 3 * 16 * t * cfg.d_model * dh;
  m.score_stage = h * m.score_mults_per_pair * t * t * dh;
  m.av_stage = h * 4 * t * t * dh;
  m.softmax_ops = mode == AttentionMode::shared ? h : 4 * h;
  m.projections_included = include_projections;
  m.total = m.score_stage + m.av_stage + (include_projections ? m.projections : 0);
  return m;
}

/// Real score/softmax/value products one forward is expected to record in the cost counters.
inline CostCounters expected_counters(const AttnConfig& cfg, AttentionMode mode) {
  CostCounters c;
  const bool shared = mode == AttentionMode::shared;
  c.score_matmuls = cfg.heads * (shared ? 4 : 16);
  c.softmax_calls = cfg.heads * (shared ? 1 : 4);
  c.value_matmuls = cfg.heads * 4;
  c.projection_matmuls = cfg.heads * 3 * 16;
  return c;
}

enum class Precision { f64, f32 };

inline const char* to_string(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

inline Precision parse_precision(const std::string& s) {
  if (s == "f64" || s == "double") return Precision::f64;
  if (s == "f32" || s == "float") return Precision::f32;
  throw InvalidArgument("unknown precision '" + s + "'");
}

struct TimingResult {
  AttnConfig config;
  AttentionMode mode = AttentionMode::shared;
  Precision precision = Precision::f64;
  std::size_t warmup = 0;
  std::size_t reps = 0;
  // 1 is the reference protocol; more workers time a different schedule and
  // are not comparable with single-worker numbers.
  std::size_t workers = 1;
  double median_ms = 0.0;
  double mad_ms = 0.0;  // median absolute deviation
  double min_ms = 0.0;
  std::vector<double> samples_ms;
  CostCounters counters;  // recorded by the last measured forward
  bool counters_match_model = false;
};

namespace detail {

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename T>
TimingResult time_attention_impl(const AttnConfig& cfg_in, AttentionMode mode, std::size_t warmup, std::size_t reps,
                                 std::uint64_t seed, std::size_t workers) {
  AttnConfig cfg = cfg_in;
  cfg.mode = mode;
  cfg.validate();
  if (warmup < 1 || reps < 1) throw InvalidArgument("time_attention: warmup and reps must be >= 1");
  if (workers < 1) throw InvalidArgument("time_attention: workers must be >= 1");

  // Same inputs for both modes under one seed.
  Rng rng(seed);
  const auto x = qt_random<T>(Shape{cfg.seq_len, cfg.d_model}, rng, 1.0);
  const auto heads = random_heads<T>(cfg, rng);

  TimingResult r;
  r.config = cfg;
  r.mode = mode;
  r.precision = std::is_same_v<T, float> ? Precision::f32 : Precision::f64;
  r.warmup = warmup;
  r.reps = reps;
  r.workers = workers;
  volatile T sink = 0;
  for (std::size_t i = 0; i < warmup; ++i) sink = mha_forward(x, heads, cfg, workers).plane(0)[0];
  r.samples_ms.reserve(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    reset_cost_counters();
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = mha_forward(x, heads, cfg, workers);
    const auto t1 = std::chrono::steady_clock::now();
    sink = out.plane(0)[0];
    r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  (void)sink;
  r.counters = cost_counters();
  const auto want = expected_counters(cfg, mode);
  r.counters_match_model = r.counters.score_matmuls == want.score_matmuls &&
                           r.counters.softmax_calls == want.softmax_calls &&
                           r.counters.value_matmuls == want.value_matmuls &&
                           r.counters.projection_matmuls == want.projection_matmuls;
  r.median_ms = median_of(r.samples_ms);
  std::vector<double> dev;
  dev.reserve(reps);
  for (double s : r.samples_ms) dev.push_back(std::abs(s - r.median_ms));
  r.mad_ms = median_of(dev);
  r.min_ms = *std::min_element(r.samples_ms.begin(), r.samples_ms.end());
  return r;
}

}  // namespace detail

/// Median forward latency (projections, scores, softmax, AV), by default on one thread.
inline TimingResult time_attention(const AttnConfig& cfg, AttentionMode mode, std::size_t warmup, std::size_t reps,
                                   std::uint64_t seed = 42, Precision precision = Precision::f64,
                                   std::size_t workers = 1) {
  return precision == Precision::f64 ? detail::time_attention_impl<double>(cfg, mode, warmup, reps, seed, workers)
                                     : detail::time_attention_impl<float>(cfg, mode, warmup, reps, seed, workers);
}

}  // namespace qsa
