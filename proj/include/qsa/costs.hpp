#pragma once

#include <cstdint>

namespace qsa {

/// Logical operation counts recorded by the attention and layer kernels.
/// One "matmul" is one real-valued matrix product between two component
/// planes, however it is tiled or fused internally.
struct CostCounters {
  std::uint64_t score_matmuls = 0;
  std::uint64_t value_matmuls = 0;
  std::uint64_t projection_matmuls = 0;
  std::uint64_t other_matmuls = 0;
  std::uint64_t softmax_calls = 0;

  constexpr bool operator==(const CostCounters&) const = default;

  constexpr CostCounters& operator+=(const CostCounters& o) {
    score_matmuls += o.score_matmuls;
    value_matmuls += o.value_matmuls;
    projection_matmuls += o.projection_matmuls;
    other_matmuls += o.other_matmuls;
    softmax_calls += o.softmax_calls;
    return *this;
  }
};

/// Per-thread counters; reset before a measured region.
inline CostCounters& cost_counters() {
  thread_local CostCounters counters;
  return counters;
}

inline void reset_cost_counters() { cost_counters() = CostCounters{}; }

}  // namespace qsa
