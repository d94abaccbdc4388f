// Small end-to-end use of the library: one shared-score and one
// component-wise head on the same input, plus their cost counters.

#include <cstdio>

#include "qsa/qsa.hpp"

int main() {
  using namespace qsa;

  Rng rng(42);
  auto cfg = AttnConfig::make(/*seq_len=*/32, /*d_model=*/16, /*heads=*/2);
  const QTensor x = qt_random(Shape{32, 16}, rng, 1.0);
  const auto heads = random_heads<double>(cfg, rng);

  for (auto mode : {AttentionMode::shared, AttentionMode::componentwise}) {
    cfg.mode = mode;
    reset_cost_counters();
    const QTensor y = mha_forward(x, heads, cfg);
    const auto& c = cost_counters();
    std::printf("%-14s out %s  score matmuls %llu  softmax %llu  |y0[0]| %.6f\n", to_string(mode),
                shape_string(y.shape()).c_str(), (unsigned long long)c.score_matmuls,
                (unsigned long long)c.softmax_calls, std::abs(y.plane(0)[0]));
  }

  const auto p = project_head(x, heads[0], cfg);
  const auto maps = tay_attention_maps(p.q, p.k, cfg.scale_tay, false);
  std::printf("q0/q1 argmax agreement %.3f (chance %.3f)\n", agreement_rate(maps[0], maps[1]), 1.0 / 32);

  const auto d = decompose_ours(x, heads[0].wq, heads[0].wk);
  std::printf("shared-score decomposition residual %.3g\n", d.residual_max_abs);
  return 0;
}
