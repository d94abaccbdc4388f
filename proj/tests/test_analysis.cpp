#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qsa/analysis.hpp"

using namespace qsa;

namespace {

RealMatrix one_hot(const std::vector<int>& cols, Eigen::Index t) {
  RealMatrix m = RealMatrix::Zero(Eigen::Index(cols.size()), t);
  for (std::size_t i = 0; i < cols.size(); ++i) m(Eigen::Index(i), cols[i]) = 1.0;
  return m;
}

RealMatrix random_map(Rng& rng, Eigen::Index t) {
  RealMatrix s(t, t);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.normal();
  return softmax_rows(s);
}

std::vector<double> sample(Rng& rng, std::size_t n, double shift = 0.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal() + shift;
  return v;
}

}  // namespace

TEST(Agreement, ConstructedMaps) {
  const auto a = one_hot({0, 1, 2, 3}, 4);
  EXPECT_EQ(agreement_rate(a, a), 1.0);
  EXPECT_EQ(agreement_rate(a, one_hot({1, 2, 3, 0}, 4)), 0.0);
  EXPECT_EQ(agreement_rate(a, one_hot({0, 1, 3, 2}, 4)), 0.5);
  EXPECT_THROW(agreement_rate(a, RealMatrix::Zero(3, 4)), ShapeMismatch);
}

TEST(Agreement, TopkLimits) {
  Rng rng(61);
  for (int n = 0; n < 20; ++n) {
    const auto a = random_map(rng, 9);
    const auto b = random_map(rng, 9);
    EXPECT_EQ(topk_agreement(a, b, 1), agreement_rate(a, b));
    EXPECT_EQ(topk_agreement(a, b, 9), 1.0);
    double prev = 0.0;
    for (std::size_t k = 1; k <= 9; ++k) {
      const double r = topk_agreement(a, b, k);
      EXPECT_GE(r, prev);
      prev = r;
    }
  }
  const auto a = one_hot({0}, 3);
  EXPECT_THROW(topk_agreement(a, a, 0), InvalidArgument);
  EXPECT_THROW(topk_agreement(a, a, 4), InvalidArgument);
}

TEST(Agreement, TopkIsDirectional) {
  // argmax of A is 0; in B entry 0 ranks second. argmax of B is 1; in A entry 1 ranks third.
  RealMatrix a(1, 3), b(1, 3);
  a << 0.6, 0.1, 0.3;
  b << 0.3, 0.6, 0.1;
  EXPECT_EQ(topk_agreement(a, b, 2), 1.0);
  EXPECT_EQ(topk_agreement(b, a, 2), 0.0);
}

TEST(Agreement, TiesUseLowestIndex) {
  RealMatrix a(1, 3), b(1, 3);
  a << 0.5, 0.5, 0.0;
  b << 0.2, 0.4, 0.4;
  // argmax(a) = 0; in b, entry 0 ranks third
  EXPECT_EQ(topk_agreement(a, b, 2), 0.0);
  EXPECT_EQ(topk_agreement(b, a, 1), 0.0);  // argmax(b) = 1 ranks behind 0 in a
  EXPECT_EQ(topk_agreement(b, a, 2), 1.0);
}

TEST(AgreementReport, PerMapAndPooledStatistics) {
  const auto base = one_hot({0, 1, 2, 3}, 4);
  ComponentMaps x{"x", {base, base, base, base}};
  // second instance: q1 disagrees with everyone on all rows; 8 rows vs 4 rows weights the pool
  const auto b8 = one_hot({0, 1, 2, 3, 0, 1, 2, 3}, 4);
  const auto off8 = one_hot({1, 2, 3, 0, 1, 2, 3, 0}, 4);
  ComponentMaps y{"y", {b8, off8, b8, b8}};
  const auto r = agreement_report({x, y}, 1);
  EXPECT_DOUBLE_EQ(r.chance_level, 0.25);
  EXPECT_DOUBLE_EQ(r.topk_chance_level, 0.25);
  ASSERT_EQ(r.pairs.size(), 6u);
  const auto& p01 = r.pairs[0];
  EXPECT_EQ(p01.m, 0);
  EXPECT_EQ(p01.n, 1);
  EXPECT_DOUBLE_EQ(p01.mean, 0.5);
  EXPECT_DOUBLE_EQ(p01.pooled, 4.0 / 12.0);
  EXPECT_NEAR(p01.std, std::sqrt(0.5), 1e-15);
  const auto& p02 = r.pairs[1];
  EXPECT_DOUBLE_EQ(p02.mean, 1.0);
  EXPECT_DOUBLE_EQ(p02.pooled, 1.0);
  // instance y: three of six pairs involve q1
  ASSERT_EQ(r.instances.size(), 2u);
  EXPECT_DOUBLE_EQ(r.instances[0].mean, 1.0);
  EXPECT_DOUBLE_EQ(r.instances[1].mean, 0.5);
  EXPECT_DOUBLE_EQ(r.overall_mean, 0.75);
  EXPECT_THROW(agreement_report({}, 1), InvalidArgument);
}

TEST(Ks, FrozenExamples) {
  EXPECT_EQ(ks_statistic(std::vector<double>{0, 1}, std::vector<double>{0.5, 1.5}), 0.5);
  EXPECT_EQ(ks_statistic(std::vector<double>{0, 1}, std::vector<double>{2, 3}), 1.0);
  const std::vector<double> a{3, 1, 2, 2};
  EXPECT_EQ(ks_statistic(a, a), 0.0);
  EXPECT_THROW(ks_statistic(std::vector<double>{}, a), InvalidArgument);
}

TEST(Ks, MatchesBruteForceWithTies) {
  Rng rng(62);
  for (int n = 0; n < 50; ++n) {
    auto a = sample(rng, 5 + n % 7);
    auto b = sample(rng, 3 + n % 11, 0.3);
    for (auto& x : a) x = std::round(x * 2) / 2;
    for (auto& x : b) x = std::round(x * 2) / 2;
    EXPECT_NEAR(ks_statistic(a, b), oracle::ks(a, b), 1e-15);
    EXPECT_EQ(ks_statistic(a, b), ks_statistic(b, a));
  }
}

TEST(Wasserstein, FrozenAndIntegralOracle) {
  EXPECT_EQ(wasserstein1(std::vector<double>{0, 1}, std::vector<double>{0, 3}), 1.0);
  Rng rng(63);
  for (int n = 0; n < 30; ++n) {
    const auto a = sample(rng, 12);
    const auto b = sample(rng, 12, 0.7);
    EXPECT_NEAR(wasserstein1(a, b), oracle::w1_integral(a, b), 1e-12);
  }
  const auto a = sample(rng, 10);
  std::vector<double> shifted(a);
  for (auto& x : shifted) x += 2.5;
  EXPECT_NEAR(wasserstein1(a, shifted), 2.5, 1e-12);
}

TEST(Wasserstein, UnequalSizesInterpolateLargerSample) {
  // smaller sample {0, 1} sits at positions 0 and 1; larger {0, 1, 2, 3} quantiles there are 0 and 3
  EXPECT_DOUBLE_EQ(wasserstein1(std::vector<double>{0, 1}, std::vector<double>{0, 1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(wasserstein1(std::vector<double>{5}, std::vector<double>{0, 1, 2, 3}), 3.5);
}

TEST(QuantileCorrelation, OracleAndIdentity) {
  std::vector<double> a, b;
  for (int i = 0; i < 10; ++i) {
    a.push_back(i);
    b.push_back(double(i) * i);
  }
  // n_q = 10 hits the order statistics exactly
  EXPECT_NEAR(quantile_correlation(a, b, 10), oracle::pearson(a, b), 1e-14);
  EXPECT_NEAR(quantile_correlation(a, b, 10), 0.9626, 1e-4);
  Rng rng(64);
  const auto s = sample(rng, 100);
  EXPECT_NEAR(quantile_correlation(s, s, 50), 1.0, 1e-12);
  // invariant to affine rescaling of one sample
  std::vector<double> t(s);
  for (auto& x : t) x = 3 * x - 1;
  EXPECT_NEAR(quantile_correlation(s, t, 37), 1.0, 1e-12);
}

TEST(QuantileCorrelation, DegenerateIsUndefined) {
  const std::vector<double> c(5, 2.0), d{1, 2, 3};
  EXPECT_THROW(quantile_correlation(c, d, 10), InvalidArgument);
  EXPECT_THROW(quantile_correlation(d, d, 1), InvalidArgument);
  const auto r = similarity_report(c, d, 10);
  EXPECT_FALSE(r.quantile_corr.has_value());
}

TEST(SimilarityReport, IdenticalInputs) {
  Rng rng(65);
  const auto s = sample(rng, 64);
  const auto r = similarity_report(s, s, 100);
  EXPECT_EQ(r.ks_stat, 0.0);
  EXPECT_EQ(r.wasserstein, 0.0);
  ASSERT_TRUE(r.quantile_corr.has_value());
  EXPECT_NEAR(*r.quantile_corr, 1.0, 1e-12);
}

TEST(Decomposition, PhiBlocksReproduceProjection) {
  Rng rng(66);
  const auto x = qt_random(Shape{5, 3}, rng, 1.0);
  const auto w = qt_random(Shape{3, 2}, rng, 1.0);
  const auto phi = phi_blocks(w);
  const auto q = qlinear_forward(x, w);
  for (int mu = 0; mu < 4; ++mu) {
    RealMatrix acc = RealMatrix::Zero(5, 2);
    for (int beta = 0; beta < 4; ++beta) acc += x.mat(beta) * phi[mu][beta];
    EXPECT_LT((acc - q.mat(mu)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Decomposition, ResidualsVanishOnRandomInstances) {
  Rng rng(67);
  for (int n = 0; n < 30; ++n) {
    const std::size_t t = 2 + n % 7, din = 1 + n % 4, dh = 1 + (n / 4) % 4;
    const auto x = qt_random(Shape{t, din}, rng, 1.0);
    const auto wq = qt_random(Shape{din, dh}, rng, 0.5);
    const auto wk = qt_random(Shape{din, dh}, rng, 0.5);
    for (bool conj : {false, true}) {
      const auto r = decompose_tay(x, wq, wk, conj);
      EXPECT_LT(r.residual_max_abs, 1e-9);
      EXPECT_LT(r.membership_residual, 1e-12);
      ASSERT_EQ(r.blocks.size(), 4u);
    }
    const auto s = decompose_ours(x, wq, wk);
    EXPECT_LT(s.residual_max_abs, 1e-9);
    EXPECT_LT(s.membership_residual, 1e-12);
  }
}

TEST(Decomposition, ReconstructionAgainstOracleScores) {
  Rng rng(68);
  const auto x = qt_random(Shape{4, 2}, rng, 1.0);
  const auto wq = qt_random(Shape{2, 3}, rng, 1.0);
  const auto wk = qt_random(Shape{2, 3}, rng, 1.0);
  const auto q = oracle::to_tensor(oracle::matmul(x, wq));
  const auto k = oracle::to_tensor(oracle::matmul(x, wk));
  const auto direct = oracle::tay_score(q, k, 1.0L);
  const auto r = decompose_tay(x, wq, wk);
  for (int a = 0; a < 4; ++a) {
    RealMatrix rec = RealMatrix::Zero(4, 4);
    for (int b = 0; b < 4; ++b) {
      for (int g = 0; g < 4; ++g) rec += x.mat(b) * r.blocks[a][b][g] * x.mat(g).transpose();
    }
    EXPECT_LT(oracle::max_abs_diff(direct[a], rec), 1e-12);
  }
  const auto m = decompose_ours(x, wq, wk);
  const auto shared = oracle::shared_score(q, k, 1.0L);
  RealMatrix rec = RealMatrix::Zero(4, 4);
  for (int b = 0; b < 4; ++b) {
    for (int g = 0; g < 4; ++g) rec += x.mat(b) * m.blocks[0][b][g] * x.mat(g).transpose();
  }
  EXPECT_LT(oracle::max_abs_diff(shared, rec), 1e-12);
}

TEST(Decomposition, SharedCoefficientsAreSumOfDiagonalGenerators) {
  // M^βγ = Σ_α Φ_αβ Ψ_αγᵀ
  Rng rng(69);
  const auto x = qt_random(Shape{3, 2}, rng, 1.0);
  const auto wq = qt_random(Shape{2, 2}, rng, 1.0);
  const auto wk = qt_random(Shape{2, 2}, rng, 1.0);
  const auto m = decompose_ours(x, wq, wk);
  const auto phi = phi_blocks(wq), psi = phi_blocks(wk);
  for (int b = 0; b < 4; ++b) {
    for (int g = 0; g < 4; ++g) {
      RealMatrix want = RealMatrix::Zero(2, 2);
      for (int a = 0; a < 4; ++a) want += phi[a][b] * psi[a][g].transpose();
      EXPECT_LT((want - m.blocks[0][b][g]).cwiseAbs().maxCoeff(), 1e-15);
    }
  }
}

TEST(Decomposition, RealPlaneOnlyInput) {
  // X with only a real plane: S = X0 (Σ_α W_Q,α W_K,αᵀ) X0ᵀ
  Rng rng(70);
  auto x = qt_random(Shape{4, 2}, rng, 1.0);
  for (int c = 1; c < 4; ++c) {
    for (auto& v : x.plane(c)) v = 0;
  }
  const auto wq = qt_random(Shape{2, 2}, rng, 1.0);
  const auto wk = qt_random(Shape{2, 2}, rng, 1.0);
  RealMatrix core = RealMatrix::Zero(2, 2);
  for (int a = 0; a < 4; ++a) core += wq.mat(a) * wk.mat(a).transpose();
  const RealMatrix want = x.mat(0) * core * x.mat(0).transpose();
  const auto q = qlinear_forward(x, wq), k = qlinear_forward(x, wk);
  EXPECT_LT((shared_score(q, k, 1.0) - want).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LT(decompose_ours(x, wq, wk).residual_max_abs, 1e-13);
}

TEST(Decomposition, ShapeErrorsAndSweep) {
  Rng rng(71);
  const auto x = qt_random(Shape{3, 2}, rng, 1.0);
  EXPECT_THROW(decompose_tay(x, qt_random(Shape{3, 2}, rng, 1.0), qt_random(Shape{3, 2}, rng, 1.0)), ShapeMismatch);
  EXPECT_THROW(decompose_ours(x, qt_random(Shape{2, 2}, rng, 1.0), qt_random(Shape{2, 3}, rng, 1.0)), ShapeMismatch);
  const auto sw = decomposition_sweep(10, 5, 3, 2, 1);
  EXPECT_LT(std::max({sw.tay_residual, sw.ours_residual, sw.membership_residual}), 1e-9);
  const auto in = decomposition_inputs(0, 4, 2, 2, 7);
  EXPECT_EQ(in.x.shape(), (Shape{4, 2}));
  EXPECT_EQ(in.wq.shape(), (Shape{2, 2}));
}
