#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qsa/quaternion.hpp"
#include "qsa/rng.hpp"

using namespace qsa;

namespace {

Quaternion random_q(Rng& rng) { return {rng.normal(), rng.normal(), rng.normal(), rng.normal()}; }

oracle::Q to_o(const Quaternion& q) { return {q.q0, q.q1, q.q2, q.q3}; }

}  // namespace

TEST(Quaternion, ProductFrozenExample) {
  EXPECT_EQ(qmul(Quaternion{1, 2, 3, 4}, Quaternion{5, 6, 7, 8}), (Quaternion{-60, 12, 30, 24}));
}

TEST(Quaternion, ProductMatchesBasisTable) {
  Rng rng(1);
  for (int n = 0; n < 500; ++n) {
    const auto p = random_q(rng);
    const auto q = random_q(rng);
    const auto got = qmul(p, q);
    const auto want = oracle::mul(to_o(p), to_o(q));
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(got[c], double(want[c]), 1e-14);
  }
}

TEST(Quaternion, UnitRelations) {
  const Quaternion one{1, 0, 0, 0}, i{0, 1, 0, 0}, j{0, 0, 1, 0}, k{0, 0, 0, 1};
  EXPECT_EQ(qmul(i, i), -one);
  EXPECT_EQ(qmul(j, j), -one);
  EXPECT_EQ(qmul(k, k), -one);
  EXPECT_EQ(qmul(qmul(i, j), k), -one);
  EXPECT_EQ(qmul(i, j), k);
  EXPECT_EQ(qmul(j, i), -k);
}

TEST(Quaternion, SignTableAgreesWithProductOnBasis) {
  for (int mu = 0; mu < 4; ++mu) {
    for (int nu = 0; nu < 4; ++nu) {
      std::array<double, 4> ea{}, eb{};
      ea[mu] = 1;
      eb[nu] = 1;
      const Quaternion a{ea[0], ea[1], ea[2], ea[3]}, b{eb[0], eb[1], eb[2], eb[3]};
      const auto p = qmul(a, b);
      int hits = 0;
      for (int alpha = 0; alpha < 4; ++alpha) {
        for (const auto& t : kHamiltonTerms[alpha]) {
          if (t.mu == mu && t.nu == nu) {
            EXPECT_EQ(p[alpha], double(t.sign));
            ++hits;
          } else if (p[alpha] != 0.0) {
            bool listed = false;
            for (const auto& u : kHamiltonTerms[alpha]) listed = listed || (u.mu == mu && u.nu == nu);
            EXPECT_TRUE(listed);
          }
        }
      }
      EXPECT_EQ(hits, 1);
    }
  }
}

TEST(Quaternion, EachComponentHasFourTermsCoveringAllIndices) {
  for (int alpha = 0; alpha < 4; ++alpha) {
    int mus = 0, nus = 0;
    for (const auto& t : kHamiltonTerms[alpha]) {
      mus |= 1 << t.mu;
      nus |= 1 << t.nu;
    }
    EXPECT_EQ(mus, 15);
    EXPECT_EQ(nus, 15);
  }
}

TEST(Quaternion, PartnerLookup) {
  const auto p = hamilton_partner(1, 2);
  EXPECT_EQ(p.nu, 3);
  EXPECT_EQ(p.sign, 1);
  const auto q = hamilton_partner(3, 2);
  EXPECT_EQ(q.nu, 1);
  EXPECT_EQ(q.sign, -1);
}

TEST(Quaternion, ScalarProductFrozen) {
  EXPECT_EQ(qdot(Quaternion{1, 2, 3, 4}, Quaternion{5, 6, 7, 8}), 70.0);
  EXPECT_EQ(qnorm_sq(Quaternion{1, 2, 3, 4}), 30.0);
}

TEST(Quaternion, ScalarProductIsRealPartWithConjugate) {
  Rng rng(2);
  for (int n = 0; n < 1000; ++n) {
    const auto p = random_q(rng);
    const auto q = random_q(rng);
    EXPECT_NEAR(qdot(p, q), qmul(p, qconj(q)).q0, 1e-13);
    EXPECT_NEAR(qdot(p, q), qdot(q, p), 0.0);
  }
}

TEST(Quaternion, WithoutConjugateNotPositive) {
  const Quaternion i{0, 1, 0, 0};
  EXPECT_EQ(re_qmul_no_conj(i, i), -1.0);
}

TEST(Quaternion, NormIsMultiplicative) {
  Rng rng(3);
  for (int n = 0; n < 200; ++n) {
    const auto p = random_q(rng);
    const auto q = random_q(rng);
    EXPECT_NEAR(qnorm_sq(qmul(p, q)), qnorm_sq(p) * qnorm_sq(q), 1e-10 * (1 + qnorm_sq(p) * qnorm_sq(q)));
  }
}

TEST(Quaternion, Associative) {
  Rng rng(4);
  for (int n = 0; n < 200; ++n) {
    const auto a = random_q(rng), b = random_q(rng), c = random_q(rng);
    const auto l = qmul(qmul(a, b), c);
    const auto r = qmul(a, qmul(b, c));
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(l[k], r[k], 1e-12);
  }
}

TEST(Quaternion, ConjugateReversesProduct) {
  Rng rng(5);
  const auto a = random_q(rng), b = random_q(rng);
  const auto l = qconj(qmul(a, b));
  const auto r = qmul(qconj(b), qconj(a));
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(l[k], r[k], 1e-14);
}

TEST(Rng, DeterministicAndCounterAddressed) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.normal(), b.normal());
  Rng c(42);
  const double third = c.normal_at(2);
  Rng d(42);
  d.normal();
  d.normal();
  EXPECT_EQ(d.normal(), third);
  EXPECT_NE(Rng(42).normal(), Rng(43).normal());
  EXPECT_NE(Rng(42).substream(0).normal(), Rng(42).substream(1).normal());
}

TEST(Rng, UniformRangeAndMoments) {
  Rng r(9);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double z = r.normal_at(std::uint64_t(i) + 1000000);
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}
