#pragma once

/**
 * Scalar quaternion algebra.
 *
 * A quaternion q = q0 + q1 i + q2 j + q3 k is stored as four reals in the
 * fixed order (real, i, j, k). Multiplication is the Hamilton product and is
 * non-commutative: i j = k but j i = -k.
 */

#include <array>
#include <cstdint>

namespace qsa {

template <typename T = double>
struct BasicQuaternion {
  T q0{0}, q1{0}, q2{0}, q3{0};

  constexpr bool operator==(const BasicQuaternion&) const = default;

  constexpr T operator[](int c) const {
    switch (c) {
      case 0: return q0;
      case 1: return q1;
      case 2: return q2;
      default: return q3;
    }
  }

  constexpr BasicQuaternion operator+(const BasicQuaternion& o) const {
    return {q0 + o.q0, q1 + o.q1, q2 + o.q2, q3 + o.q3};
  }
  constexpr BasicQuaternion operator-(const BasicQuaternion& o) const {
    return {q0 - o.q0, q1 - o.q1, q2 - o.q2, q3 - o.q3};
  }
  constexpr BasicQuaternion operator-() const { return {-q0, -q1, -q2, -q3}; }
  constexpr BasicQuaternion operator*(T s) const { return {q0 * s, q1 * s, q2 * s, q3 * s}; }
};

using Quaternion = BasicQuaternion<double>;

/// Hamilton product p ⊗ q, written out term by term.
template <typename T>
constexpr BasicQuaternion<T> qmul(const BasicQuaternion<T>& p, const BasicQuaternion<T>& q) {
  return {
      p.q0 * q.q0 - p.q1 * q.q1 - p.q2 * q.q2 - p.q3 * q.q3,
      p.q0 * q.q1 + p.q1 * q.q0 + p.q2 * q.q3 - p.q3 * q.q2,
      p.q0 * q.q2 - p.q1 * q.q3 + p.q2 * q.q0 + p.q3 * q.q1,
      p.q0 * q.q3 + p.q1 * q.q2 - p.q2 * q.q1 + p.q3 * q.q0,
  };
}

template <typename T>
constexpr BasicQuaternion<T> qconj(const BasicQuaternion<T>& q) {
  return {q.q0, -q.q1, -q.q2, -q.q3};
}

/// Real scalar product x0y0 + x1y1 + x2y2 + x3y3, equal to Re(x ⊗ conj(y)).
template <typename T>
constexpr T qdot(const BasicQuaternion<T>& x, const BasicQuaternion<T>& y) {
  return x.q0 * y.q0 + x.q1 * y.q1 + x.q2 * y.q2 + x.q3 * y.q3;
}

template <typename T>
constexpr T qnorm_sq(const BasicQuaternion<T>& q) {
  return qdot(q, q);
}

/// Re(q ⊗ k) without conjugating k. Not positive definite: Re(i ⊗ i) = -1.
template <typename T>
constexpr T re_qmul_no_conj(const BasicQuaternion<T>& q, const BasicQuaternion<T>& k) {
  return q.q0 * k.q0 - q.q1 * k.q1 - q.q2 * k.q2 - q.q3 * k.q3;
}

/// One signed term p_mu * q_nu of a Hamilton-product output component.
struct HamiltonTerm {
  int mu;
  int nu;
  int sign;
};

/// kHamiltonTerms[alpha] lists the four (mu, nu, sign) triples with
/// (p ⊗ q)_alpha = sum sign * p_mu * q_nu. Every plane-level product in the
/// library (quaternion matmul, convolution, component-wise scores, score
/// decomposition) is driven by this table.
inline constexpr std::array<std::array<HamiltonTerm, 4>, 4> kHamiltonTerms{{
    {{{0, 0, +1}, {1, 1, -1}, {2, 2, -1}, {3, 3, -1}}},
    {{{0, 1, +1}, {1, 0, +1}, {2, 3, +1}, {3, 2, -1}}},
    {{{0, 2, +1}, {1, 3, -1}, {2, 0, +1}, {3, 1, +1}}},
    {{{0, 3, +1}, {1, 2, +1}, {2, 1, -1}, {3, 0, +1}}},
}};

/// Index nu and sign such that (p ⊗ q)_alpha contains sign * p_mu * q_nu.
struct TermLookup {
  int nu;
  int sign;
};

constexpr TermLookup hamilton_partner(int alpha, int mu) {
  for (const auto& t : kHamiltonTerms[alpha]) {
    if (t.mu == mu) return {t.nu, t.sign};
  }
  return {-1, 0};
}

}  // namespace qsa
