#pragma once

// Hierarchy conditions: unitarity, dual unitarity, the level-2 and level-3 folded
// identities (and the 180-degree rotated level-2 pair), phase-table criteria for the
// Clifford family, and the trace identity relating the two level-2 orientations.
//
// Side naming: Side::Right is the identity whose bullets sit on the right edge of a
// staircase descending to the right; Side::Left is its mirror image.

#include "hier/diagram.hpp"
#include "hier/gates.hpp"

#include <string>

namespace hier {

enum class Side { Left, Right, Both };

inline const char* side_name(Side s) {
  return s == Side::Left ? "left" : s == Side::Right ? "right" : "both";
}

struct ConditionReport {
  int level_checked = 0;  ///< 0 for unitarity
  Side side = Side::Both;
  double residual = 0;
  bool passed = false;
  double tol = kDefaultTol;
};

inline ConditionReport make_report(int level, Side side, double residual, double tol) {
  return {level, side, residual, residual <= tol, tol};
}

inline ConditionReport check_unitarity(const GateTensor& g, double tol = kDefaultTol) {
  const CMatrix id = identity(g.u.rows());
  const double r = std::max(max_abs(g.u * g.u.adjoint() - id), max_abs(g.u.adjoint() * g.u - id));
  return make_report(0, Side::Both, r, tol);
}

inline ConditionReport check_dual_unitarity(const GateTensor& g, double tol = kDefaultTol) {
  const CMatrix ut = reshuffle_dual(g).u;
  const CMatrix id = identity(ut.rows());
  const double r = std::max(max_abs(ut * ut.adjoint() - id), max_abs(ut.adjoint() * ut - id));
  return make_report(1, Side::Both, r, tol);
}

/// Residual of the level-k staircase identity on one side; rotated applies the
/// 180-degree rotation to both diagrams.
inline double staircase_residual(const GateTensor& g, int k, Side side, bool rotated = false) {
  Identity id = staircase_right(k);
  if (side == Side::Left) id = id.mirrored();
  if (rotated) id = id.rotated();
  return max_diff(evaluate(id.lhs, g), evaluate(id.rhs, g));
}

inline ConditionReport check_level(const GateTensor& g, int k, Side side, bool rotated,
                                   double tol) {
  double r = 0;
  if (side == Side::Both)
    r = std::max(staircase_residual(g, k, Side::Left, rotated), staircase_residual(g, k, Side::Right, rotated));
  else
    r = staircase_residual(g, k, side, rotated);
  return make_report(k, side, r, tol);
}

inline ConditionReport check_l2(const GateTensor& g, Side side = Side::Both, double tol = kDefaultTol) {
  return check_level(g, 2, side, false, tol);
}

inline ConditionReport check_l2_rotated(const GateTensor& g, Side side = Side::Both,
                                        double tol = kDefaultTol) {
  return check_level(g, 2, side, true, tol);
}

inline ConditionReport check_l3(const GateTensor& g, Side side = Side::Both, double tol = kDefaultTol) {
  return check_level(g, 3, side, false, tol);
}

/// Algebraic level-2 residuals in the reshuffled form:
/// right: (I (x) ũ^dag)(ũ^dag ũ (x) I)(I (x) ũ) = I (x) ũ^dag ũ,
/// left:  (I (x) ũ)(ũ ũ^dag (x) I)(I (x) ũ^dag) = I (x) ũ ũ^dag.
inline double l2_algebraic_residual(const GateTensor& g, Side side) {
  const int D = g.D;
  const CMatrix ut = reshuffle_dual(g).u;
  const CMatrix id = identity(D);
  auto one = [&](const CMatrix& a, const CMatrix& b) {
    const CMatrix lhs = kron(id, a) * kron(a * b, id) * kron(id, b);
    return max_abs(lhs - kron(id, a * b));
  };
  const double r = one(ut.adjoint(), ut), l = one(ut, ut.adjoint());
  return side == Side::Right ? r : side == Side::Left ? l : std::max(l, r);
}

struct LevelPair {
  int left = 0;   ///< 1, 2, 3, or 0 for none
  int right = 0;
  ConditionReport left_report, right_report;
};

inline LevelPair classify_level(const GateTensor& g, double tol = kDefaultTol) {
  LevelPair out;
  for (Side s : {Side::Left, Side::Right}) {
    int lvl = 0;
    ConditionReport rep;
    for (int k = 1; k <= 3 && lvl == 0; ++k) {
      rep = check_level(g, k, s, false, tol);
      if (rep.passed) lvl = k;
    }
    (s == Side::Left ? out.left : out.right) = lvl;
    (s == Side::Left ? out.left_report : out.right_report) = rep;
  }
  return out;
}

inline std::string level_string(const LevelPair& p) {
  auto name = [](int k) { return k == 0 ? std::string("none") : std::to_string(k); };
  if (p.left == p.right) return "level " + name(p.left) + " (both sides)";
  return "level left " + name(p.left) + ", right " + name(p.right);
}

// ------------------------------------------------------------ phase-table criteria

/// sum_{p,q} conj(theta_{p,q}) theta_{p+k,q+l}.
inline cplx theta_autocorr(const ThetaTable& t, int k, int l) {
  cplx s = 0;
  for (int p = 0; p < t.D; ++p)
    for (int q = 0; q < t.D; ++q) s += std::conj(t(p, q)) * t(p + k, q + l);
  return s;
}

inline double check_theta_du(const ThetaTable& t) {
  double r = 0;
  for (int k = 0; k < t.D; ++k)
    for (int l = 0; l < t.D; ++l)
      if (k || l) r = std::max(r, std::abs(theta_autocorr(t, k, l)) / (t.D * t.D));
  return r;
}

/// sum_d conj(theta_d) theta_{d+(s,t)} tau_{sg p_d, q_d}^dag X tau_{sg p_d, q_d}.
inline CMatrix theta_twirl(const ThetaTable& th, int s, int t, const CMatrix& X, int sg) {
  const int D = th.D;
  CMatrix acc = CMatrix::Zero(D, D);
  for (int p = 0; p < D; ++p)
    for (int q = 0; q < D; ++q) {
      const cplx c = std::conj(th(p, q)) * th(p + s, q + t);
      if (std::abs(c) == 0) continue;
      const CMatrix tp = tau_pq(D, sg * p, q);
      acc += c * (tp.adjoint() * X * tp);
    }
  return acc;
}

/// Effective single-site unitaries entering the two phase-table conditions: the first
/// condition sees v4 v1 and the second v3 v2 (v3 = v4 = I reduces to v1 and v2).
inline std::pair<CMatrix, CMatrix> effective_vs(const CliffordFamilyParams& p) {
  return {p.v(4) * p.v(1), p.v(3) * p.v(2)};
}

struct ThetaReport {
  double residual_first = 0;   ///< condition involving v1
  double residual_second = 0;  ///< condition involving v2
  double residual() const { return std::max(residual_first, residual_second); }
  bool passed(double tol = kDefaultTol) const { return residual() <= tol; }
};

/// Pauli insertion v^* tau_{sg k, -l} v^T of the first (sg = +1) or second (sg = -1) condition.
inline CMatrix inserted(const CMatrix& v, int D, int k, int l, int sg) {
  return v.conjugate() * tau_pq(D, sg * k, -l) * v.transpose();
}

inline ThetaReport check_theta_l2(const CliffordFamilyParams& p) {
  const int D = p.D;
  const auto [va, vb] = effective_vs(p);
  ThetaReport rep;
  for (int k = 0; k < D; ++k)
    for (int l = 0; l < D; ++l) {
      if (!k && !l) continue;
      const double s1 = std::abs(theta_autocorr(p.theta, k, l)) / (D * D);
      if (s1 == 0) continue;
      for (int s = 0; s < D; ++s)
        for (int t = 0; t < D; ++t) {
          if (!s && !t) continue;
          const double m1 = max_abs(theta_twirl(p.theta, s, t, inserted(va, D, k, l, 1), 1)) / (D * D);
          const double m2 = max_abs(theta_twirl(p.theta, s, t, inserted(vb, D, k, l, -1), -1)) / (D * D);
          rep.residual_first = std::max(rep.residual_first, s1 * m1);
          rep.residual_second = std::max(rep.residual_second, s1 * m2);
        }
    }
  return rep;
}

/// Triple-product condition: for every a != 0 and all c, e the product
/// S(a) * M(a, c) (x) M(c, e) vanishes, where M(a, c) is the twirl of the inserted
/// Pauli for shift a with table shift c.
inline ThetaReport check_theta_l3(const CliffordFamilyParams& p) {
  const int D = p.D;
  const auto [va, vb] = effective_vs(p);
  ThetaReport rep;
  for (int which = 0; which < 2; ++which) {
    const CMatrix& v = which == 0 ? va : vb;
    const int sg = which == 0 ? 1 : -1;
    // twirl norms M[a][c] for all a, c.
    const int n = D * D;
    std::vector<double> M(n * n, 0.0);
    for (int a = 0; a < n; ++a)
      for (int c = 0; c < n; ++c)
        M[a * n + c] =
            max_abs(theta_twirl(p.theta, c / D, c % D, inserted(v, D, a / D, a % D, sg), sg)) / (D * D);
    double worst = 0;
    for (int a = 1; a < n; ++a) {
      const double s1 = std::abs(theta_autocorr(p.theta, a / D, a % D)) / (D * D);
      for (int c = 0; c < n; ++c)
        for (int e = 0; e < n; ++e) worst = std::max(worst, s1 * M[a * n + c] * M[c * n + e]);
    }
    (which == 0 ? rep.residual_first : rep.residual_second) = worst;
  }
  return rep;
}

/// |sqrt2 sin r sin theta| - 1 within tol.
inline bool check_qubit_l2_constraint(const SU2Angles& v, double tol = 1e-10) {
  return std::abs(std::abs(std::sqrt(2.0) * std::sin(v.r) * std::sin(v.theta)) - 1.0) <= tol;
}

// ------------------------------------------------------------------- trace identity

/// For one side, A is the difference of the two sides of the 180-degree rotated level-2
/// identity and B that of the plain level-2 identity. Returns (Tr A^dag A, Tr B^dag B).
inline std::pair<double, double> check_trace_identity(const GateTensor& g, Side side = Side::Left) {
  if (side == Side::Both) throw std::invalid_argument("check_trace_identity: pick one side");
  Identity b = staircase_right(2);
  if (side == Side::Left) b = b.mirrored();
  const Identity a = b.rotated();
  return {frob2_diff(evaluate(a.lhs, g), evaluate(a.rhs, g)), frob2_diff(evaluate(b.lhs, g), evaluate(b.rhs, g))};
}

}  // namespace hier
