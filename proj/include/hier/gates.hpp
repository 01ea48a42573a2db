#pragma once

// Gate families: qubit Ising-kernel parametrization, Clifford (Weyl-Heisenberg)
// phase-table families, and a few named gates.

#include "hier/tensor_core.hpp"

#include <array>
#include <optional>
#include <string>
#include <utility>

namespace hier {

inline CMatrix pauli(int a) {
  CMatrix m(2, 2);
  switch (a) {
    case 0: m << 1, 0, 0, 1; break;
    case 1: m << 0, 1, 1, 0; break;
    case 2: m << 0, -kI, kI, 0; break;
    default: m << 1, 0, 0, -1; break;
  }
  return m;
}

/// U(r, theta, phi) = exp{i r (cos(theta) Z + sin(theta) cos(phi) X + sin(theta) sin(phi) Y)}.
struct SU2Angles {
  double r = 0, theta = 0, phi = 0;
};

inline CMatrix su2(const SU2Angles& a) {
  const double nz = std::cos(a.theta), nx = std::sin(a.theta) * std::cos(a.phi),
               ny = std::sin(a.theta) * std::sin(a.phi);
  return std::cos(a.r) * pauli(0) + kI * std::sin(a.r) * (nz * pauli(3) + nx * pauli(1) + ny * pauli(2));
}

/// A single-site gate given either as SU(2) angles or as a raw unitary matrix.
struct LocalGate {
  std::optional<SU2Angles> angles;
  std::optional<CMatrix> matrix;

  static LocalGate from_angles(double r, double th, double ph) { return {SU2Angles{r, th, ph}, {}}; }
  static LocalGate from_matrix(CMatrix m) { return {{}, std::move(m)}; }

  CMatrix resolve(int D) const {
    if (matrix) {
      if (matrix->rows() != D || !is_unitary(*matrix, 1e-10))
        throw std::invalid_argument("local gate: matrix is not a unitary of the right size");
      return *matrix;
    }
    if (angles) {
      if (D != 2) throw std::invalid_argument("local gate: SU(2) angles need D = 2");
      return su2(*angles);
    }
    return identity(D);
  }
};

struct QubitGateParams {
  double Jx = 0, Jy = 0, Jz = 0;
  LocalGate v1, v2, v3, v4;
  double phase = 0;  ///< global phase angle, the gate is multiplied by e^{i phase}
  /// axes[c] is the Pauli (1=x, 2=y, 3=z) that couples with J_x, J_y, J_z for c = 0, 1, 2.
  std::array<int, 3> axes{1, 2, 3};
};

/// exp{i (Jx XX + Jy YY + Jz ZZ)} with the axis assignment in p.axes.
inline CMatrix ising_kernel(double Jx, double Jy, double Jz, std::array<int, 3> axes = {1, 2, 3}) {
  const double J[3] = {Jx, Jy, Jz};
  CMatrix k = identity(4);
  for (int c = 0; c < 3; ++c) {
    const CMatrix pp = kron(pauli(axes[c]), pauli(axes[c]));
    k = k * (std::cos(J[c]) * identity(4) + kI * std::sin(J[c]) * pp);
  }
  return k;
}

inline GateTensor build_qubit_gate(const QubitGateParams& p) {
  const CMatrix left = kron(p.v1.resolve(2), p.v2.resolve(2));
  const CMatrix right = kron(p.v3.resolve(2), p.v4.resolve(2));
  return {2, std::exp(kI * p.phase) * left * ising_kernel(p.Jx, p.Jy, p.Jz, p.axes) * right};
}

// ---------------------------------------------------------------- Weyl operators

inline cplx omega_pow(int D, double e) { return std::exp(kI * (2.0 * kPi * e / D)); }

/// sigma = sum_j w^j |j><j|, tau = sum_j |j+1><j|.
inline std::pair<CMatrix, CMatrix> build_sigma_tau(int D) {
  if (D < 2) throw std::invalid_argument("build_sigma_tau: D must be at least 2");
  CMatrix s = CMatrix::Zero(D, D), t = CMatrix::Zero(D, D);
  for (int j = 0; j < D; ++j) {
    s(j, j) = omega_pow(D, j);
    t((j + 1) % D, j) = 1.0;
  }
  return {s, t};
}

/// tau_{p,q} = tau^p sigma^q, indices reduced mod D.
inline CMatrix tau_pq(int D, int p, int q) {
  p = mod(p, D);
  q = mod(q, D);
  CMatrix m = CMatrix::Zero(D, D);
  for (int j = 0; j < D; ++j) m((j + p) % D, j) = omega_pow(D, static_cast<double>(q) * j);
  return m;
}

inline CMatrix generalized_hadamard(int D) {
  CMatrix h(D, D);
  for (int j = 0; j < D; ++j)
    for (int k = 0; k < D; ++k) h(j, k) = omega_pow(D, -static_cast<double>(j * k)) / std::sqrt(double(D));
  return h;
}

/// |psi_{p,q}> = D^{-1/2} sum_{ij} conj(tau_{p,q})_{ij} |i>|j>, returned as columns p D + q.
inline std::vector<CVector> build_psi_basis(int D) {
  std::vector<CVector> out;
  for (int p = 0; p < D; ++p)
    for (int q = 0; q < D; ++q) {
      const CMatrix t = tau_pq(D, p, q);
      CVector v(D * D);
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) v(i * D + j) = std::conj(t(i, j)) / std::sqrt(double(D));
      out.push_back(v);
    }
  return out;
}

struct ThetaTable {
  int D = 2;
  std::vector<cplx> entries;  ///< row-major, entries[p D + q]

  cplx operator()(int p, int q) const { return entries[mod(p, D) * D + mod(q, D)]; }
  cplx& at(int p, int q) { return entries[mod(p, D) * D + mod(q, D)]; }
};

inline ThetaTable theta_ones(int D) { return {D, std::vector<cplx>(D * D, 1.0)}; }

inline bool theta_valid(const ThetaTable& t, double tol = 1e-12) {
  if (static_cast<int>(t.entries.size()) != t.D * t.D) return false;
  for (auto z : t.entries)
    if (std::abs(std::abs(z) - 1.0) > tol) return false;
  return std::abs(t(0, 0) - 1.0) <= tol;
}

inline bool is_integer(double x) { return std::abs(x - std::round(x)) < 1e-12; }

/// theta_{p,q} = w^{lambda p^2 + mu p q + nu q^2}.
inline ThetaTable theta_quadratic(int D, double lambda, double mu, double nu) {
  const bool ok_mu = is_integer(mu);
  const bool ok_ln = (D % 2 == 1) ? (is_integer(lambda) && is_integer(nu))
                                  : (is_integer(2 * lambda) && is_integer(2 * nu));
  if (!ok_mu || !ok_ln) throw std::invalid_argument("theta_quadratic: parameters violate the parity rule");
  ThetaTable t{D, std::vector<cplx>(D * D)};
  for (int p = 0; p < D; ++p)
    for (int q = 0; q < D; ++q) t.at(p, q) = omega_pow(D, lambda * p * p + mu * p * q + nu * q * q);
  return t;
}

enum class L2Family { DpqHalf, PSquared };

inline ThetaTable theta_l2_families(int D, L2Family which) {
  if (which == L2Family::DpqHalf) {
    if (D < 6 || D % 4 != 2) throw std::invalid_argument("dpq-half family needs D = 4k+2, k >= 1");
    ThetaTable t{D, std::vector<cplx>(D * D)};
    for (int p = 0; p < D; ++p)
      for (int q = 0; q < D; ++q) t.at(p, q) = omega_pow(D, D * p * q / 2.0);
    return t;
  }
  return theta_quadratic(D, D % 2 == 0 ? 0.5 : 1.0, 0, 0);
}

/// Level-3 tables w^{p^2 + c q^2}: c = 1 for D = 8m+4, c = 3/2 for D = 12m+2, 12m+10 and
/// D = 12m+6 with m not congruent to 1 mod 3.
inline ThetaTable theta_l3_families(int D) {
  double c = 0;
  if (D >= 4 && D % 8 == 4) {
    c = 1.0;
  } else if (D % 12 == 2 || D % 12 == 10) {
    c = 1.5;
  } else if (D % 12 == 6 && ((D - 6) / 12) % 3 != 1) {
    c = 1.5;
  } else {
    throw std::invalid_argument("theta_l3_families: D outside the supported residue classes");
  }
  return theta_quadratic(D, 1.0, 0, c);
}

struct CliffordFamilyParams {
  int D = 2;
  ThetaTable theta;
  std::optional<CMatrix> v1, v2, v3, v4;  ///< identity when absent

  CMatrix v(int which) const {
    const std::optional<CMatrix>* vs[4] = {&v1, &v2, &v3, &v4};
    const auto& m = *vs[which - 1];
    if (!m) return identity(D);
    if (m->rows() != D || !is_unitary(*m, 1e-10))
      throw std::invalid_argument("clifford gate: v is not a unitary of the right size");
    return *m;
  }
};

/// u0 = sum theta_{p,q} |psi_{p,q}><psi_{p,q}|.
inline CMatrix clifford_core(const ThetaTable& t) {
  const auto basis = build_psi_basis(t.D);
  CMatrix u0 = CMatrix::Zero(t.D * t.D, t.D * t.D);
  for (int p = 0; p < t.D; ++p)
    for (int q = 0; q < t.D; ++q) {
      const CVector& v = basis[p * t.D + q];
      u0 += t(p, q) * v * v.adjoint();
    }
  return u0;
}

inline GateTensor build_clifford_gate(const CliffordFamilyParams& p) {
  if (p.theta.D != p.D) throw std::invalid_argument("clifford gate: theta table has a different D");
  return {p.D, kron(p.v(1), p.v(2)) * clifford_core(p.theta) * kron(p.v(3), p.v(4))};
}

/// identity, swap, cnot, cz, controlled-tau (sum_i |i><i| (x) tau^i) and
/// generalized-hadamard-conjugate (controlled-tau with the target conjugated by the
/// generalized Hadamard, i.e. sum_i |i><i| (x) sigma^i; equals CZ at D = 2).
inline GateTensor build_named(const std::string& name, int D = 2) {
  const int n = D * D;
  if (name == "identity") return {D, identity(n)};
  if (name == "swap") {
    CMatrix s = CMatrix::Zero(n, n);
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) s(j * D + i, i * D + j) = 1.0;
    return {D, s};
  }
  auto controlled = [&](const CMatrix& base) {
    CMatrix c = CMatrix::Zero(n, n);
    CMatrix pw = identity(D);
    for (int i = 0; i < D; ++i) {
      c.block(i * D, i * D, D, D) = pw;
      pw = base * pw;
    }
    return c;
  };
  const auto [sigma, tau] = build_sigma_tau(D);
  if (name == "controlled-tau") return {D, controlled(tau)};
  if (name == "generalized-hadamard-conjugate") {
    const CMatrix h = generalized_hadamard(D);
    return {D, kron(identity(D), h.adjoint()) * controlled(tau) * kron(identity(D), h)};
  }
  if (name == "cnot" || name == "cz") {
    if (D != 2) throw std::invalid_argument("build_named: " + name + " is a qubit gate");
    return {2, controlled(name == "cnot" ? pauli(1) : pauli(3))};
  }
  throw std::invalid_argument("build_named: unknown gate '" + name + "'");
}

/// Parameters for the qubit level-2 family with v1 = U(r1, th1, phi1), v2 = U(r2, th2, phi2),
/// J = (0, 0, pi/4), v3 = v4 = I, and sin(th) = 1/(sqrt2 sin r).
inline QubitGateParams qubit_l2_params(double r1, double phi1, double r2, double phi2) {
  QubitGateParams p;
  p.Jz = kPi / 4;
  const double t1 = std::asin(std::clamp(1.0 / (std::sqrt(2.0) * std::sin(r1)), -1.0, 1.0));
  const double t2 = std::asin(std::clamp(1.0 / (std::sqrt(2.0) * std::sin(r2)), -1.0, 1.0));
  p.v1 = LocalGate::from_angles(r1, t1, phi1);
  p.v2 = LocalGate::from_angles(r2, t2, phi2);
  return p;
}

/// Three reference single-site parameter sets (left, middle, right) for the qubit decay studies, with
/// v1 = v2 = U(r, theta, phi), v3 = v4 = I. theta is recomputed from r so that the gate lies
/// exactly on the level-2 manifold (the listed theta agrees to about five digits).
enum class ReferenceSet { Left, Middle, Right };

inline SU2Angles reference_angles(ReferenceSet s) {
  switch (s) {
    case ReferenceSet::Left: return {1.24056, 0.84429, -0.4764};
    case ReferenceSet::Middle: return {1.0, 0.99788, 3.0};
    default: return {kPi / 4, kPi / 2, 0.0};
  }
}

inline QubitGateParams reference_params(ReferenceSet s) {
  const SU2Angles a = reference_angles(s);
  return qubit_l2_params(a.r, a.phi, a.r, a.phi);
}

/// CNOT as J = (0, 0, pi/4) with v1 = e^{i pi/4 Z}, v2 = H X e^{-i pi/4 Z}, v3 = I,
/// v4 = X H and global phase e^{-i pi/4}. These z-rotation signs reproduce CNOT exactly.
inline QubitGateParams cnot_decomposition() {
  CMatrix h(2, 2);
  h << 1, 1, 1, -1;
  h /= std::sqrt(2.0);
  const CMatrix zp = std::cos(kPi / 4) * pauli(0) + kI * std::sin(kPi / 4) * pauli(3);
  QubitGateParams p;
  p.Jz = kPi / 4;
  p.v1 = LocalGate::from_matrix(zp);
  p.v2 = LocalGate::from_matrix(h * pauli(1) * zp.adjoint());
  p.v4 = LocalGate::from_matrix(pauli(1) * h);
  p.phase = -kPi / 4;
  return p;
}

}  // namespace hier
