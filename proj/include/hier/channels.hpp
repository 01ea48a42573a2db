#pragma once

// Correlation channels obtained by contracting folded gates with bullets, and the exact
// correlator formulas they carry.
//
// Positions are measured in cells: site s sits at position s/2, so integer positions are
// the left site of a first-layer gate and half-integer positions the right site. Time t
// lives on the half-integer grid; t = n/2 means n brickwork layers, layer 1 acting on
// site pairs (2c, 2c+1) and layer 2 on (2c+1, 2c+2).
//
// Single-site channels (subscript 1 = left site, 2 = right site):
//   eps_L(b) = Tr_1[u (I (x) b) u^dag] / D,  eps_R(b) = Tr_2[u (b (x) I) u^dag] / D,
//   M_L(b)   = Tr_1[u (b (x) I) u^dag] / D,  M_R(b)   = Tr_2[u (I (x) b) u^dag] / D.
// M_L moves an operator one site to the right, M_R one site to the left.

#include "hier/conditions.hpp"
#include "hier/gates.hpp"

#include <numeric>
#include <optional>
#include <string>

namespace hier {

/// Superoperator on vectorized k-site operators (index r D^k + c).
struct Channel {
  int D = 2;
  int k = 1;
  CMatrix m;

  CVector apply(const CVector& x) const { return m * x; }
};

/// Traceless, Hilbert-Schmidt normalized operator on k consecutive sites.
struct Observable {
  int D = 2;
  int k = 1;
  CMatrix op;
};

inline Observable make_observable(const CMatrix& m, int D) {
  const int k = site_count(m.rows(), D);
  if (k < 1 || m.rows() != m.cols()) throw std::invalid_argument("observable: size is not a power of D");
  if (std::abs(m.trace()) > 1e-12) throw std::invalid_argument("observable: operator is not traceless");
  if (std::abs((m.adjoint() * m).trace() - 1.0) > 1e-12)
    throw std::invalid_argument("observable: operator is not Hilbert-Schmidt normalized");
  return {D, k, m};
}

inline Observable random_observable(int D, int k, Rng& rng) {
  return {D, k, random_observable(ipow(D, k), rng)};
}

/// Tr(a X) for X given as a vectorized operator.
inline cplx trace_against(const CMatrix& a, const CVector& x) {
  const Eigen::Index n = a.rows();
  cplx s = 0;
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) s += a(r, c) * x(c * n + r);
  return s;
}

inline CVector vec_of(const CMatrix& m) {
  CVector v(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v(r * m.cols() + c) = m(r, c);
  return v;
}

inline bool is_unital(const Channel& ch, double tol = kDefaultTol) {
  const CVector id = vec_of(identity(ipow(ch.D, ch.k)));
  return (ch.m * id - id).cwiseAbs().maxCoeff() <= tol;
}

inline bool is_trace_preserving(const Channel& ch, double tol = kDefaultTol) {
  const CVector id = vec_of(identity(ipow(ch.D, ch.k)));
  return (id.adjoint() * ch.m - id.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

// --------------------------------------------------------------- single-site channels

struct SingleSiteChannels {
  Channel eps_L, eps_R, M_L, M_R;
};

inline SingleSiteChannels build_single_site_channels(const GateTensor& g) {
  if (!is_unitary(g.u, 1e-10)) throw std::invalid_argument("channels: gate is not unitary");
  const int D = g.D;
  const CMatrix id = identity(D);
  auto make = [&](bool b_left, bool keep_left) {
    return Channel{D, 1, superoperator(D, [&](const CMatrix& b) {
                     const CMatrix in = b_left ? kron(b, id) : kron(id, b);
                     const CMatrix out = g.u * in * g.u.adjoint();
                     return CMatrix(partial_trace(out, D, {keep_left ? 0 : 1}) / double(D));
                   })};
  };
  return {make(false, false), make(true, true), make(true, false), make(false, true)};
}

// -------------------------------------------------------------- multi-site channels

/// Superoperator on k sites acting as a product of single-site superoperators. ops[s] acts
/// on site s (index (m_s D + n_s)); an empty matrix means the identity map.
inline CMatrix product_superop(int D, const std::vector<CMatrix>& ops) {
  const int k = static_cast<int>(ops.size());
  const std::int64_t N = ipow(D, k), F = N * N;
  // digits of a vec index (r, c) into per-site pairs (m_s, n_s).
  auto pair_index = [&](std::int64_t idx, int s) {
    const std::int64_t r = idx / N, c = idx % N;
    const std::int64_t st = ipow(D, k - 1 - s);
    return static_cast<int>(((r / st) % D) * D + (c / st) % D);
  };
  CMatrix out = CMatrix::Zero(F, F);
  for (std::int64_t row = 0; row < F; ++row)
    for (std::int64_t col = 0; col < F; ++col) {
      cplx v = 1.0;
      for (int s = 0; s < k && v != 0.0; ++s) {
        const int a = pair_index(row, s), b = pair_index(col, s);
        v *= ops[s].size() ? ops[s](a, b) : cplx(a == b ? 1.0 : 0.0);
      }
      out(row, col) = v;
    }
  return out;
}

/// Folded two-site gate acting on sites (s, s+1) of a vectorized k-site operator.
inline void apply_folded_pair(CVector& x, const CMatrix& u, int D, int k, int s) {
  std::vector<cplx> psi(x.data(), x.data() + x.size());
  apply_two_site(psi, D, 2 * k, s, s + 1, u);
  apply_two_site(psi, D, 2 * k, k + s, k + s + 1, u.conjugate());
  x = Eigen::Map<CVector>(psi.data(), x.size());
}

/// Superoperator of the folded gate on sites (s, s+1) of k sites.
inline CMatrix folded_pair_superop(const GateTensor& g, int k, int s) {
  const std::int64_t F = ipow(g.D, 2 * k);
  CMatrix out(F, F);
  for (std::int64_t c = 0; c < F; ++c) {
    CVector e = CVector::Zero(F);
    e(c) = 1.0;
    apply_folded_pair(e, g.u, g.D, k, s);
    out.col(c) = e;
  }
  return out;
}

/// Q = (eps_L (x) eps_R) o w: one full Floquet step on a gate-aligned two-site operator.
inline Channel build_Q(const GateTensor& g) {
  if (!is_unitary(g.u, 1e-10)) throw std::invalid_argument("build_Q: gate is not unitary");
  const auto ch = build_single_site_channels(g);
  const CMatrix P = product_superop(g.D, {ch.eps_L.m, ch.eps_R.m});
  return {g.D, 2, P * fold(g).w};
}

/// Largest local dimension for which the three-site channel is materialized.
inline constexpr int kMaxRDim = 3;

/// R = (eps_L (x) w) o (w (x) eps_R): one Floquet step on a three-site operator whose
/// left two sites form a first-layer gate.
inline Channel build_R(const GateTensor& g) {
  if (!is_unitary(g.u, 1e-10)) throw std::invalid_argument("build_R: gate is not unitary");
  if (g.D > kMaxRDim) throw std::length_error("build_R: D^6 superoperator exceeds the size cap");
  const auto ch = build_single_site_channels(g);
  const CMatrix first = folded_pair_superop(g, 3, 0) * product_superop(g.D, {CMatrix(), CMatrix(), ch.eps_R.m});
  const CMatrix second = folded_pair_superop(g, 3, 1) * product_superop(g.D, {ch.eps_L.m, CMatrix(), CMatrix()});
  return {g.D, 3, second * first};
}

// ---------------------------------------------------------------------- ergodicity

struct Ergodicity {
  bool ergodic = true;
  cplx lambda = 0;  ///< largest eigenvalue on the traceless sector
};

/// Removes one eigenvalue 1 (the identity eigenvector) and reports the largest remaining.
inline Ergodicity ergodicity(const Channel& ch, double tol = 1e-8) {
  std::vector<cplx> ev = spectrum(ch.m, 1 << 13);
  auto it = std::min_element(ev.begin(), ev.end(),
                             [](cplx a, cplx b) { return std::abs(a - 1.0) < std::abs(b - 1.0); });
  ev.erase(it);
  Ergodicity e;
  if (ev.empty()) return e;
  e.lambda = ev.front();
  e.ergodic = std::abs(std::abs(e.lambda) - 1.0) > tol;
  return e;
}

/// lambda = cos^2(phi2 - phi1) - 2 (sqrt(-cos 2r2) cos r1 + sqrt(-cos 2r1) cos r2)^2.
inline double qubit_lambda_closed_form(double r1, double r2, double phi1, double phi2) {
  const double lo = kPi / 4 - 1e-12, hi = 3 * kPi / 4 + 1e-12;
  if (r1 < lo || r1 > hi || r2 < lo || r2 > hi)
    throw std::domain_error("qubit_lambda_closed_form: r must lie in [pi/4, 3pi/4]");
  const double c = std::cos(phi2 - phi1);
  const double s = std::sqrt(std::max(0.0, -std::cos(2 * r2))) * std::cos(r1) +
                   std::sqrt(std::max(0.0, -std::cos(2 * r1))) * std::cos(r2);
  return c * c - 2 * s * s;
}

struct Rational {
  int num = 0, den = 1;
  double value() const { return double(num) / den; }
};

/// nu_k = (k - 2) / k in lowest terms.
inline Rational inner_lightcone_velocity(int k) {
  if (k < 2) throw std::invalid_argument("inner_lightcone_velocity: k must be at least 2");
  const int g = std::gcd(k - 2, k);
  return {(k - 2) / g, k / g};
}

// ---------------------------------------------------------------------- correlators

/// Half-integer time t as a layer count; throws off the grid.
inline int layers_of(double t) {
  const double n = 2 * t;
  if (t < 0 || std::abs(n - std::round(n)) > 1e-9) throw std::invalid_argument("time must be a non-negative multiple of 1/2");
  return static_cast<int>(std::lround(n));
}

inline int sites_of(double x) {
  const double s = 2 * x;
  if (std::abs(s - std::round(s)) > 1e-9) throw std::invalid_argument("position must be a multiple of 1/2");
  return static_cast<int>(std::lround(s));
}

inline CVector apply_power(const CMatrix& m, CVector x, int n) {
  for (int k = 0; k < n; ++k) x = m * x;
  return x;
}

/// Single-site correlator of a level-2 circuit. For b at an integer position the right ray
/// is Tr(a M_L^{2t} b) and the time axis Tr(a eps_R^k (eps_L eps_R)^{floor t} b) with
/// 2t = 2 floor t + k; half-integer positions use the mirror image (M_R, eps_L first).
/// Every other point vanishes.
inline cplx correlator_l2(const GateTensor& g, const Observable& a, const Observable& b, double i, double j,
                          double t, bool require_l2 = true) {
  if (a.k != 1 || b.k != 1) throw std::invalid_argument("correlator_l2: single-site observables only");
  if (require_l2 && !check_l2(g).passed)
    throw std::invalid_argument("correlator_l2: gate is not level 2, use the oracle");
  const int n = layers_of(t);
  const int sj = sites_of(j), si = sites_of(i);
  const bool even = mod(sj, 2) == 0;
  const auto ch = build_single_site_channels(g);
  const CVector vb = vec_of(b.op);
  const int d = si - sj;
  if (n == 0) return d == 0 ? trace_against(a.op, vb) : 0.0;
  if (d == 0) {
    const Channel& first = even ? ch.eps_R : ch.eps_L;
    const Channel& second = even ? ch.eps_L : ch.eps_R;
    CVector x = vb;
    for (int l = 0; l < n; ++l) x = (l % 2 == 0 ? first : second).m * x;
    return trace_against(a.op, x);
  }
  if (even && d == n) return trace_against(a.op, apply_power(ch.M_L.m, vb, n));
  if (!even && d == -n) return trace_against(a.op, apply_power(ch.M_R.m, vb, n));
  return 0.0;
}

/// Two-site gate-aligned correlator on the time axis: Tr(a Q^m b) for t = m and
/// Tr(a w Q^m b) for t = m + 1/2 (the folded gate acts after Q^m).
inline cplx correlator_2site_time(const GateTensor& g, const Observable& a, const Observable& b, double t,
                                  bool require_l2 = true) {
  if (a.k != 2 || b.k != 2) throw std::invalid_argument("correlator_2site_time: two-site gate-aligned observables only");
  if (require_l2 && !check_l2(g).passed)
    throw std::invalid_argument("correlator_2site_time: gate is not level 2, use the oracle");
  const int n = layers_of(t);
  const Channel q = build_Q(g);
  CVector x = apply_power(q.m, vec_of(b.op), n / 2);
  if (n % 2) x = fold(g).w * x;
  return trace_against(a.op, x);
}

/// correlator_2site_time at t = 0, 1/2, ..., n_max/2 with Q built once.
inline std::vector<cplx> correlator_2site_series(const GateTensor& g, const Observable& a, const Observable& b,
                                                 int n_max, bool require_l2 = true) {
  if (a.k != 2 || b.k != 2) throw std::invalid_argument("correlator_2site_series: two-site gate-aligned observables only");
  if (require_l2 && !check_l2(g).passed)
    throw std::invalid_argument("correlator_2site_series: gate is not level 2, use the oracle");
  const Channel q = build_Q(g);
  const CMatrix w = fold(g).w;
  std::vector<cplx> out;
  CVector x = vec_of(b.op);
  for (int n = 0; n <= n_max; ++n) {
    if (n > 0 && n % 2 == 0) x = q.m * x;
    out.push_back(trace_against(a.op, n % 2 ? CVector(w * x) : x));
  }
  return out;
}

/// Three-site time-axis correlator for b starting at an even site: Tr(a R^m b) at t = m and
/// Tr(a (w (x) eps_R) R^m b) at t = m + 1/2.
inline cplx correlator_3site_time(const GateTensor& g, const Observable& a, const Observable& b, double t,
                                  bool require_l2 = true) {
  if (a.k != 3 || b.k != 3) throw std::invalid_argument("correlator_3site_time: three-site observables only");
  if (require_l2 && !check_l2(g).passed)
    throw std::invalid_argument("correlator_3site_time: gate is not level 2, use the oracle");
  const int n = layers_of(t);
  const Channel r = build_R(g);
  CVector x = apply_power(r.m, vec_of(b.op), n / 2);
  if (n % 2) {
    const auto ch = build_single_site_channels(g);
    x = folded_pair_superop(g, 3, 0) * (product_superop(g.D, {CMatrix(), CMatrix(), ch.eps_R.m}) * x);
  }
  return trace_against(a.op, x);
}

// ----------------------------------------------------------------- correlator grids

struct GridCell {
  double i = 0, j = 0;
  int t_num = 0, t_den = 2;
  cplx value = 0;
  std::string method;
};

using CorrelatorGrid = std::vector<GridCell>;

inline GridCell make_cell(double i, double j, int n_layers, cplx v, const std::string& method) {
  GridCell c{i, j, n_layers, 2, v, method};
  if (n_layers % 2 == 0) c = {i, j, n_layers / 2, 1, v, method};
  return c;
}

}  // namespace hier
