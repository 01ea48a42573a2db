#pragma once

// Quench from a locally purified matrix product state.
//
// Cell c occupies sites (2c+1, 2c+2), so first-layer gates on (2c, 2c+1) straddle two
// cells. A cell's folded tensor has legs (bL, bR, lL, lR): bonds carry alpha chi + alpha'
// and physical legs i d + i' (ket, bra). Its value is d sum_g A^{iL iR g} (x) conj(A^{iL' iR' g}),
// so capping both physical legs with bullets gives E(0) = sum A (x) conj(A). Vectors on a
// bond (square, triangle) are contracted bilinearly, without conjugation.
//
// K_g^dag = sum_{ij} A^{(i j g)} (x) |i><j| with ordering chi (x) d, so
// (K_g^dag)_{(alpha i), (beta j)} = A^{(i j g)}_{alpha beta}. The symbol d is the same as D.

#include "hier/oracle.hpp"

#include <Eigen/Eigenvalues>
#include <fstream>
#include <sstream>

namespace hier {

struct PurifiedMPS {
  int d = 2, chi = 1, gdim = 1;
  std::vector<CMatrix> A;  ///< index (iL d + iR) gdim + g, each chi x chi

  std::size_t index(int iL, int iR, int g) const { return static_cast<std::size_t>((iL * d + iR) * gdim + g); }
  const CMatrix& a(int iL, int iR, int g) const { return A.at(index(iL, iR, g)); }
  CMatrix& a(int iL, int iR, int g) { return A.at(index(iL, iR, g)); }

  void validate() const {
    if (d < 2 || chi < 1 || gdim < 1) throw std::invalid_argument("mps: bad dimensions");
    if (A.size() != static_cast<std::size_t>(d * d * gdim)) throw std::invalid_argument("mps: wrong tensor count");
    for (const auto& m : A)
      if (m.rows() != chi || m.cols() != chi) throw std::invalid_argument("mps: tensor is not chi x chi");
  }
};

inline PurifiedMPS zero_mps(int d, int chi, int gdim) {
  return {d, chi, gdim, std::vector<CMatrix>(d * d * gdim, CMatrix::Zero(chi, chi))};
}

/// Builds A from the K_g via (K_g^dag)_{(alpha i),(beta j)} = A^{(i j g)}_{alpha beta}.
inline PurifiedMPS mps_from_K(int d, int chi, const std::vector<CMatrix>& K) {
  PurifiedMPS m = zero_mps(d, chi, static_cast<int>(K.size()));
  for (int g = 0; g < m.gdim; ++g) {
    if (K[g].rows() != d * chi || K[g].cols() != d * chi) throw std::invalid_argument("mps_from_K: K is not d chi square");
    const CMatrix kd = K[g].adjoint();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int al = 0; al < chi; ++al)
          for (int be = 0; be < chi; ++be) m.a(i, j, g)(al, be) = kd(al * d + i, be * d + j);
  }
  return m;
}

inline std::vector<CMatrix> k_operators(const PurifiedMPS& m) {
  std::vector<CMatrix> K;
  for (int g = 0; g < m.gdim; ++g) {
    CMatrix kd = CMatrix::Zero(m.d * m.chi, m.d * m.chi);
    for (int i = 0; i < m.d; ++i)
      for (int j = 0; j < m.d; ++j)
        for (int al = 0; al < m.chi; ++al)
          for (int be = 0; be < m.chi; ++be) kd(al * m.d + i, be * m.d + j) = m.a(i, j, g)(al, be);
    K.push_back(kd.adjoint());
  }
  return K;
}

/// (|01> + |10>)/sqrt2 on every cell.
inline PurifiedMPS bell_state() { return mps_from_K(2, 1, {CMatrix(pauli(1) / std::sqrt(2.0))}); }

/// Mixed chi = 1 state paired with CNOT: K_0 = I/2, K_1 = sigma_Y/2, so sum K^dag K = I/2.
inline PurifiedMPS cnot_mixed_state() {
  return mps_from_K(2, 1, {CMatrix(identity(2) / 2.0), CMatrix(pauli(2) / 2.0)});
}

inline PurifiedMPS random_mps(int d, int chi, int gdim, Rng& rng) {
  PurifiedMPS m = zero_mps(d, chi, gdim);
  for (auto& a : m.A) a = gaussian_matrix(chi, chi, rng);
  return m;
}

// ----------------------------------------------------------------- transfer matrices

inline CMatrix transfer_E0(const PurifiedMPS& m) {
  m.validate();
  CMatrix E = CMatrix::Zero(m.chi * m.chi, m.chi * m.chi);
  for (const auto& a : m.A) E += kron(a, a.conjugate());
  return E;
}

/// Eigenvalues of E sorted by decreasing modulus, with right and left eigenvectors.
struct Leading {
  cplx value = 0, second = 0;
  CVector right, left;
};

inline Leading leading_eigen(const CMatrix& E) {
  Eigen::ComplexEigenSolver<CMatrix> er(E), el(E.transpose());
  auto top = [](const Eigen::ComplexEigenSolver<CMatrix>& es) {
    std::vector<int> idx(es.eigenvalues().size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return std::abs(es.eigenvalues()(a)) > std::abs(es.eigenvalues()(b)); });
    return idx;
  };
  const auto ir = top(er), il = top(el);
  Leading out;
  out.value = er.eigenvalues()(ir[0]);
  out.second = ir.size() > 1 ? er.eigenvalues()(ir[1]) : cplx(0);
  out.right = er.eigenvectors().col(ir[0]);
  out.left = el.eigenvectors().col(il[0]);
  return out;
}

/// Rescales A so that the leading eigenvalue of E(0) is 1.
inline PurifiedMPS normalize(PurifiedMPS m) {
  const cplx lam = leading_eigen(transfer_E0(m)).value;
  if (std::abs(lam) < 1e-300) throw std::domain_error("normalize: E(0) is nilpotent");
  for (auto& a : m.A) a /= std::sqrt(std::abs(lam));
  return m;
}

inline constexpr double kFixedPointGap = 1e-8;

struct FixedPoints {
  CVector left;   ///< triangle, contracted bilinearly
  CVector right;  ///< square, as a matrix Hermitian with trace chi
  double gap = 0;
};

inline CMatrix bond_matrix(const CVector& v, int chi) {
  CMatrix m(chi, chi);
  for (int a = 0; a < chi; ++a)
    for (int b = 0; b < chi; ++b) m(a, b) = v(a * chi + b);
  return m;
}

inline FixedPoints fixed_points(const CMatrix& E0, double tol = 1e-10) {
  const Leading l = leading_eigen(E0);
  if (std::abs(l.value - 1.0) > tol) throw std::domain_error("fixed_points: leading eigenvalue of E(0) is not 1");
  FixedPoints fp;
  fp.gap = 1.0 - std::abs(l.second);
  if (E0.rows() > 1 && fp.gap < kFixedPointGap) throw std::domain_error("fixed_points: degenerate leading eigenvalue");
  const int chi = static_cast<int>(std::lround(std::sqrt(double(E0.rows()))));
  fp.right = l.right;
  const cplx tr = bond_matrix(fp.right, chi).trace();
  if (std::abs(tr) < 1e-14) throw std::domain_error("fixed_points: right fixed point has zero trace");
  fp.right *= double(chi) / tr;
  const cplx ov = l.left.transpose() * fp.right;
  fp.left = l.left / ov;
  return fp;
}

inline FixedPoints fixed_points(const PurifiedMPS& m, double tol = 1e-10) { return fixed_points(transfer_E0(m), tol); }

/// Gauge A -> X^{-1/2} A X^{1/2} with X the right fixed point, so that sum A A^dag = I.
/// A singular X leaves the state unchanged and sets warning.
inline PurifiedMPS right_canonicalize(const PurifiedMPS& in, std::string* warning = nullptr) {
  const PurifiedMPS m = normalize(in);
  const FixedPoints fp = fixed_points(m);
  CMatrix X = bond_matrix(fp.right, m.chi);
  X = (X + X.adjoint()) / 2.0;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(X);
  const auto ev = es.eigenvalues();
  if (ev.minCoeff() < 1e-12 * std::max(1.0, ev.maxCoeff())) {
    if (warning) *warning = "right_canonicalize: fixed point is singular, state left unchanged";
    return m;
  }
  const CMatrix V = es.eigenvectors();
  const CMatrix sq = V * ev.cwiseSqrt().cast<cplx>().asDiagonal() * V.adjoint();
  const CMatrix isq = V * ev.cwiseSqrt().cwiseInverse().cast<cplx>().asDiagonal() * V.adjoint();
  PurifiedMPS out = m;
  for (auto& a : out.A) a = isq * a * sq;
  return out;
}

inline double canonical_residual(const PurifiedMPS& m) {
  CMatrix s = CMatrix::Zero(m.chi, m.chi);
  for (const auto& a : m.A) s += a * a.adjoint();
  return max_abs(s - identity(m.chi));
}

/// Cell folded tensor with the given leg labels (bL, bR, lL, lR).
inline LTensor cell_tensor(const PurifiedMPS& m, const std::array<int, 4>& labels) {
  const int d = m.d, c = m.chi, B = c * c, F = d * d;
  LTensor t{{labels[0], labels[1], labels[2], labels[3]}, {B, B, F, F}, std::vector<cplx>(std::size_t(B) * B * F * F, 0.0)};
  for (int g = 0; g < m.gdim; ++g)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int ip = 0; ip < d; ++ip)
          for (int jp = 0; jp < d; ++jp) {
            const CMatrix& a = m.a(i, j, g);
            const CMatrix& b = m.a(ip, jp, g);
            for (int al = 0; al < c; ++al)
              for (int alp = 0; alp < c; ++alp)
                for (int be = 0; be < c; ++be)
                  for (int bep = 0; bep < c; ++bep) {
                    const std::size_t k = ((std::size_t(al * c + alp) * B + (be * c + bep)) * F + (i * d + ip)) * F + (j * d + jp);
                    t.data[k] += double(d) * a(al, be) * std::conj(b(alp, bep));
                  }
          }
  return t;
}

/// Reduced two-site density of one cell, triangle^T (sum A (x) conj A) square, trace 1.
inline CMatrix cell_density(const PurifiedMPS& m, const FixedPoints& fp) {
  const int d = m.d, c = m.chi;
  CMatrix rho = CMatrix::Zero(d * d, d * d);
  const CMatrix Lm = bond_matrix(fp.left, c), Rm = bond_matrix(fp.right, c);
  for (int g = 0; g < m.gdim; ++g)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int ip = 0; ip < d; ++ip)
          for (int jp = 0; jp < d; ++jp)
            // sum L(al,al') A(al,be) conj(A'(al',be')) R(be,be') = Tr(L^T A R A'^dag)
            rho(i * d + j, ip * d + jp) +=
                (Lm.transpose() * m.a(i, j, g) * Rm * m.a(ip, jp, g).adjoint()).trace();
  return rho;
}

inline constexpr std::int64_t kTransferCap = std::int64_t{1} << 20;

struct TransferMatrix {
  CMatrix E;      ///< rows: left boundary, columns: right boundary
  int layers = 0;
  bool inserted = false;
};

namespace detail {

inline constexpr int kBondL = 1, kBondR = 2;
inline int wire(int s, int tau) { return 100 + 1000 * s + tau; }

inline LTensor vec_tensor(int label, const CVector& v) { return vector_tensor(label, v); }

/// Tensor replacing the top bullets of a k-site observable on the given legs, normalized
/// like the bullets it replaces (1/sqrt(D) per leg) so an insertion yields Tr(O rho).
inline LTensor insertion_tensor(const CMatrix& O, int D, const std::vector<int>& labels) {
  const int k = static_cast<int>(labels.size());
  const std::int64_t N = ipow(D, k);
  LTensor t;
  t.labels = labels;
  t.dims.assign(k, D * D);
  t.data.assign(static_cast<std::size_t>(N * N), 0.0);
  const double scale = std::pow(double(D), -0.5 * k);
  for (std::int64_t r = 0; r < N; ++r)
    for (std::int64_t c = 0; c < N; ++c) {
      // leg s carries (ket digit of r, bra digit of c); the value is O(c, r).
      std::int64_t idx = 0;
      for (int s = 0; s < k; ++s) {
        const std::int64_t st = ipow(D, k - 1 - s);
        idx = idx * (D * D) + ((r / st) % D) * D + (c / st) % D;
      }
      t.data[idx] = scale * O(c, r);
    }
  return t;
}

/// Gates and cell of one column (see transfer_matrix). Wires (s, tau) with s in {0,1,2}
/// are sites 2c, 2c+1, 2c+2 between layers tau and tau+1.
inline LTensor column_network(const PurifiedMPS& m, const GateTensor& g, int n, const std::optional<LTensor>& cap) {
  const CVector o = bullet(g.D);
  LTensor acc = cell_tensor(m, {kBondL, kBondR, wire(1, 0), wire(2, 0)});
  for (int l = 1; l <= n; ++l) {
    const int s0 = l % 2 == 1 ? 0 : 1;
    acc = contract(acc, folded_gate_tensor(g, {wire(s0, l), wire(s0 + 1, l), wire(s0, l - 1), wire(s0 + 1, l - 1)}));
  }
  // top legs owned by the column: (0, n) if n odd, (1, n), and (2, n) if n even.
  std::vector<int> own{wire(1, n)};
  own.push_back(n % 2 == 1 ? wire(0, n) : wire(2, n));
  if (n == 0) own = {wire(1, 0), wire(2, 0)};
  for (int lab : own)
    if (!cap || std::find(cap->labels.begin(), cap->labels.end(), lab) == cap->labels.end())
      acc = contract(acc, vec_tensor(lab, o));
  if (cap) {
    for (int lab : cap->labels)
      if (std::find(own.begin(), own.end(), lab) == own.end())
        throw std::invalid_argument("transfer_matrix: insertion not on a top leg owned by the column");
    acc = contract(acc, *cap);
  }
  return acc;
}

inline std::vector<int> left_legs(int n) {
  std::vector<int> r{kBondL};
  for (int tau = 0; tau < n; ++tau) r.push_back(wire(0, tau));
  return r;
}

inline std::vector<int> right_legs(int n) {
  std::vector<int> r{kBondR};
  for (int tau = 0; tau < n; ++tau) r.push_back(wire(2, tau));
  return r;
}

}  // namespace detail

/// Observable placed on the top legs a column owns: site 1 (2c+1) always, site 0 (2c) after an
/// odd number of layers, site 2 (2c+2) after an even number. A two-site operator covers the
/// pair of the column's top gate.
struct TopInsertion {
  CMatrix op;
  int site = 1;
};

/// Column transfer matrix at depth t: cell c, odd-layer gates on (2c, 2c+1) and even-layer
/// gates on (2c+1, 2c+2), with bullets on its top legs except at the insertion. Boundary
/// legs are the bond and the n wires crossing each side, in time order.
inline TransferMatrix transfer_matrix(const PurifiedMPS& m, const GateTensor& g, double t,
                                      const std::optional<TopInsertion>& ins = std::nullopt,
                                      std::int64_t cap = kTransferCap) {
  const int n = layers_of(t);
  const std::int64_t side = ipow(g.D, 2 * n) * m.chi * m.chi;
  if (side > cap) throw std::length_error("transfer_matrix: column dimension exceeds the cap");
  std::optional<LTensor> cap_tensor;
  if (ins) {
    if (n == 0) throw std::invalid_argument("transfer_matrix: insertion needs t > 0");
    const int k = site_count(ins->op.rows(), g.D);
    if (k == 1) {
      cap_tensor = detail::insertion_tensor(ins->op, g.D, {detail::wire(ins->site, n)});
    } else if (k == 2) {
      const int a = n % 2 == 1 ? 0 : 1;
      cap_tensor = detail::insertion_tensor(ins->op, g.D, {detail::wire(a, n), detail::wire(a + 1, n)});
    } else {
      throw std::invalid_argument("transfer_matrix: insertion wider than two sites");
    }
  }
  LTensor net = detail::column_network(m, g, n, cap_tensor);
  std::vector<int> order = detail::left_legs(n);
  const auto r = detail::right_legs(n);
  order.insert(order.end(), r.begin(), r.end());
  net = permute(net, order);
  TransferMatrix out;
  out.layers = n;
  out.inserted = ins.has_value();
  out.E = Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(net.data.data(), side, side);
  return out;
}

/// Right fixed vector of E(t) built from the square and the neighbouring column's odd-layer
/// gates on (2c+2, 2c+3) with their right legs capped; legs follow the right boundary order.
inline CVector transfer_fixed_vector(const PurifiedMPS& m, const GateTensor& g, const FixedPoints& fp, double t) {
  const int n = layers_of(t);
  const CVector o = bullet(g.D);
  LTensor acc = vector_tensor(detail::kBondR, fp.right);
  for (int l = 1; l <= n; l += 2) {
    LTensor gate = folded_gate_tensor(g, {detail::wire(2, l), detail::wire(3, l), detail::wire(2, l - 1), detail::wire(3, l - 1)});
    gate = contract(gate, vector_tensor(detail::wire(3, l), o));
    gate = contract(gate, vector_tensor(detail::wire(3, l - 1), o));
    if (l == n) gate = contract(gate, vector_tensor(detail::wire(2, l), o));
    acc = contract(acc, gate);
  }
  const LTensor p = permute(acc, detail::right_legs(n));
  (void)m;
  return Eigen::Map<const CVector>(p.data.data(), static_cast<Eigen::Index>(p.data.size()));
}

// ----------------------------------------------------------------- solvability

struct SolvabilityReport {
  std::vector<std::pair<std::string, double>> residuals;
  double residual = 0;
  bool passed = false;
  double tol = kDefaultTol;
  bool algebraic_passed = false;  ///< two-point only
  double algebraic_residual = 0;
  bool verdicts_agree = true;
  bool mirrored_passed = false;  ///< one-point only: the mirror image of the condition
};

namespace detail {

inline constexpr int kLL = 3, kLR = 4, kTL = 10, kTR = 11, kBL = 12, kBR = 13;

inline LTensor bond_vec(int label, const CVector& v) { return vector_tensor(label, v); }

inline void add_residual(SolvabilityReport& r, const std::string& name, const LTensor& lhs, const LTensor& rhs) {
  const double v = max_diff(lhs, rhs);
  r.residuals.push_back({name, v});
  r.residual = std::max(r.residual, v);
}

/// Cell with one bond capped by v and the physical leg on the same side capped by a bullet:
/// open legs (other bond, other leg), compared against v (x) bullet.
inline std::pair<LTensor, LTensor> bullet_condition(const PurifiedMPS& m, const CVector& v, bool right) {
  const CVector o = bullet(m.d);
  LTensor c = cell_tensor(m, {kBondL, kBondR, kLL, kLR});
  c = contract(c, bond_vec(right ? kBondR : kBondL, v));
  c = contract(c, vector_tensor(right ? kLR : kLL, o));
  const std::vector<int> open = right ? std::vector<int>{kBondL, kLL} : std::vector<int>{kBondR, kLR};
  LTensor rhs = outer(bond_vec(open[0], v), vector_tensor(open[1], o));
  return {permute(c, open), permute(rhs, open)};
}

}  // namespace detail

/// Cell with the square on its right bond and a bullet on its right leg equals square (x)
/// bullet: the stronger condition that implies the one-point condition.
inline double bullet_condition_residual(const PurifiedMPS& m, const FixedPoints& fp, bool right = true) {
  const auto [l, r] = detail::bullet_condition(m, right ? fp.right : fp.left, right);
  return max_diff(l, r);
}

/// One-point condition (the residual and passed flag cover the depicted orientation): a first-layer gate takes the cell's left leg on its right input and
/// has its top right leg capped; with the square on the right bond and a bullet on the right
/// leg this equals the square times the same gate with both right legs capped.
inline SolvabilityReport check_1pt_solvable(const PurifiedMPS& mps, const GateTensor& g, double tol = 1e-10) {
  using namespace detail;
  const PurifiedMPS m = normalize(mps);
  const FixedPoints fp = fixed_points(m);
  const CVector o = bullet(g.D);
  LTensor lhs = cell_tensor(m, {kBondL, kBondR, kLL, kLR});
  lhs = contract(lhs, bond_vec(kBondR, fp.right));
  lhs = contract(lhs, vector_tensor(kLR, o));
  LTensor gate = contract(folded_gate_tensor(g, {kTL, kTR, kBL, kLL}), vector_tensor(kTR, o));
  lhs = permute(contract(lhs, gate), {kBondL, kBL, kTL});
  LTensor rg = folded_gate_tensor(g, {kTL, kTR, kBL, kBR});
  rg = contract(contract(rg, vector_tensor(kTR, o)), vector_tensor(kBR, o));
  const LTensor rhs = permute(outer(bond_vec(kBondL, fp.right), rg), {kBondL, kBL, kTL});
  SolvabilityReport rep;
  rep.tol = tol;
  add_residual(rep, "one-point", lhs, rhs);
  rep.passed = rep.residual <= tol;
  // mirror image: triangle on the left bond, bullet on the left leg, the right leg feeding
  // the left input of the next first-layer gate whose top left leg is capped.
  LTensor ml = cell_tensor(m, {kBondL, kBondR, kLL, kLR});
  ml = contract(ml, bond_vec(kBondL, fp.left));
  ml = contract(ml, vector_tensor(kLL, o));
  LTensor mg = contract(folded_gate_tensor(g, {kTL, kTR, kLR, kBR}), vector_tensor(kTL, o));
  ml = permute(contract(ml, mg), {kBondR, kBR, kTR});
  LTensor mr = folded_gate_tensor(g, {kTL, kTR, kBL, kBR});
  mr = contract(contract(mr, vector_tensor(kTL, o)), vector_tensor(kBL, o));
  const LTensor mrhs = permute(outer(bond_vec(kBondR, fp.left), mr), {kBondR, kBR, kTR});
  const double mres = max_diff(ml, mrhs);
  rep.residuals.push_back({"one-point mirrored", mres});
  rep.mirrored_passed = mres <= tol;
  return rep;
}

/// Algebraic two-point residuals for a right-canonical state:
/// sum K^dag K = I/d and sum (K^dag (x) I_d)(I_chi (x) (ũ^dag ũ)^T)(K (x) I_d) = I_{chi d^2}/d,
/// with ordering chi (x) d (x) d.
inline std::pair<double, double> k_algebraic_residuals(const PurifiedMPS& m, const GateTensor& g) {
  const auto K = k_operators(m);
  const int d = m.d, chi = m.chi;
  CMatrix s1 = CMatrix::Zero(d * chi, d * chi);
  for (const auto& k : K) s1 += k.adjoint() * k;
  const CMatrix ut = reshuffle_dual(g).u;
  const CMatrix mid = kron(identity(chi), CMatrix((ut.adjoint() * ut).transpose()));
  CMatrix s2 = CMatrix::Zero(d * d * chi, d * d * chi);
  for (const auto& k : K) s2 += kron(k.adjoint(), identity(d)) * mid * kron(k, identity(d));
  return {max_abs(s1 - identity(d * chi) / double(d)), max_abs(s2 - identity(d * d * chi) / double(d))};
}

/// The four two-point identities (first and second, from the right and from the left) as
/// explicit contractions, plus the algebraic K form. The state is right-canonicalized first.
inline SolvabilityReport check_2pt_solvable(const PurifiedMPS& mps, const GateTensor& g, double tol = 1e-10) {
  using namespace detail;
  const PurifiedMPS m = right_canonicalize(mps);
  const FixedPoints fp = fixed_points(m);
  const CVector o = bullet(g.D);
  SolvabilityReport rep;
  rep.tol = tol;
  {
    const auto [l, r] = bullet_condition(m, fp.right, true);
    add_residual(rep, "right first", l, r);
  }
  {
    LTensor c = contract(cell_tensor(m, {kBondL, kBondR, kLL, kLR}), bond_vec(kBondR, fp.right));
    LTensor gate = folded_gate_tensor(g, {kTL, kTR, kLR, kBR});
    gate = contract(contract(gate, vector_tensor(kTR, o)), vector_tensor(kBR, o));
    const std::vector<int> open{kBondL, kLL, kTL};
    const LTensor lhs = permute(contract(c, gate), open);
    const LTensor rhs = permute(outer(outer(bond_vec(kBondL, fp.right), vector_tensor(kLL, o)), vector_tensor(kTL, o)), open);
    add_residual(rep, "right second", lhs, rhs);
  }
  {
    const auto [l, r] = bullet_condition(m, fp.left, false);
    add_residual(rep, "left first", l, r);
  }
  {
    LTensor c = contract(cell_tensor(m, {kBondL, kBondR, kLL, kLR}), bond_vec(kBondL, fp.left));
    LTensor gate = folded_gate_tensor(g, {kTL, kTR, kBL, kLL});
    gate = contract(contract(gate, vector_tensor(kTL, o)), vector_tensor(kBL, o));
    const std::vector<int> open{kBondR, kLR, kTR};
    const LTensor lhs = permute(contract(c, gate), open);
    const LTensor rhs = permute(outer(outer(bond_vec(kBondR, fp.left), vector_tensor(kLR, o)), vector_tensor(kTR, o)), open);
    add_residual(rep, "left second", lhs, rhs);
  }
  rep.passed = rep.residual <= tol;
  const auto [a1, a2] = k_algebraic_residuals(m, g);
  rep.algebraic_residual = std::max(a1, a2);
  // the algebraic form covers the right-hand pair only.
  const double right_diag = std::max(rep.residuals[0].second, rep.residuals[1].second);
  rep.algebraic_passed = rep.algebraic_residual <= tol;
  rep.verdicts_agree = rep.algebraic_passed == (right_diag <= tol);
  return rep;
}

// ----------------------------------------------------------------- quench correlators

/// <O(t)> for a two-site O on a cell (single-site operators are padded with the identity):
/// with rho the cell density and P = eps_L (x) eps_R the straddling first layer,
/// n = 0: Tr(O rho); n = 2m+1: Tr(O Q^m P rho); n = 2m >= 2: Tr(O w Q^{m-1} P rho).
inline cplx one_point_correlator(const PurifiedMPS& mps, const GateTensor& g, const CMatrix& O, double t,
                                 bool require_solvable = true) {
  if (require_solvable) {
    const auto rep = check_1pt_solvable(mps, g);
    // the bullets on the left edge of the reduced network need the mirrored condition too.
    if (!rep.passed || !rep.mirrored_passed)
      throw std::domain_error("one_point_correlator: state fails the one-point solvability condition");
    // the state conditions do not involve the bulk; the reduction to Q needs a level-2 gate.
    if (!check_l2(g).passed) throw std::domain_error("one_point_correlator: gate is not level 2");
  }
  const PurifiedMPS m = normalize(mps);
  const int n = layers_of(t);
  const CMatrix rho = cell_density(m, fixed_points(m));
  if (O.rows() != rho.rows()) throw std::invalid_argument("one_point_correlator: O must act on one cell");
  CVector x = vec_of(rho);
  if (n == 0) return trace_against(O, x);
  const auto ch = build_single_site_channels(g);
  const CMatrix P = product_superop(g.D, {ch.eps_L.m, ch.eps_R.m});
  const CMatrix Q = build_Q(g).m;
  x = P * x;
  if (n % 2 == 1) {
    x = apply_power(Q, x, (n - 1) / 2);
  } else {
    x = apply_power(Q, x, n / 2 - 1);
    x = fold(g).w * x;
  }
  return trace_against(O, x);
}

/// Two-site density on the left site of cell ca and the right site of cell cb >= ca.
inline CMatrix two_cell_density(const PurifiedMPS& m, const FixedPoints& fp, int ca, int cb) {
  const int d = m.d, c = m.chi;
  if (cb < ca) throw std::invalid_argument("two_cell_density: need cb >= ca");
  if (cb == ca) return cell_density(m, fp);
  const CMatrix E0 = transfer_E0(m);
  const CMatrix Lm = bond_matrix(fp.left, c), Rm = bond_matrix(fp.right, c);
  CMatrix rho = CMatrix::Zero(d * d, d * d);
  for (int j = 0; j < d; ++j)
    for (int jp = 0; jp < d; ++jp) {
      // cell B with its left leg traced, then E(0) for every cell in between.
      CMatrix XB = CMatrix::Zero(c, c);
      for (int g = 0; g < m.gdim; ++g)
        for (int k = 0; k < d; ++k) XB += m.a(k, j, g) * Rm * m.a(k, jp, g).adjoint();
      CVector xb = vec_of(XB);
      for (int k = 0; k < cb - ca - 1; ++k) xb = E0 * xb;
      const CMatrix X = bond_matrix(xb, c);
      for (int i = 0; i < d; ++i)
        for (int ip = 0; ip < d; ++ip) {
          cplx v = 0;
          for (int g = 0; g < m.gdim; ++g)
            for (int k = 0; k < d; ++k) v += (Lm.transpose() * m.a(i, k, g) * X * m.a(ip, k, g).adjoint()).trace();
          rho(i * d + j, ip * d + jp) = v;
        }
    }
  return rho;
}

/// <a_{sa} b_{sb}>(t) for single-site a, b after n = 2t layers in the solvable regime:
/// sa = p - n and sb = q + n with p = 2ca+1 the left site of cell ca and q = 2cb+2 the right
/// site of cell cb >= ca; then C = Tr[(a (x) b)(M_R^n (x) M_L^n) sigma_{pq}]. Closer pairs of
/// traceless operators give 0, and so does the other parity class, where the first
/// conditions leave a bullet against a traceless operator.
inline cplx two_point_quench_sites(const PurifiedMPS& mps, const GateTensor& g, const CMatrix& a, const CMatrix& b,
                                   int sa, int sb, int n, bool require_solvable = true) {
  if (require_solvable && !check_2pt_solvable(mps, g).passed)
    throw std::domain_error("two_point_quench: state fails the two-point solvability condition");
  if (a.rows() != g.D || b.rows() != g.D) throw std::invalid_argument("two_point_quench: single-site operators only");
  const PurifiedMPS m = right_canonicalize(mps);
  const int p = sa + n, q = sb - n;
  if (std::abs(a.trace()) > 1e-12 || std::abs(b.trace()) > 1e-12)
    throw std::invalid_argument("two_point_quench: operators must be traceless");
  if (q - p < 1 || mod(p, 2) != 1 || mod(q, 2) != 0) return 0.0;
  const CMatrix sigma = two_cell_density(m, fixed_points(m), (p - 1) / 2, (q - 2) / 2);
  const auto ch = build_single_site_channels(g);
  CMatrix MRn = identity(g.D * g.D), MLn = identity(g.D * g.D);
  for (int k = 0; k < n; ++k) {
    MRn = ch.M_R.m * MRn;
    MLn = ch.M_L.m * MLn;
  }
  const CVector x = product_superop(g.D, {MRn, MLn}) * vec_of(sigma);
  return trace_against(kron(a, b), x);
}

/// Cell-position form: a at i, b at j (site 2x), time t.
inline cplx two_point_quench(const PurifiedMPS& mps, const GateTensor& g, const Observable& a, const Observable& b,
                             double i, double j, double t, bool require_solvable = true) {
  return two_point_quench_sites(mps, g, a.op, b.op, sites_of(i), sites_of(j), layers_of(t), require_solvable);
}

// ----------------------------------------------------------------- ring construction

/// Density matrix of L cells on a ring of 2L sites, cell c on sites (2c+1, 2c+2 mod 2L),
/// normalized to trace 1.
inline CMatrix ring_density(const PurifiedMPS& m, int L, std::int64_t cap = kDefaultRingCap) {
  m.validate();
  const int n = 2 * L, d = m.d;
  const std::int64_t N = ipow(d, n);
  if (N * N > cap) throw std::length_error("ring_density: density exceeds the cap");
  CMatrix rho = CMatrix::Zero(N, N);
  const std::int64_t G = ipow(m.gdim, L);
  std::vector<int> dig(n);
  for (std::int64_t gs = 0; gs < G; ++gs) {
    std::vector<int> gam(L);
    for (int c = 0, r = static_cast<int>(gs); c < L; ++c, r /= m.gdim) gam[c] = r % m.gdim;
    CVector psi(N);
    for (std::int64_t idx = 0; idx < N; ++idx) {
      for (int s = 0; s < n; ++s) dig[s] = static_cast<int>((idx / ipow(d, n - 1 - s)) % d);
      CMatrix prod = identity(m.chi);
      for (int c = 0; c < L; ++c) prod = prod * m.a(dig[2 * c + 1], dig[mod(2 * c + 2, n)], gam[c]);
      psi(idx) = prod.trace();
    }
    rho += psi * psi.adjoint();
  }
  return rho / rho.trace();
}

inline RingOp ring_state(const RingSpec& ring, const CMatrix& rho) {
  ring.validate();
  RingOp x{ring, std::vector<cplx>(rho.size())};
  const std::int64_t N = ring.dim();
  for (std::int64_t r = 0; r < N; ++r)
    for (std::int64_t c = 0; c < N; ++c) x.x[r * N + c] = rho(r, c);
  return x;
}

/// Observable placed on consecutive ring sites starting at site.
struct PlacedOp {
  CMatrix op;
  int site = 0;
};

/// <prod ops>(n) = Tr(rho(n) prod ops)/Tr(rho(n)) for n = 0..n_max layers of dense evolution.
/// The operators must sit on disjoint sites.
inline std::vector<cplx> quench_exact(const RingSpec& ring, const GateTensor& g, const CMatrix& rho,
                                      const std::vector<PlacedOp>& ops, int n_max) {
  RingOp x = ring_state(ring, rho);
  std::vector<int> sites;
  CMatrix big = identity(1);
  for (const auto& o : ops) {
    const auto s = ring_sites(ring, o.site, site_count(o.op.rows(), g.D));
    sites.insert(sites.end(), s.begin(), s.end());
    big = kron(big, o.op);
  }
  std::vector<cplx> out;
  for (int n = 0; n <= n_max; ++n) {
    if (n > 0) apply_layer(x, g.u, n);
    const CMatrix red = reduce(x, sites);
    out.push_back((big * red).trace() / red.trace());
  }
  return out;
}

/// Same series from the purified state vector: one ring state per purification string,
/// d^{2L} amplitudes each, so rings of up to about 8 qubit cells stay cheap.
inline std::vector<cplx> quench_exact_purified(const PurifiedMPS& m, const GateTensor& g, int L,
                                               const std::vector<PlacedOp>& ops, int n_max,
                                               std::int64_t cap = std::int64_t{1} << 24) {
  m.validate();
  const int n = 2 * L, d = m.d;
  const std::int64_t N = ipow(d, n), G = ipow(m.gdim, L);
  if (N * G > cap) throw std::length_error("quench_exact_purified: state exceeds the cap");
  std::vector<std::vector<cplx>> cols(G, std::vector<cplx>(N));
  std::vector<int> dig(n);
  for (std::int64_t gs = 0; gs < G; ++gs) {
    std::vector<int> gam(L);
    for (int c = 0, r = static_cast<int>(gs); c < L; ++c, r /= m.gdim) gam[c] = r % m.gdim;
    for (std::int64_t idx = 0; idx < N; ++idx) {
      for (int s = 0; s < n; ++s) dig[s] = static_cast<int>((idx / ipow(d, n - 1 - s)) % d);
      CMatrix prod = identity(m.chi);
      for (int c = 0; c < L; ++c) prod = prod * m.a(dig[2 * c + 1], dig[mod(2 * c + 2, n)], gam[c]);
      cols[gs][idx] = prod.trace();
    }
  }
  std::vector<cplx> out;
  for (int l = 0; l <= n_max; ++l) {
    if (l > 0)
      for (auto& psi : cols) {
        const int shift = l % 2 == 1 ? 0 : 1;
        for (int c = 0; c < L; ++c) apply_two_site(psi, d, n, mod(2 * c + shift, n), mod(2 * c + shift + 1, n), g.u);
      }
    cplx num = 0, den = 0;
    for (const auto& psi : cols) {
      std::vector<cplx> phi = psi;
      for (const auto& o : ops) {
        const int k = site_count(o.op.rows(), d);
        if (k == 1)
          apply_one_site(phi, d, n, mod(o.site, n), o.op);
        else if (k == 2)
          apply_two_site(phi, d, n, mod(o.site, n), mod(o.site + 1, n), o.op);
        else
          throw std::invalid_argument("quench_exact_purified: operators on one or two sites");
      }
      for (std::int64_t i = 0; i < N; ++i) {
        num += std::conj(psi[i]) * phi[i];
        den += std::norm(psi[i]);
      }
    }
    out.push_back(num / den);
  }
  return out;
}

// ----------------------------------------------------------------- light-cone reference

/// Infinite-chain <O(t)> for any normalized state: the cells covering the backward cone of
/// O are cut out with the triangle and square, and only gates inside them are applied.
inline cplx one_point_lightcone(const PurifiedMPS& mps, const GateTensor& g, const CMatrix& O, int site, int n,
                                std::int64_t cap = kDefaultRingCap) {
  const PurifiedMPS m = normalize(mps);
  const FixedPoints fp = fixed_points(m);
  const int d = m.d, k = site_count(O.rows(), d);
  const auto [lo, hi] = cone(site, site + k - 1, 1, n);
  // site s belongs to cell floor((s - 1) / 2).
  const int c_lo = (lo - 1 - mod(lo - 1, 2)) / 2, c_hi = (hi - 1 - mod(hi - 1, 2)) / 2;
  const int cells = c_hi - c_lo + 1, w = 2 * cells, first = 2 * c_lo + 1;
  const std::int64_t N = ipow(d, w);
  if (N * N > cap) throw std::length_error("one_point_lightcone: window exceeds the cap");
  // window density: triangle^T (A...A) square, summed over purifications per cell.
  CMatrix rho = CMatrix::Zero(N, N);
  const CMatrix Lm = bond_matrix(fp.left, m.chi), Rm = bond_matrix(fp.right, m.chi);
  const std::int64_t G = ipow(m.gdim, cells);
  for (std::int64_t gs = 0; gs < G; ++gs) {
    std::vector<int> gam(cells);
    for (int c = 0, r = static_cast<int>(gs); c < cells; ++c, r /= m.gdim) gam[c] = r % m.gdim;
    std::vector<CMatrix> P(N);
    for (std::int64_t idx = 0; idx < N; ++idx) {
      CMatrix prod = identity(m.chi);
      for (int c = 0; c < cells; ++c) {
        const int i = static_cast<int>((idx / ipow(d, w - 1 - 2 * c)) % d);
        const int j = static_cast<int>((idx / ipow(d, w - 2 - 2 * c)) % d);
        prod = prod * m.a(i, j, gam[c]);
      }
      P[idx] = prod;
    }
    for (std::int64_t r = 0; r < N; ++r) {
      const CMatrix left = Lm.transpose() * P[r] * Rm;
      for (std::int64_t c = 0; c < N; ++c) rho(r, c) += (left * P[c].adjoint()).trace();
    }
  }
  std::vector<cplx> x(static_cast<std::size_t>(N * N));
  for (std::int64_t r = 0; r < N; ++r)
    for (std::int64_t c = 0; c < N; ++c) x[r * N + c] = rho(r, c);
  for (int l = 1; l <= n; ++l) {
    const int shift = l % 2 == 1 ? 0 : 1;
    for (int s = first; s + 1 < first + w; ++s)
      if (mod(s, 2) == mod(shift, 2)) {
        apply_two_site(x, d, 2 * w, s - first, s - first + 1, g.u);
        apply_two_site(x, d, 2 * w, w + s - first, w + s - first + 1, g.u.conjugate());
      }
  }
  RingOp tmp{RingSpec{d, cells, std::numeric_limits<std::int64_t>::max()}, std::move(x)};
  std::vector<int> sites;
  for (int s = 0; s < k; ++s) sites.push_back(site + s - first);
  const CMatrix red = reduce(tmp, sites);
  return (O * red).trace() / red.trace();
}

// ----------------------------------------------------------------- files

/// Text format: "d chi gdim" then one "iL iR g row col re im" line per entry; '#' starts a
/// comment, missing entries are zero.
inline PurifiedMPS read_mps(std::istream& in) {
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    const auto h = line.find('#');
    if (h != std::string::npos) line.erase(h);
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  }
  if (lines.empty()) throw std::invalid_argument("mps file: empty");
  std::istringstream head(lines[0]);
  int d = 0, chi = 0, gdim = 0;
  if (!(head >> d >> chi >> gdim)) throw std::invalid_argument("mps file: bad header");
  PurifiedMPS m = zero_mps(d, chi, gdim);
  m.validate();
  for (std::size_t k = 1; k < lines.size(); ++k) {
    std::istringstream ls(lines[k]);
    int iL, iR, g, r, c;
    double re, im;
    if (!(ls >> iL >> iR >> g >> r >> c >> re >> im)) throw std::invalid_argument("mps file: bad entry line");
    if (iL < 0 || iL >= d || iR < 0 || iR >= d || g < 0 || g >= gdim || r < 0 || r >= chi || c < 0 || c >= chi)
      throw std::invalid_argument("mps file: index out of range");
    m.a(iL, iR, g)(r, c) = cplx(re, im);
  }
  return m;
}

inline PurifiedMPS read_mps_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return read_mps(f);
}

inline void write_mps(std::ostream& out, const PurifiedMPS& m) {
  out << m.d << ' ' << m.chi << ' ' << m.gdim << '\n';
  out.precision(17);
  for (int iL = 0; iL < m.d; ++iL)
    for (int iR = 0; iR < m.d; ++iR)
      for (int g = 0; g < m.gdim; ++g)
        for (int r = 0; r < m.chi; ++r)
          for (int c = 0; c < m.chi; ++c) {
            const cplx v = m.a(iL, iR, g)(r, c);
            if (v != 0.0) out << iL << ' ' << iR << ' ' << g << ' ' << r << ' ' << c << ' ' << v.real() << ' ' << v.imag() << '\n';
          }
}

/// Time series rows t = n/2 as (t_num, t_den, re, im) with t_den = 2.
inline void write_time_series(std::ostream& out, const std::vector<cplx>& values) {
  out << "t_num,t_den,re,im\n";
  out.precision(17);
  for (std::size_t n = 0; n < values.size(); ++n)
    out << n << ",2," << values[n].real() << ',' << values[n].imag() << '\n';
}

}  // namespace hier
