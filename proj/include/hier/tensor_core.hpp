#pragma once

// Dense complex linear algebra shared by every module.
//
// Conventions (fixed globally, never redefined elsewhere):
//  * matrices are row-major;
//  * a k-site basis index is i_0 D^{k-1} + ... + i_{k-1}, site 0 most significant;
//  * u[(k D + l), (i D + j)] = <kl|u|ij>, i and k on the left site;
//  * vec(|m><n|) = |m> (x) |n>, i.e. vec(m)[r N + c] = m(r, c);
//  * the folded gate is w = u (x) conj(u), so w vec(rho) = vec(u rho u^dagger).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace hier {

using cplx = std::complex<double>;
using CMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CVector = Eigen::Matrix<cplx, Eigen::Dynamic, 1>;
using Rng = std::mt19937_64;

inline constexpr double kDefaultTol = 1e-10;
inline constexpr double kPi = 3.14159265358979323846;
inline const cplx kI{0.0, 1.0};

/// Integer power for small dimensions.
inline std::int64_t ipow(std::int64_t b, int e) {
  std::int64_t r = 1;
  for (int k = 0; k < e; ++k) r *= b;
  return r;
}

inline int mod(int a, int n) { return ((a % n) + n) % n; }

inline double max_abs(const CMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline CMatrix identity(std::int64_t n) { return CMatrix::Identity(n, n); }

/// Two-site gate u of size D^2 x D^2. Unitarity is checked by callers that need it.
struct GateTensor {
  int D = 2;
  CMatrix u;
};

/// Folded gate w = u (x) conj(u) of size D^4 x D^4.
struct FoldedGate {
  int D = 2;
  CMatrix w;
};

/// Vectorized k-site operator, length D^{2k}.
struct VecOp {
  int D = 2;
  int k = 1;
  CVector v;
};

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix r(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      r.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return r;
}

inline bool is_unitary(const CMatrix& m, double tol = kDefaultTol) {
  if (m.rows() != m.cols()) return false;
  const CMatrix id = identity(m.rows());
  return max_abs(m * m.adjoint() - id) <= tol && max_abs(m.adjoint() * m - id) <= tol;
}

inline bool is_hermitian(const CMatrix& m, double tol = kDefaultTol) {
  return m.rows() == m.cols() && max_abs(m - m.adjoint()) <= tol;
}

/// Number of sites k with D^k == n, or -1.
inline int site_count(std::int64_t n, int D) {
  int k = 0;
  std::int64_t p = 1;
  while (p < n) {
    p *= D;
    ++k;
  }
  return p == n ? k : -1;
}

inline VecOp vec(const CMatrix& m, int D) {
  if (m.rows() != m.cols()) throw std::invalid_argument("vec: matrix must be square");
  const int k = site_count(m.rows(), D);
  if (k < 0) throw std::invalid_argument("vec: size is not a power of D");
  VecOp r{D, k, CVector(m.size())};
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.v(i * m.cols() + j) = m(i, j);
  return r;
}

inline CMatrix unvec(const VecOp& x) {
  const std::int64_t n = ipow(x.D, x.k);
  if (x.v.size() != n * n) throw std::invalid_argument("unvec: length mismatch");
  CMatrix m(n, n);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) m(i, j) = x.v(i * n + j);
  return m;
}

/// ũ[(j D + l), (i D + k)] = u[(k D + l), (i D + j)].
inline GateTensor reshuffle_dual(const GateTensor& g) {
  const int D = g.D;
  GateTensor r{D, CMatrix(D * D, D * D)};
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j)
      for (int k = 0; k < D; ++k)
        for (int l = 0; l < D; ++l) r.u(j * D + l, i * D + k) = g.u(k * D + l, i * D + j);
  return r;
}

inline FoldedGate fold(const GateTensor& g) { return {g.D, kron(g.u, g.u.conjugate())}; }

/// Reduced operator on the sites in keep (ascending), Tr over the rest, unnormalized.
inline CMatrix partial_trace(const CMatrix& m, int D, const std::vector<int>& keep) {
  const int n = site_count(m.rows(), D);
  if (n < 0 || m.rows() != m.cols()) throw std::invalid_argument("partial_trace: bad shape");
  std::vector<int> ks = keep;
  std::sort(ks.begin(), ks.end());
  std::vector<int> rest;
  for (int s = 0; s < n; ++s)
    if (!std::binary_search(ks.begin(), ks.end(), s)) rest.push_back(s);
  const std::int64_t nk = ipow(D, static_cast<int>(ks.size()));
  const std::int64_t nr = ipow(D, static_cast<int>(rest.size()));
  auto compose = [&](std::int64_t a, std::int64_t b) {
    // a indexes kept sites, b indexes traced sites; returns the full index.
    std::int64_t idx = 0;
    std::vector<int> dig(n);
    for (int p = static_cast<int>(ks.size()) - 1; p >= 0; --p) {
      dig[ks[p]] = static_cast<int>(a % D);
      a /= D;
    }
    for (int p = static_cast<int>(rest.size()) - 1; p >= 0; --p) {
      dig[rest[p]] = static_cast<int>(b % D);
      b /= D;
    }
    for (int s = 0; s < n; ++s) idx = idx * D + dig[s];
    return idx;
  };
  CMatrix r = CMatrix::Zero(nk, nk);
  for (std::int64_t a = 0; a < nk; ++a)
    for (std::int64_t b = 0; b < nk; ++b) {
      cplx s = 0;
      for (std::int64_t c = 0; c < nr; ++c) s += m(compose(a, c), compose(b, c));
      r(a, b) = s;
    }
  return r;
}

inline CMatrix hs_normalize(const CMatrix& m) {
  const double n = std::sqrt(std::real((m.adjoint() * m).trace()));
  if (n == 0.0) throw std::invalid_argument("hs_normalize: zero matrix");
  return m / n;
}

/// Eigenvalues sorted by modulus descending, ties broken by argument.
inline std::vector<cplx> spectrum(const CMatrix& m, std::int64_t cap = 4096) {
  if (m.rows() != m.cols()) throw std::invalid_argument("spectrum: non-square input");
  if (m.rows() > cap) throw std::length_error("spectrum: matrix exceeds size cap");
  Eigen::MatrixXcd a = m;
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(a, false);
  if (es.info() != Eigen::Success) throw std::runtime_error("spectrum: eigensolver failed");
  std::vector<cplx> ev(es.eigenvalues().data(), es.eigenvalues().data() + a.rows());
  std::sort(ev.begin(), ev.end(), [](cplx x, cplx y) {
    const double ax = std::abs(x), ay = std::abs(y);
    if (std::abs(ax - ay) > 1e-12) return ax > ay;
    return std::arg(x) < std::arg(y);
  });
  return ev;
}

inline CMatrix gaussian_matrix(std::int64_t r, std::int64_t c, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  CMatrix m(r, c);
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) m(i, j) = cplx(nd(rng), nd(rng));
  return m;
}

/// Haar-random unitary from the QR decomposition of a complex Gaussian matrix.
inline CMatrix haar_unitary(std::int64_t n, Rng& rng) {
  const Eigen::MatrixXcd z = gaussian_matrix(n, n, rng);
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(z);
  Eigen::MatrixXcd q = qr.householderQ();
  const Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::int64_t j = 0; j < n; ++j) {
    const cplx d = r(j, j);
    q.col(j) *= d / std::abs(d);
  }
  return q;
}

/// Traceless Hermitian operator with Tr(a^dagger a) = 1.
inline CMatrix random_observable(std::int64_t n, Rng& rng) {
  const CMatrix g = gaussian_matrix(n, n, rng);
  CMatrix h = (g + g.adjoint()) / 2.0;
  h -= (h.trace() / static_cast<double>(n)) * identity(n);
  return hs_normalize(h);
}

/// Applies a D^2 x D^2 matrix to sites (a, b) of an nq-site state; a is the gate's left site.
inline void apply_two_site(std::vector<cplx>& psi, int D, int nq, int a, int b, const CMatrix& g) {
  const std::int64_t sa = ipow(D, nq - 1 - a), sb = ipow(D, nq - 1 - b);
  const std::int64_t total = static_cast<std::int64_t>(psi.size());
  const int d2 = D * D;
  std::vector<cplx> in(d2), out(d2);
  for (std::int64_t base = 0; base < total; ++base) {
    if ((base / sa) % D != 0 || (base / sb) % D != 0) continue;
    for (int x = 0; x < D; ++x)
      for (int y = 0; y < D; ++y) in[x * D + y] = psi[base + x * sa + y * sb];
    for (int r = 0; r < d2; ++r) {
      cplx s = 0;
      for (int c = 0; c < d2; ++c) s += g(r, c) * in[c];
      out[r] = s;
    }
    for (int x = 0; x < D; ++x)
      for (int y = 0; y < D; ++y) psi[base + x * sa + y * sb] = out[x * D + y];
  }
}

/// Applies a D x D matrix to site a of an nq-site state.
inline void apply_one_site(std::vector<cplx>& psi, int D, int nq, int a, const CMatrix& g) {
  const std::int64_t sa = ipow(D, nq - 1 - a);
  const std::int64_t total = static_cast<std::int64_t>(psi.size());
  std::vector<cplx> in(D);
  for (std::int64_t base = 0; base < total; ++base) {
    if ((base / sa) % D != 0) continue;
    for (int x = 0; x < D; ++x) in[x] = psi[base + x * sa];
    for (int r = 0; r < D; ++r) {
      cplx s = 0;
      for (int c = 0; c < D; ++c) s += g(r, c) * in[c];
      psi[base + r * sa] = s;
    }
  }
}

/// Superoperator of a linear map on n x n matrices, built from its action on matrix units.
template <class Map>
CMatrix superoperator(std::int64_t n, Map&& f) {
  CMatrix s(n * n, n * n);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; ++c) {
      CMatrix e = CMatrix::Zero(n, n);
      e(r, c) = 1.0;
      const CMatrix out = f(e);
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) s(i * n + j, r * n + c) = out(i, j);
    }
  return s;
}

}  // namespace hier
