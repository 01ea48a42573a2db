#include "hier/tensor_core.hpp"

#include <gtest/gtest.h>

using namespace hier;

namespace {

// ---- independent oracles: explicit index loops ----

cplx gate_entry(const CMatrix& u, int D, int k, int l, int i, int j) { return u(k * D + l, i * D + j); }

// Tr over site 1 of a two-site operator by explicit summation.
CMatrix trace_right_oracle(const CMatrix& m, int D) {
  CMatrix r = CMatrix::Zero(D, D);
  for (int a = 0; a < D; ++a)
    for (int b = 0; b < D; ++b)
      for (int c = 0; c < D; ++c) r(a, b) += m(a * D + c, b * D + c);
  return r;
}

cplx kron3_entry(const CMatrix& a, const CMatrix& b, const CMatrix& c, int r, int s) {
  const int nb = static_cast<int>(b.rows()), nc = static_cast<int>(c.rows());
  return a(r / (nb * nc), s / (nb * nc)) * b((r / nc) % nb, (s / nc) % nb) * c(r % nc, s % nc);
}

}  // namespace

TEST(TensorCoreOracle, ReshuffleMatchesIndexDefinition) {
  Rng rng(1);
  for (int D : {2, 3}) {
    const CMatrix u = gaussian_matrix(D * D, D * D, rng);
    const GateTensor t = reshuffle_dual({D, u});
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j)
        for (int k = 0; k < D; ++k)
          for (int l = 0; l < D; ++l) EXPECT_EQ(gate_entry(t.u, D, j, l, i, k), gate_entry(u, D, k, l, i, j));
  }
}

TEST(TensorCoreOracle, PartialTraceMatchesLoop) {
  Rng rng(2);
  const CMatrix m = gaussian_matrix(9, 9, rng);
  EXPECT_LT(max_abs(partial_trace(m, 3, {0}) - trace_right_oracle(m, 3)), 1e-13);
}

TEST(TensorCoreOracle, KronAssociativityAgainstIndexFormula) {
  Rng rng(3);
  const CMatrix a = gaussian_matrix(2, 2, rng), b = gaussian_matrix(3, 3, rng), c = gaussian_matrix(2, 2, rng);
  const CMatrix left = kron(kron(a, b), c), right = kron(a, kron(b, c));
  for (int r = 0; r < 12; ++r)
    for (int s = 0; s < 12; ++s) {
      EXPECT_LT(std::abs(left(r, s) - kron3_entry(a, b, c, r, s)), 1e-14);
      EXPECT_LT(std::abs(right(r, s) - kron3_entry(a, b, c, r, s)), 1e-14);
    }
}

TEST(TensorCore, ReshuffleInvolution) {
  Rng rng(4);
  for (int D : {2, 3, 4}) {
    const GateTensor g{D, gaussian_matrix(D * D, D * D, rng)};
    EXPECT_EQ(max_abs(reshuffle_dual(reshuffle_dual(g)).u - g.u), 0.0);
  }
}

TEST(TensorCore, ReshuffleOfSwapAndIdentity) {
  CMatrix swap = CMatrix::Zero(4, 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) swap(j * 2 + i, i * 2 + j) = 1.0;
  EXPECT_EQ(max_abs(reshuffle_dual({2, swap}).u - swap), 0.0);
  CVector phi = CVector::Zero(4);
  phi(0) = phi(3) = 1.0 / std::sqrt(2.0);
  const CMatrix d = reshuffle_dual({2, identity(4)}).u;
  EXPECT_LT(max_abs(d - 2.0 * phi * phi.adjoint()), 1e-15);
}

TEST(TensorCore, FoldActsAsSandwich) {
  Rng rng(5);
  const CMatrix u = haar_unitary(4, rng);
  const CMatrix rho = gaussian_matrix(4, 4, rng);
  const FoldedGate f = fold({2, u});
  const CVector out = f.w * vec(rho, 2).v;
  EXPECT_LT(max_abs(unvec({2, 2, out}) - u * rho * u.adjoint()), 1e-12);
  EXPECT_LT(max_abs(fold({2, identity(4)}).w - identity(16)), 0.0 + 1e-300);
  const CVector id = vec(identity(4), 2).v;
  EXPECT_LT((f.w * id - id).norm(), 1e-12);
  // inner products of vectorized operators are preserved.
  const CMatrix a = gaussian_matrix(4, 4, rng);
  const CVector va = vec(a, 2).v, vr = vec(rho, 2).v;
  EXPECT_LT(std::abs((f.w * va).dot(f.w * vr) - va.dot(vr)), 1e-12);
}

TEST(TensorCore, VecConventions) {
  const VecOp v = vec(identity(3), 3);
  int ones = 0;
  for (int k = 0; k < v.v.size(); ++k) ones += v.v(k) == 1.0;
  EXPECT_EQ(ones, 3);
  const CMatrix sx = (CMatrix(2, 2) << 0, 1, 1, 0).finished();
  EXPECT_EQ(max_abs(unvec(vec(sx, 2)) - sx), 0.0);
  // vec(|m><n|) = |m> (x) |n>
  CMatrix e = CMatrix::Zero(2, 2);
  e(1, 0) = 1.0;
  EXPECT_EQ(vec(e, 2).v(1 * 2 + 0), 1.0);
  Rng rng(6);
  const CMatrix a = gaussian_matrix(4, 4, rng), b = gaussian_matrix(4, 4, rng);
  EXPECT_LT(std::abs(vec(a, 2).v.dot(vec(b, 2).v) - (a.adjoint() * b).trace()), 1e-12);
  EXPECT_THROW(vec(CMatrix::Zero(3, 3), 2), std::invalid_argument);
  EXPECT_THROW(unvec({2, 1, CVector::Zero(5)}), std::invalid_argument);
}

TEST(TensorCore, PartialTraceOfProduct) {
  Rng rng(7);
  const CMatrix a = gaussian_matrix(2, 2, rng), b = gaussian_matrix(3, 3, rng);
  // mixed dimensions are not supported, so use a (x) b on qubits and qutrits separately.
  const CMatrix c = gaussian_matrix(2, 2, rng);
  EXPECT_LT(max_abs(partial_trace(kron(a, c), 2, {0}) - c.trace() * a), 1e-13);
  EXPECT_LT(max_abs(partial_trace(kron(a, c), 2, {1}) - a.trace() * c), 1e-13);
  const CMatrix bb = kron(b, gaussian_matrix(3, 3, rng));
  EXPECT_EQ(partial_trace(bb, 3, {0, 1}).rows(), 9);
}

TEST(TensorCore, HsNormalize) {
  Rng rng(8);
  const CMatrix m = hs_normalize(gaussian_matrix(3, 3, rng));
  EXPECT_NEAR(std::real((m.adjoint() * m).trace()), 1.0, 1e-14);
  EXPECT_THROW(hs_normalize(CMatrix::Zero(2, 2)), std::invalid_argument);
}

TEST(TensorCore, SpectrumBasics) {
  for (cplx z : spectrum(identity(5))) EXPECT_LT(std::abs(z - 1.0), 1e-14);
  CMatrix d = CMatrix::Zero(2, 2);
  d(0, 0) = -1.0;
  d(1, 1) = 2.0;
  const auto ev = spectrum(d);
  EXPECT_LT(std::abs(ev[0] - 2.0), 1e-14);
  EXPECT_LT(std::abs(ev[1] + 1.0), 1e-14);
  EXPECT_THROW(spectrum(CMatrix::Zero(2, 3)), std::invalid_argument);
}

TEST(TensorCoreOracle, SpectrumTraceAndDeterminant) {
  Rng rng(9);
  const CMatrix m = gaussian_matrix(16, 16, rng);
  const auto ev = spectrum(m);
  cplx s = 0, p = 1;
  for (cplx z : ev) s += z, p *= z;
  const cplx tr = m.trace();
  const cplx det = Eigen::MatrixXcd(m).determinant();
  EXPECT_LT(std::abs(s - tr), 1e-8 * std::max(1.0, std::abs(tr)));
  EXPECT_LT(std::abs(p - det), 1e-8 * std::abs(det));
  for (std::size_t k = 1; k < ev.size(); ++k) EXPECT_GE(std::abs(ev[k - 1]) + 1e-12, std::abs(ev[k]));
  // deterministic for fixed input
  EXPECT_EQ(ev, spectrum(m));
}

TEST(TensorCore, RandomObjects) {
  Rng rng(10);
  EXPECT_TRUE(is_unitary(haar_unitary(9, rng), 1e-12));
  const CMatrix o = random_observable(4, rng);
  EXPECT_TRUE(is_hermitian(o, 1e-14));
  EXPECT_LT(std::abs(o.trace()), 1e-14);
  EXPECT_NEAR(std::real((o * o).trace()), 1.0, 1e-14);
}

TEST(TensorCoreOracle, StateGatesMatchDenseKron) {
  Rng rng(11);
  const int D = 2, n = 3;
  std::vector<cplx> psi(8);
  for (auto& z : psi) z = cplx(std::normal_distribution<double>()(rng), 0.3);
  const CMatrix g = haar_unitary(4, rng), h = haar_unitary(2, rng);
  CVector dense = Eigen::Map<CVector>(psi.data(), 8);
  // gate on sites (1, 2), then h on site 0
  dense = kron(identity(2), g) * dense;
  dense = kron(h, identity(4)) * dense;
  apply_two_site(psi, D, n, 1, 2, g);
  apply_one_site(psi, D, n, 0, h);
  for (int k = 0; k < 8; ++k) EXPECT_LT(std::abs(psi[k] - dense(k)), 1e-13);
  // reversed site order applies the gate with its legs swapped.
  std::vector<cplx> a(8, 0.0);
  a[1] = 1.0;
  std::vector<cplx> b = a;
  apply_two_site(a, D, n, 2, 1, g);
  CMatrix sw = CMatrix::Zero(4, 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) sw(j * 2 + i, i * 2 + j) = 1.0;
  apply_two_site(b, D, n, 1, 2, sw * g * sw);
  for (int k = 0; k < 8; ++k) EXPECT_LT(std::abs(a[k] - b[k]), 1e-13);
}

TEST(TensorCore, SiteCount) {
  EXPECT_EQ(site_count(8, 2), 3);
  EXPECT_EQ(site_count(9, 3), 2);
  EXPECT_EQ(site_count(6, 2), -1);
}
