#include "hier/oracle.hpp"

#include <gtest/gtest.h>

using namespace hier;

namespace {

// ---- independent oracles ----

// (1/D) Tr_s[u X u^dag] by explicit index sums; s = 0 traces the left site.
CMatrix side_trace_loop(const CMatrix& x, int D, int traced) {
  CMatrix r = CMatrix::Zero(D, D);
  for (int a = 0; a < D; ++a)
    for (int b = 0; b < D; ++b)
      for (int c = 0; c < D; ++c)
        r(a, b) += traced == 0 ? x(c * D + a, c * D + b) : x(a * D + c, b * D + c);
  return r / double(D);
}

// Q(b) = (1/D^2) Tr_{0,3}[(u (x) u)(I (x) u b u^dag (x) I)(u (x) u)^dag] on four explicit sites.
CMatrix q_oracle(const GateTensor& g, const CMatrix& b) {
  const int D = g.D;
  const CMatrix mid = kron(kron(identity(D), g.u * b * g.u.adjoint()), identity(D));
  const CMatrix outer = kron(g.u, g.u);
  return partial_trace(outer * mid * outer.adjoint(), D, {1, 2}) / double(D * D);
}

CMatrix apply_channel(const Channel& ch, const CMatrix& b) {
  return unvec({ch.D, ch.k, ch.m * vec(b, ch.D).v});
}

std::vector<GateTensor> l2_gates() {
  return {build_named("cnot"), build_qubit_gate(qubit_l2_params(1.0, 0.3, 1.2, -0.7)),
          build_qubit_gate(reference_params(ReferenceSet::Left))};
}

CMatrix matrix_unit(int n, int r, int c) {
  CMatrix e = CMatrix::Zero(n, n);
  e(r, c) = 1.0;
  return e;
}

}  // namespace

TEST(ChannelsOracle, SingleSiteChannelsMatchLoops) {
  Rng rng(1);
  for (int D : {2, 3}) {
    const GateTensor g{D, haar_unitary(D * D, rng)};
    const auto ch = build_single_site_channels(g);
    const CMatrix b = gaussian_matrix(D, D, rng), id = identity(D);
    auto sand = [&](const CMatrix& x) { return CMatrix(g.u * x * g.u.adjoint()); };
    EXPECT_LT(max_abs(apply_channel(ch.eps_L, b) - side_trace_loop(sand(kron(id, b)), D, 0)), 1e-12);
    EXPECT_LT(max_abs(apply_channel(ch.eps_R, b) - side_trace_loop(sand(kron(b, id)), D, 1)), 1e-12);
    EXPECT_LT(max_abs(apply_channel(ch.M_L, b) - side_trace_loop(sand(kron(b, id)), D, 0)), 1e-12);
    EXPECT_LT(max_abs(apply_channel(ch.M_R, b) - side_trace_loop(sand(kron(id, b)), D, 1)), 1e-12);
  }
}

TEST(ChannelsOracle, QMatchesFourSiteEvolution) {
  Rng rng(2);
  for (int D : {2, 3}) {
    const GateTensor g{D, haar_unitary(D * D, rng)};
    const Channel q = build_Q(g);
    for (int k = 0; k < 3; ++k) {
      const CMatrix b = gaussian_matrix(D * D, D * D, rng);
      EXPECT_LT(max_abs(apply_channel(q, b) - q_oracle(g, b)), 1e-12);
    }
  }
}

TEST(Channels, UnitalAndTracePreserving) {
  Rng rng(3);
  for (int D : {2, 3})
    for (int k = 0; k < 50; ++k) {
      const GateTensor g{D, haar_unitary(D * D, rng)};
      const auto ch = build_single_site_channels(g);
      for (const Channel* c : {&ch.eps_L, &ch.eps_R, &ch.M_L, &ch.M_R}) {
        EXPECT_TRUE(is_unital(*c));
        EXPECT_TRUE(is_trace_preserving(*c));
      }
      if (k < 10) {
        const Channel q = build_Q(g);
        EXPECT_TRUE(is_unital(q));
        EXPECT_TRUE(is_trace_preserving(q));
      }
      if (D == 2 && k < 5) {
        const Channel r = build_R(g);
        EXPECT_TRUE(is_unital(r));
        EXPECT_TRUE(is_trace_preserving(r));
      }
    }
}

TEST(Channels, SpectraContainOneAndStayInTheDisk) {
  Rng rng(4);
  for (int k = 0; k < 5; ++k) {
    const GateTensor g{2, haar_unitary(4, rng)};
    for (const Channel& c : {build_Q(g), build_R(g), build_single_site_channels(g).M_L}) {
      const auto ev = spectrum(c.m, 1 << 13);
      EXPECT_LT(std::abs(ev.front() - 1.0), 1e-8);
      for (cplx z : ev) EXPECT_LE(std::abs(z), 1 + 1e-8);
    }
  }
}

TEST(ChannelsExamples, QubitLevelTwoRayChannelsDepolarize) {
  // the light-ray channels depolarize, and so does the time-axis composite.
  for (const auto& g : l2_gates()) {
    const auto ch = build_single_site_channels(g);
    for (int a = 1; a < 4; ++a) {
      EXPECT_LT(max_abs(apply_channel(ch.M_L, pauli(a))), 1e-12);
      EXPECT_LT(max_abs(apply_channel(ch.M_R, pauli(a))), 1e-12);
      EXPECT_LT(max_abs(apply_channel(ch.eps_L, apply_channel(ch.eps_R, pauli(a)))), 1e-12);
      EXPECT_LT(max_abs(apply_channel(ch.eps_R, apply_channel(ch.eps_L, pauli(a)))), 1e-12);
    }
    const CMatrix one = apply_channel(ch.M_L, identity(2));
    EXPECT_LT(max_abs(one - identity(2)), 1e-12);
  }
  // the single epsilons alone are not depolarizing: cnot keeps X on the target.
  const auto c = build_single_site_channels(build_named("cnot"));
  EXPECT_LT(max_abs(apply_channel(c.eps_L, pauli(1)) - pauli(1)), 1e-12);
}

TEST(ChannelsExamples, QubitQSpectrumClosedForm) {
  Rng rng(5);
  std::uniform_real_distribution<double> r(kPi / 4, 3 * kPi / 4), ph(0, 2 * kPi);
  for (int k = 0; k < 10; ++k) {
    const double r1 = r(rng), r2 = r(rng), p1 = ph(rng), p2 = ph(rng);
    const auto ev = spectrum(build_Q(build_qubit_gate(qubit_l2_params(r1, p1, r2, p2))).m);
    std::vector<cplx> nz;
    for (cplx z : ev)
      if (std::abs(z) > 1e-6) nz.push_back(z);
    ASSERT_EQ(nz.size(), 2u);
    const double lam = qubit_lambda_closed_form(r1, r2, p1, p2);
    const cplx other = std::abs(nz[0] - 1.0) < 1e-8 ? nz[1] : nz[0];
    EXPECT_LT(std::abs(other - lam), 1e-8);
  }
  EXPECT_NEAR(qubit_lambda_closed_form(1.0, kPi - 1.0, 0.4, 0.4), 1.0, 1e-12);
  EXPECT_NEAR(qubit_lambda_closed_form(kPi / 2, kPi / 4, kPi / 2, 0), -1.0, 1e-12);
  EXPECT_THROW(qubit_lambda_closed_form(0.1, 1.0, 0, 0), std::domain_error);
}

TEST(ChannelsExamples, Ergodicity) {
  // swap permutes operators, but carries them out of the two-site window Q retains.
  const GateTensor swap = build_named("swap");
  EXPECT_FALSE(ergodicity(Channel{2, 2, fold(swap).w}).ergodic);
  const Ergodicity qs = ergodicity(build_Q(swap));
  EXPECT_TRUE(qs.ergodic);
  EXPECT_LT(std::abs(qs.lambda), 1e-12);
  const Ergodicity m1 = ergodicity(build_Q(build_qubit_gate(qubit_l2_params(kPi / 2, kPi / 2, kPi / 4, 0))));
  EXPECT_FALSE(m1.ergodic);
  EXPECT_NEAR(m1.lambda.real(), -1.0, 1e-8);
  EXPECT_TRUE(ergodicity(build_Q(build_qubit_gate(reference_params(ReferenceSet::Left)))).ergodic);
  const Ergodicity r = ergodicity(build_R(build_qubit_gate(reference_params(ReferenceSet::Left))));
  EXPECT_TRUE(r.ergodic);
  EXPECT_LT(std::abs(r.lambda), 1.0);
}

TEST(ChannelsExamples, InnerLightconeVelocity) {
  EXPECT_EQ(inner_lightcone_velocity(2).num, 0);
  EXPECT_EQ(inner_lightcone_velocity(3).num, 1);
  EXPECT_EQ(inner_lightcone_velocity(3).den, 3);
  EXPECT_EQ(inner_lightcone_velocity(4).num, 1);
  EXPECT_EQ(inner_lightcone_velocity(4).den, 2);
  EXPECT_THROW(inner_lightcone_velocity(1), std::invalid_argument);
}

TEST(ChannelsOracle, LevelTwoCorrelatorMatchesRing) {
  Rng rng(6);
  const RingSpec ring{2, 4};
  for (const auto& g : l2_gates())
    for (double j : {0.0, 0.5}) {
      const Observable a = random_observable(2, 1, rng), b = random_observable(2, 1, rng);
      const RingGrid grid = correlator_grid_exact(ring, g, a, b, j, 6);
      int compared = 0;
      for (int n = 0; n <= 6; ++n)
        for (int s = 0; s < ring.sites(); ++s) {
          if (!grid.values[n][s]) continue;
          // nearest image of site s relative to b.
          int d = s - sites_of(j);
          if (d > ring.L) d -= ring.sites();
          if (d < -ring.L) d += ring.sites();
          const double i = j + d / 2.0;
          const cplx want = *grid.values[n][s];
          const cplx got = correlator_l2(g, a, b, i, j, n / 2.0);
          EXPECT_LT(std::abs(got - want), 1e-8) << i << ' ' << j << ' ' << n;
          if (got == 0.0) EXPECT_LT(std::abs(want), 1e-10);
          ++compared;
        }
      EXPECT_GT(compared, 30);
    }
}

TEST(Channels, LevelTwoCorrelatorShape) {
  Rng rng(7);
  const GateTensor g = build_qubit_gate(qubit_l2_params(1.0, 0.3, 1.2, -0.7));
  const Observable a = random_observable(2, 1, rng), b = random_observable(2, 1, rng);
  for (int n = 1; n <= 6; ++n)
    for (int d = -n + 1; d < n; ++d)
      if (d != 0) EXPECT_EQ(correlator_l2(g, a, b, d / 2.0, 0, n / 2.0), 0.0);
  EXPECT_LT(std::abs(correlator_l2(g, a, b, 0, 0, 1)), 1e-12);
  EXPECT_THROW(correlator_l2(build_named("cz"), a, b, 0, 0, 1), std::invalid_argument);
  EXPECT_THROW(correlator_l2(g, a, b, 0, 0, 0.3), std::invalid_argument);
}

TEST(ChannelsOracle, TwoSiteTimeAxisMatchesRing) {
  Rng rng(8);
  const RingSpec ring{2, 4};
  for (const auto& g : l2_gates()) {
    const Observable a = random_observable(2, 2, rng), b = random_observable(2, 2, rng);
    const auto series = correlator_2site_series(g, a, b, 6);
    for (int n = 0; n <= 6; ++n) {
      EXPECT_LT(std::abs(correlator_2site_time(g, a, b, n / 2.0) - correlator_exact(ring, g, a, b, 0, 0, n / 2.0)), 1e-8);
      EXPECT_LT(std::abs(series[n] - correlator_2site_time(g, a, b, n / 2.0)), 1e-12);
    }
    EXPECT_LT(std::abs(correlator_2site_time(g, a, b, 0) - (a.op * b.op).trace()), 1e-12);
  }
}

TEST(ChannelsOracle, ThreeSiteTimeAxisMatchesRing) {
  Rng rng(9);
  const RingSpec ring{2, 5};
  const GateTensor g = build_qubit_gate(reference_params(ReferenceSet::Left));
  const Observable a = random_observable(2, 3, rng), b = random_observable(2, 3, rng);
  for (int n = 0; n <= 4; ++n)
    EXPECT_LT(std::abs(correlator_3site_time(g, a, b, n / 2.0) - correlator_exact(ring, g, a, b, 0, 0, n / 2.0)), 1e-8) << n;
}

TEST(ChannelsExamples, SixDimensionalPlateau) {
  Rng rng(10);
  const GateTensor g = build_clifford_gate({6, theta_l2_families(6, L2Family::DpqHalf), {}, {}, {}, {}});
  const Observable a = random_observable(6, 2, rng);
  const auto c = correlator_2site_series(g, a, a, 20);
  EXPECT_GT(std::abs(c[2]), 1e-3);
  for (int n = 2; n <= 20; n += 2) EXPECT_NEAR(std::abs(c[n]), std::abs(c[2]), 1e-8) << n;
  EXPECT_LT(std::abs(c[7] - correlator_2site_time(g, a, a, 3.5)), 1e-12);
}

TEST(ChannelsExamples, SixDimensionalErgodicExampleDecays) {
  // v_i = sigma_x (x) kappa_i on C^2 (x) C^3; the traceless-sector spectral radius of Q is
  // estimated by power iteration and the correlator decays at that rate.
  Rng rng(11);
  const CMatrix k1 = haar_unitary(3, rng), k2 = haar_unitary(3, rng);
  const GateTensor g = build_clifford_gate({6, theta_l2_families(6, L2Family::DpqHalf), kron(pauli(1), k1), kron(pauli(1), k2), {}, {}});
  ASSERT_TRUE(check_l2(g).passed);
  const Channel q = build_Q(g);
  CVector x = vec(gaussian_matrix(36, 36, rng), 6).v;
  const CVector id = vec(identity(36), 6).v / 6.0;
  auto project = [&](CVector v) { return CVector(v - id.dot(v) * id); };
  x = project(x);
  for (int k = 0; k < 60; ++k) x = project(q.m * x) / x.norm();
  const double n0 = x.norm();
  CVector y = x;
  for (int k = 0; k < 20; ++k) y = project(q.m * y);
  const double radius = std::pow(y.norm() / n0, 1.0 / 20);
  EXPECT_LT(radius, 0.99);
  const Observable a = random_observable(6, 2, rng);
  const auto c = correlator_2site_series(g, a, a, 40, false);
  const double c10 = std::abs(c[20]), c20 = std::abs(c[40]);
  EXPECT_LT(c20, 2.0 * std::pow(radius, 20));
  EXPECT_LT(c10, 2.0 * std::pow(radius, 10));
}

TEST(ChannelsOracle, LevelThreeCorrelatorsStayInsideTheInnerCone) {
  Rng rng(12);
  QubitGateParams p;
  p.Jz = 0.37;
  p.v1 = LocalGate::from_matrix(std::cos(0.4) * pauli(1) + std::sin(0.4) * pauli(2));
  p.v2 = LocalGate::from_matrix(std::cos(1.9) * pauli(1) + std::sin(1.9) * pauli(2));
  const RingSpec ring{2, 4};
  for (const auto& g : {build_named("cz"), build_qubit_gate(p)}) {
    ASSERT_TRUE(check_l3(g).passed);
    for (double j : {0.0, 0.5}) {
      const Observable a = random_observable(2, 1, rng), b = random_observable(2, 1, rng);
      const RingGrid grid = correlator_grid_exact(ring, g, a, b, j, 6);
      for (int n = 0; n <= 6; ++n)
        for (int s = 0; s < ring.sites(); ++s) {
          if (!grid.values[n][s]) continue;
          int d = s - sites_of(j);
          if (d > ring.L) d -= ring.sites();
          if (d < -ring.L) d += ring.sites();
          const double x = std::abs(d / 2.0), t = n / 2.0;
          if (std::abs(x - t) < 1e-9 || x <= t / 3 + 1e-9) continue;
          EXPECT_LT(std::abs(*grid.values[n][s]), 1e-9);
        }
    }
  }
}

TEST(Channels, ObservableValidation) {
  EXPECT_THROW(make_observable(identity(2), 2), std::invalid_argument);
  EXPECT_THROW(make_observable(pauli(3), 2), std::invalid_argument);
  EXPECT_NO_THROW(make_observable(CMatrix(pauli(3) / std::sqrt(2.0)), 2));
  EXPECT_THROW(make_observable(CMatrix::Zero(3, 3), 2), std::invalid_argument);
  const GridCell c = make_cell(0, 0, 3, 1.0, "channel");
  EXPECT_EQ(c.t_num, 3);
  EXPECT_EQ(c.t_den, 2);
  const GridCell d = make_cell(0, 0, 4, 1.0, "channel");
  EXPECT_EQ(d.t_num, 2);
  EXPECT_EQ(d.t_den, 1);
  (void)matrix_unit;
}
