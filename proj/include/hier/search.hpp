#pragma once

// Cost-function search for hierarchy gates and the v-constraints of Clifford families.
//
// The cost is the summed squared difference of the two sides of the level-k staircase
// identity, plus optional penalties. Minimization uses the GSL Nelder-Mead simplex with
// seeded restarts.

#include "hier/conditions.hpp"

#include <Eigen/Eigenvalues>

#include <gsl/gsl_multimin.h>

#include <chrono>
#include <functional>
#include <sstream>

namespace hier {

enum class SearchMode { QubitParams, CliffordTheta, RawUnitary };

inline const char* mode_name(SearchMode m) {
  return m == SearchMode::QubitParams ? "qubit-params" : m == SearchMode::CliffordTheta ? "clifford-theta" : "raw-unitary";
}

struct CostSpec {
  int level = 2;
  Side side = Side::Both;
  SearchMode mode = SearchMode::QubitParams;
  int D = 2;
  /// qubit mode: fixed (Jx, Jy, Jz); when absent the J's are free parameters.
  std::optional<std::array<double, 3>> fixed_J = std::array<double, 3>{0.0, 0.0, kPi / 4};
  /// qubit mode with free J: keep every J inside [margin, pi/2 - margin].
  bool nonvanishing_J = false;
  double j_margin = 0.1;
  /// penalize gates close to the dual-unitary manifold.
  bool exclude_du = false;
  /// raw mode: u = base exp(i H(x)); identity when absent.
  std::optional<CMatrix> base;
  /// clifford mode: single-site unitaries (theta comes from the parameters).
  std::optional<CMatrix> v1, v2;
};

// DU-exclusion penalty min(cap, max(0, 1/(eps + r) - 1/(eps + r0))) on the dual-unitarity
// residual r = |ũ^dag ũ - I|^2: zero away from the manifold, so solutions keep cost 0.
inline constexpr double kDuEps = 1e-3, kDuFar = 0.1, kDuCap = 10.0;

inline double du_distance(const GateTensor& g) {
  const CMatrix ut = reshuffle_dual(g).u;
  return (ut.adjoint() * ut - identity(ut.rows())).squaredNorm();
}

inline double du_penalty(const GateTensor& g) {
  const double r = du_distance(g);
  return std::min(kDuCap, std::max(0.0, 1.0 / (kDuEps + r) - 1.0 / (kDuEps + kDuFar)));
}

/// Summed squared residual of the level identity on the requested side(s).
inline double level_cost(const GateTensor& g, int level, Side side) {
  double c = 0;
  for (Side s : {Side::Left, Side::Right}) {
    if (side != Side::Both && side != s) continue;
    Identity id = staircase_right(level);
    if (s == Side::Left) id = id.mirrored();
    c += frob2_diff(evaluate(id.lhs, g), evaluate(id.rhs, g));
  }
  return c;
}

/// Cost of a concrete gate: level residual plus the DU penalty when requested.
inline double cost(const GateTensor& g, const CostSpec& spec) {
  double c = level_cost(g, spec.level, spec.side);
  if (spec.exclude_du) c += du_penalty(g);
  return c;
}

inline int parameter_count(const CostSpec& s) {
  switch (s.mode) {
    case SearchMode::QubitParams: return s.fixed_J ? 6 : 9;
    case SearchMode::CliffordTheta: return s.D * s.D - 1;
    default: return s.D * s.D * s.D * s.D;
  }
}

/// J inside [m, pi/2 - m] from an unconstrained coordinate.
inline double boxed_J(double x, double margin) { return margin + (kPi / 2 - 2 * margin) * (1 + std::sin(x)) / 2; }

/// Qubit parameters: (Jx, Jy, Jz) unless fixed, then (r, theta, phi) of v1 and v2; v3 = v4 = I.
inline QubitGateParams qubit_params_from(const CostSpec& s, const std::vector<double>& x) {
  QubitGateParams p;
  std::size_t k = 0;
  if (s.fixed_J) {
    p.Jx = (*s.fixed_J)[0];
    p.Jy = (*s.fixed_J)[1];
    p.Jz = (*s.fixed_J)[2];
  } else {
    double J[3];
    for (double& j : J) {
      j = s.nonvanishing_J ? boxed_J(x[k], s.j_margin) : x[k];
      ++k;
    }
    p.Jx = J[0];
    p.Jy = J[1];
    p.Jz = J[2];
  }
  p.v1 = LocalGate::from_angles(x[k], x[k + 1], x[k + 2]);
  p.v2 = LocalGate::from_angles(x[k + 3], x[k + 4], x[k + 5]);
  return p;
}

/// Hermitian D^2 x D^2 matrix from D^4 reals (diagonal, then real and imaginary parts above it).
inline CMatrix hermitian_from(const std::vector<double>& x, int n) {
  CMatrix h = CMatrix::Zero(n, n);
  std::size_t k = 0;
  for (int i = 0; i < n; ++i) h(i, i) = x[k++];
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      h(i, j) = cplx(x[k], x[k + 1]);
      h(j, i) = std::conj(h(i, j));
      k += 2;
    }
  return h;
}

inline CMatrix expi_hermitian(const CMatrix& h) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  const Eigen::VectorXcd ph = (kI * es.eigenvalues().cast<cplx>()).array().exp();
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

inline GateTensor gate_from_params(const CostSpec& s, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != parameter_count(s)) throw std::invalid_argument("search: wrong parameter count");
  switch (s.mode) {
    case SearchMode::QubitParams: return build_qubit_gate(qubit_params_from(s, x));
    case SearchMode::CliffordTheta: {
      ThetaTable t = theta_ones(s.D);
      for (int k = 1; k < s.D * s.D; ++k) t.entries[k] = std::exp(kI * x[k - 1]);
      CliffordFamilyParams p{s.D, t, s.v1, s.v2, {}, {}};
      return build_clifford_gate(p);
    }
    default: {
      const int n = s.D * s.D;
      const CMatrix b = s.base ? *s.base : identity(n);
      return {s.D, b * expi_hermitian(hermitian_from(x, n))};
    }
  }
}

inline double cost(const CostSpec& spec, const std::vector<double>& x) { return cost(gate_from_params(spec, x), spec); }

struct MinimizeOptions {
  std::uint64_t seed = 1;
  int restarts = 10;
  int budget = 4000;           ///< simplex iterations per restart
  double found_threshold = 1e-8;
  double step = 0.5;           ///< initial simplex size
  /// start point for every restart, perturbed by init_noise; uniform box starts when absent.
  std::optional<std::vector<double>> start;
  double init_noise = 0.0;
};

struct MinimizeResult {
  std::vector<double> x;
  double cost = std::numeric_limits<double>::infinity();
  bool found = false;
  std::vector<double> restart_costs;
  long evaluations = 0;
  double seconds = 0;
};

namespace detail {

struct GslObjective {
  std::function<double(const std::vector<double>&)> f;
  long evals = 0;
};

inline double gsl_trampoline(const gsl_vector* v, void* params) {
  auto* obj = static_cast<GslObjective*>(params);
  std::vector<double> x(v->size);
  for (std::size_t i = 0; i < v->size; ++i) x[i] = gsl_vector_get(v, i);
  ++obj->evals;
  const double c = obj->f(x);
  return std::isfinite(c) ? c : 1e300;
}

/// One Nelder-Mead run from x0; returns (x, f).
inline std::pair<std::vector<double>, double> nelder_mead(GslObjective& obj, const std::vector<double>& x0, double step,
                                                          int budget, double target) {
  const std::size_t n = x0.size();
  gsl_multimin_function fn{&gsl_trampoline, n, &obj};
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* ss = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) gsl_vector_set(x, i, x0[i]);
  gsl_vector_set_all(ss, step);
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_multimin_fminimizer_set(s, &fn, x, ss);
  for (int it = 0; it < budget; ++it) {
    if (gsl_multimin_fminimizer_iterate(s)) break;
    if (s->fval <= target * 1e-6) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-13) == GSL_SUCCESS) break;
  }
  std::vector<double> best(n);
  for (std::size_t i = 0; i < n; ++i) best[i] = gsl_vector_get(s->x, i);
  const double f = s->fval;
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(x);
  gsl_vector_free(ss);
  return {best, f};
}

}  // namespace detail

/// Seeded restarts of the simplex search; deterministic for fixed options.
inline MinimizeResult minimize(const CostSpec& spec, const MinimizeOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = parameter_count(spec);
  Rng rng(opt.seed);
  std::uniform_real_distribution<double> box(-kPi, kPi);
  std::normal_distribution<double> noise(0.0, 1.0);
  detail::GslObjective obj{[&](const std::vector<double>& x) { return cost(spec, x); }};
  MinimizeResult res;
  for (int r = 0; r < opt.restarts; ++r) {
    std::vector<double> x0(n);
    for (int i = 0; i < n; ++i)
      x0[i] = opt.start ? (*opt.start)[i] + opt.init_noise * noise(rng) : box(rng);
    // polish: restart the simplex from its own optimum a few times to escape collapse.
    auto [x, f] = detail::nelder_mead(obj, x0, opt.step, opt.budget, opt.found_threshold);
    for (int polish = 0; polish < 4 && f > opt.found_threshold * 1e-6; ++polish) {
      auto [x2, f2] = detail::nelder_mead(obj, x, opt.step * std::pow(0.1, polish + 1), opt.budget, opt.found_threshold);
      if (f2 >= f * (1 - 1e-3)) {
        if (f2 < f) std::tie(x, f) = std::pair{x2, f2};
        break;
      }
      std::tie(x, f) = std::pair{x2, f2};
    }
    res.restart_costs.push_back(f);
    if (f < res.cost) {
      res.cost = f;
      res.x = x;
    }
  }
  res.found = res.cost <= opt.found_threshold;
  res.evaluations = obj.evals;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

/// Structured text record of a search run.
inline std::string search_record(const CostSpec& spec, const MinimizeOptions& opt, const MinimizeResult& r) {
  std::ostringstream o;
  o.precision(17);
  o << "mode " << mode_name(spec.mode) << "\nlevel " << spec.level << "\nside " << side_name(spec.side) << "\nD "
    << spec.D << "\nexclude_du " << spec.exclude_du << "\nnonvanishing_J " << spec.nonvanishing_J << "\nseed "
    << opt.seed << "\nrestarts " << opt.restarts << "\nbudget " << opt.budget << "\nbest_cost " << r.cost
    << "\nfound " << r.found << "\nparams";
  for (double v : r.x) o << ' ' << v;
  o << "\nevaluations " << r.evaluations << "\nwall_seconds " << r.seconds << '\n';
  return o.str();
}

// ------------------------------------------------------------------ v-constraints

inline constexpr double kNonzeroThreshold = 1e-9;

/// For the first (sg = +1, v1) or second (sg = -1, v2) condition: the active shifts (k, l)
/// with nonvanishing autocorrelation, and the (r, m) whose overlap alpha_{r,m} with
/// v^* tau_{sg k, -l} v^T is forced to zero because some (s, t) != 0 phase sum survives.
struct VConstraintSet {
  int D = 2;
  int sg = 1;
  std::vector<std::pair<int, int>> active;
  std::vector<std::pair<int, int>> forced;
  bool empty() const { return active.empty() || forced.empty(); }
};

/// sum_d conj(theta_d) theta_{d + (s,t)} omega^{sg p_d m - q_d r}.
inline cplx phase_sum(const ThetaTable& th, int s, int t, int r, int m, int sg) {
  cplx acc = 0;
  for (int p = 0; p < th.D; ++p)
    for (int q = 0; q < th.D; ++q) acc += std::conj(th(p, q)) * th(p + s, q + t) * omega_pow(th.D, double(sg * p * m - q * r));
  return acc;
}

inline VConstraintSet derive_v_constraints(const ThetaTable& th, int sg = 1) {
  const int D = th.D;
  VConstraintSet cs{D, sg, {}, {}};
  for (int k = 0; k < D; ++k)
    for (int l = 0; l < D; ++l)
      if ((k || l) && std::abs(theta_autocorr(th, k, l)) > kNonzeroThreshold) cs.active.push_back({k, l});
  for (int r = 0; r < D; ++r)
    for (int m = 0; m < D; ++m) {
      bool hit = false;
      for (int s = 0; s < D && !hit; ++s)
        for (int t = 0; t < D && !hit; ++t)
          if ((s || t) && std::abs(phase_sum(th, s, t, r, m, sg)) > kNonzeroThreshold) hit = true;
      if (hit) cs.forced.push_back({r, m});
    }
  return cs;
}

/// alpha_{r,m} = Tr(tau_{r,m}^dag X)/D for X = v^* tau_{sg k, -l} v^T.
inline cplx v_overlap(const CMatrix& v, int D, int k, int l, int r, int m, int sg) {
  const CMatrix X = v.conjugate() * tau_pq(D, sg * k, -l) * v.transpose();
  return (tau_pq(D, r, m).adjoint() * X).trace() / double(D);
}

struct VCheckReport {
  double max_violation = 0;
  bool passed = false;
};

inline VCheckReport check_v(const CMatrix& v, const VConstraintSet& cs, double tol = 1e-10) {
  if (!is_unitary(v, 1e-10)) throw std::invalid_argument("check_v: v is not unitary");
  VCheckReport rep;
  for (auto [k, l] : cs.active)
    for (auto [r, m] : cs.forced) rep.max_violation = std::max(rep.max_violation, std::abs(v_overlap(v, cs.D, k, l, r, m, cs.sg)));
  rep.passed = rep.max_violation <= tol;
  return rep;
}

}  // namespace hier
