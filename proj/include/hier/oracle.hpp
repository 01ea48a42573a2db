#pragma once

// Brute-force ground truth. Operators on a periodic ring of 2L sites are stored as vectors
// of length D^{4L}: ket sites 0..2L-1 followed by bra sites 2L..4L-1, so a gate u acts as
// u on the ket pair and conj(u) on the bra pair. The light-cone contractor evolves
// operators on finite windows of the infinite chain instead.

#include "hier/channels.hpp"

#include <limits>
#include <optional>
#include <tuple>

namespace hier {

inline constexpr std::int64_t kDefaultRingCap = std::int64_t{1} << 22;

struct RingSpec {
  int D = 2;
  int L = 2;  ///< cells; the ring has 2L sites
  std::int64_t cap = kDefaultRingCap;

  int sites() const { return 2 * L; }
  std::int64_t dim() const { return ipow(D, 2 * L); }
  void validate() const {
    if (D < 2 || L < 1) throw std::invalid_argument("ring: need D >= 2 and L >= 1");
    if (ipow(D, 4 * L) > cap) throw std::length_error("ring: folded state exceeds the configured cap");
  }
};

/// Operator on the ring as a folded vector.
struct RingOp {
  RingSpec ring;
  std::vector<cplx> x;
};

namespace detail {

/// Offsets of all sub-indices on the given ordered sites inside a base-D index over n sites.
inline std::vector<std::int64_t> site_offsets(int D, int n, const std::vector<int>& sites) {
  const int k = static_cast<int>(sites.size());
  std::vector<std::int64_t> off(ipow(D, k), 0);
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(off.size()); ++r) {
    std::int64_t rem = r, o = 0;
    for (int p = k - 1; p >= 0; --p) {
      o += (rem % D) * ipow(D, n - 1 - sites[p]);
      rem /= D;
    }
    off[r] = o;
  }
  return off;
}

inline std::vector<int> complement(int n, const std::vector<int>& sites) {
  std::vector<int> rest;
  for (int s = 0; s < n; ++s)
    if (std::find(sites.begin(), sites.end(), s) == sites.end()) rest.push_back(s);
  return rest;
}

}  // namespace detail

/// Consecutive ring sites start, start+1, ... (mod 2L).
inline std::vector<int> ring_sites(const RingSpec& ring, int start, int k) {
  if (k > ring.sites()) throw std::invalid_argument("ring: operator wider than the ring");
  std::vector<int> s;
  for (int m = 0; m < k; ++m) s.push_back(mod(start + m, ring.sites()));
  return s;
}

/// op on the given sites tensored with the identity elsewhere.
inline RingOp embed(const RingSpec& ring, const CMatrix& op, const std::vector<int>& sites) {
  ring.validate();
  const int n = ring.sites();
  const std::int64_t N = ring.dim();
  const auto on = detail::site_offsets(ring.D, n, sites);
  const auto off = detail::site_offsets(ring.D, n, detail::complement(n, sites));
  RingOp r{ring, std::vector<cplx>(N * N, 0.0)};
  for (std::int64_t a = 0; a < op.rows(); ++a)
    for (std::int64_t b = 0; b < op.cols(); ++b) {
      const cplx v = op(a, b);
      if (v == 0.0) continue;
      for (std::int64_t q : off) r.x[(on[a] + q) * N + on[b] + q] = v;
    }
  return r;
}

/// Tr over all sites not listed, keeping the listed sites in the given order.
inline CMatrix reduce(const RingOp& op, const std::vector<int>& sites) {
  const int n = op.ring.sites();
  const std::int64_t N = op.ring.dim();
  const auto on = detail::site_offsets(op.ring.D, n, sites);
  const auto off = detail::site_offsets(op.ring.D, n, detail::complement(n, sites));
  const std::int64_t k = static_cast<std::int64_t>(on.size());
  CMatrix r = CMatrix::Zero(k, k);
  for (std::int64_t a = 0; a < k; ++a)
    for (std::int64_t b = 0; b < k; ++b) {
      cplx s = 0;
      for (std::int64_t q : off) s += op.x[(on[a] + q) * N + on[b] + q];
      r(a, b) = s;
    }
  return r;
}

/// Applies brickwork layer number layer (1-based; odd layers on (2c, 2c+1)). Forward maps
/// X -> u X u^dag; adjoint maps X -> u^dag X u.
inline void apply_layer(RingOp& op, const CMatrix& u, int layer, bool adjoint = false) {
  const int n = op.ring.sites(), D = op.ring.D;
  const int shift = layer % 2 == 1 ? 0 : 1;
  const CMatrix g = adjoint ? CMatrix(u.adjoint()) : u;
  const CMatrix gc = g.conjugate();
  for (int c = 0; c < op.ring.L; ++c) {
    const int a = mod(2 * c + shift, n), b = mod(2 * c + shift + 1, n);
    apply_two_site(op.x, D, 2 * n, a, b, g);
    apply_two_site(op.x, D, 2 * n, n + a, n + b, gc);
  }
}

/// Layers first..last in time order (forward) or last..first with adjoints (Heisenberg).
inline void evolve(RingOp& op, const CMatrix& u, int first, int last, bool heisenberg = false) {
  if (!heisenberg)
    for (int l = first; l <= last; ++l) apply_layer(op, u, l, false);
  else
    for (int l = last; l >= first; --l) apply_layer(op, u, l, true);
}

/// Tr(A B) over the full ring.
inline cplx ring_trace_product(const RingOp& a, const RingOp& b) {
  const std::int64_t N = a.ring.dim();
  cplx s = 0;
  for (std::int64_t r = 0; r < N; ++r)
    for (std::int64_t c = 0; c < N; ++c) s += a.x[r * N + c] * b.x[c * N + r];
  return s;
}

// ------------------------------------------------------------------ reachability

/// Support [lo, hi] on the infinite chain after one layer acting on [lo, hi].
inline std::pair<int, int> grow_support(int lo, int hi, int layer) {
  const bool odd = layer % 2 == 1;
  // odd layers pair (2c, 2c+1): an odd lo joins lo-1, an even hi joins hi+1.
  if (odd) return {mod(lo, 2) == 1 ? lo - 1 : lo, mod(hi, 2) == 0 ? hi + 1 : hi};
  return {mod(lo, 2) == 0 ? lo - 1 : lo, mod(hi, 2) == 1 ? hi + 1 : hi};
}

/// Window of an operator on [lo, hi] evolved through layers first..last (either direction,
/// the support is the same).
inline std::pair<int, int> cone(int lo, int hi, int first, int last) {
  for (int l = first; l <= last; ++l) std::tie(lo, hi) = grow_support(lo, hi, l);
  return {lo, hi};
}

/// True when the ring value equals the infinite-chain value: for some split of the n layers
/// the forward cone of b, the backward cone of a and their union all fit on the ring.
inline bool reachable(const RingSpec& ring, int sa, int ka, int sb, int kb, int n) {
  const int S = ring.sites();
  for (int h = 0; h <= n; ++h) {
    const auto [bl, bh] = cone(sb, sb + kb - 1, 1, h);
    // the a window lives in whichever image of sa lies closest to the b window.
    for (int shift = -2; shift <= 2; ++shift) {
      const int a0 = sa + shift * S;
      std::pair<int, int> aw{a0, a0 + ka - 1};
      for (int l = n; l > h; --l) aw = grow_support(aw.first, aw.second, l);
      const int lo = std::min(bl, aw.first), hi = std::max(bh, aw.second);
      if (bh - bl + 1 <= S && aw.second - aw.first + 1 <= S && hi - lo + 1 <= S) return true;
    }
  }
  return false;
}

// ------------------------------------------------------------------ correlators

/// C = D^{k_b} Tr(U^{-t} a_i U^t b_j) / D^{2L} with a, b placed at positions i, j (cells).
inline cplx correlator_exact(const RingSpec& ring, const GateTensor& g, const Observable& a, const Observable& b,
                             double i, double j, double t) {
  const int n = layers_of(t);
  RingOp x = embed(ring, b.op, ring_sites(ring, sites_of(j), b.k));
  evolve(x, g.u, 1, n);
  const CMatrix red = reduce(x, ring_sites(ring, sites_of(i), a.k));
  return double(ipow(g.D, b.k)) / double(ring.dim()) * (a.op * red).trace();
}

/// Every (i, n) value for one b: result[n][s] is the correlator with a starting at site s
/// after n layers, unreachable cells left empty.
struct RingGrid {
  std::vector<std::vector<std::optional<cplx>>> values;
};

inline RingGrid correlator_grid_exact(const RingSpec& ring, const GateTensor& g, const Observable& a,
                                      const Observable& b, double j, int n_max, bool only_reachable = true) {
  const int sj = sites_of(j);
  RingOp x = embed(ring, b.op, ring_sites(ring, sj, b.k));
  RingGrid out;
  const double scale = double(ipow(g.D, b.k)) / double(ring.dim());
  for (int n = 0; n <= n_max; ++n) {
    if (n > 0) apply_layer(x, g.u, n);
    std::vector<std::optional<cplx>> row(ring.sites());
    for (int s = 0; s < ring.sites(); ++s) {
      if (only_reachable && !reachable(ring, s, a.k, sj, b.k, n)) continue;
      row[s] = scale * (a.op * reduce(x, ring_sites(ring, s, a.k))).trace();
    }
    out.values.push_back(row);
  }
  return out;
}

/// C = D Tr( a(t1) b(t2) c ) / D^{2L} with the time-ordered evolution: c is evolved
/// through layers 1..n2, a is pulled back through layers n2+1..n1, both then act at time t2.
inline cplx correlator_3pt(const RingSpec& ring, const GateTensor& g, const Observable& a, const Observable& b,
                           const Observable& c, double i, double j, double k, double t1, double t2) {
  const int n1 = layers_of(t1), n2 = layers_of(t2);
  if (n2 > n1) throw std::invalid_argument("correlator_3pt: need t2 <= t1");
  RingOp xc = embed(ring, c.op, ring_sites(ring, sites_of(k), c.k));
  evolve(xc, g.u, 1, n2);
  RingOp ya = embed(ring, a.op, ring_sites(ring, sites_of(i), a.k));
  evolve(ya, g.u, n2 + 1, n1, true);
  // b X: b acts on the ket indices of its sites.
  const auto bs = ring_sites(ring, sites_of(j), b.k);
  const int n = ring.sites();
  std::vector<cplx> bx = xc.x;
  if (b.k == 1) {
    apply_one_site(bx, g.D, 2 * n, bs[0], b.op);
  } else if (b.k == 2) {
    apply_two_site(bx, g.D, 2 * n, bs[0], bs[1], b.op);
  } else {
    throw std::invalid_argument("correlator_3pt: b must have support 1 or 2");
  }
  RingOp z{ring, std::move(bx)};
  return double(g.D) / double(ring.dim()) * ring_trace_product(ya, z);
}

/// The reduced form a same-side 3-point value takes for a level-2 gate: the 2-point value of
/// a against d = b * c^, where c^ is c(t2) traced down to b's sites. At t2 = 0, c is kept
/// whole and d = b c is the multi-site product.
inline cplx correlator_3pt_reduced(const RingSpec& ring, const GateTensor& g, const Observable& a,
                                   const Observable& b, const Observable& c, double i, double j, double k,
                                   double t1, double t2) {
  const int n1 = layers_of(t1), n2 = layers_of(t2);
  if (n2 > n1) throw std::invalid_argument("correlator_3pt_reduced: need t2 <= t1");
  const auto bs = ring_sites(ring, sites_of(j), b.k);
  RingOp x = embed(ring, c.op, ring_sites(ring, sites_of(k), c.k));
  evolve(x, g.u, 1, n2);
  if (n2 == 0) {
    if (b.k == 1)
      apply_one_site(x.x, g.D, 2 * ring.sites(), bs[0], b.op);
    else
      apply_two_site(x.x, g.D, 2 * ring.sites(), bs[0], bs[1], b.op);
  } else {
    const CMatrix chat = double(ipow(g.D, b.k)) / double(ring.dim()) * reduce(x, bs);
    x = embed(ring, CMatrix(b.op * chat), bs);
  }
  evolve(x, g.u, n2 + 1, n1);
  const CMatrix red = reduce(x, ring_sites(ring, sites_of(i), a.k));
  return double(g.D) / double(ring.dim()) * (a.op * red).trace();
}

// ---------------------------------------------------------------- light-cone contractor

inline constexpr std::int64_t kLightconeCap = std::int64_t{1} << 24;

/// Operator on the chain window [lo, lo + w) as a folded vector of 2w sites.
struct WindowOp {
  int D = 2;
  int lo = 0, w = 0;
  std::vector<cplx> x;
};

inline WindowOp window_from(const CMatrix& op, int D, int lo) {
  const int w = site_count(op.rows(), D);
  WindowOp r{D, lo, w, {}};
  r.x.resize(op.size());
  for (Eigen::Index a = 0; a < op.rows(); ++a)
    for (Eigen::Index b = 0; b < op.cols(); ++b) r.x[a * op.cols() + b] = op(a, b);
  return r;
}

/// Extends the window to [lo, hi] by tensoring identities.
inline WindowOp extend(const WindowOp& op, int lo, int hi, std::int64_t cap) {
  const int w = hi - lo + 1;
  if (ipow(op.D, 2 * w) > cap) throw std::length_error("light cone: window exceeds the working-space cap");
  std::vector<int> sites;
  for (int s = op.lo; s < op.lo + op.w; ++s) sites.push_back(s - lo);
  const std::int64_t N = ipow(op.D, w);
  const auto on = detail::site_offsets(op.D, w, sites);
  const auto off = detail::site_offsets(op.D, w, detail::complement(w, sites));
  WindowOp r{op.D, lo, w, std::vector<cplx>(N * N, 0.0)};
  const std::int64_t k = static_cast<std::int64_t>(on.size());
  for (std::int64_t a = 0; a < k; ++a)
    for (std::int64_t b = 0; b < k; ++b) {
      const cplx v = op.x[a * k + b];
      if (v == 0.0) continue;
      for (std::int64_t q : off) r.x[(on[a] + q) * N + on[b] + q] = v;
    }
  return r;
}

/// Partial trace onto [lo, hi] (empty when hi < lo, giving a 1x1 matrix).
inline CMatrix window_reduce(const WindowOp& op, int lo, int hi) {
  std::vector<int> sites;
  for (int s = lo; s <= hi; ++s) sites.push_back(s - op.lo);
  const std::int64_t N = ipow(op.D, op.w);
  const auto on = detail::site_offsets(op.D, op.w, sites);
  const auto off = detail::site_offsets(op.D, op.w, detail::complement(op.w, sites));
  const std::int64_t k = static_cast<std::int64_t>(on.size());
  CMatrix r = CMatrix::Zero(k, k);
  for (std::int64_t a = 0; a < k; ++a)
    for (std::int64_t b = 0; b < k; ++b) {
      cplx s = 0;
      for (std::int64_t q : off) s += op.x[(on[a] + q) * N + on[b] + q];
      r(a, b) = s;
    }
  return r;
}

inline void window_layer(WindowOp& op, const CMatrix& u, int layer, bool adjoint, std::int64_t cap) {
  const auto [lo, hi] = grow_support(op.lo, op.lo + op.w - 1, layer);
  op = extend(op, lo, hi, cap);
  const CMatrix g = adjoint ? CMatrix(u.adjoint()) : u;
  const CMatrix gc = g.conjugate();
  for (int s = lo; s < hi; ++s) {
    const bool starts = layer % 2 == 1 ? mod(s, 2) == 0 : mod(s, 2) == 1;
    if (!starts) continue;
    apply_two_site(op.x, op.D, 2 * op.w, s - lo, s - lo + 1, g);
    apply_two_site(op.x, op.D, 2 * op.w, op.w + s - lo, op.w + s - lo + 1, gc);
  }
}

/// Infinite-chain correlator D^{k_b} Tr(U^{-t} a_i U^t b_j) / D^{#sites}, contracting only
/// the causal region: b is pushed forward through the first h layers, a pulled back through
/// the rest, and the two meet on the overlap of their windows.
inline cplx correlator_lightcone(const GateTensor& g, const Observable& a, const Observable& b, double i, double j,
                                 double t, std::int64_t cap = kLightconeCap) {
  const int n = layers_of(t);
  const int sa = sites_of(i), sb = sites_of(j), D = g.D;
  // pick the split with the smallest largest window.
  int best_h = 0, best_w = std::numeric_limits<int>::max();
  for (int h = 0; h <= n; ++h) {
    const auto [bl, bh] = cone(sb, sb + b.k - 1, 1, h);
    std::pair<int, int> aw{sa, sa + a.k - 1};
    for (int l = n; l > h; --l) aw = grow_support(aw.first, aw.second, l);
    const int w = std::max(bh - bl + 1, aw.second - aw.first + 1);
    if (w < best_w) best_w = w, best_h = h;
  }
  WindowOp B = window_from(b.op, D, sb), A = window_from(a.op, D, sa);
  for (int l = 1; l <= best_h; ++l) window_layer(B, g.u, l, false, cap);
  for (int l = n; l > best_h; --l) window_layer(A, g.u, l, true, cap);
  const int lo = std::max(A.lo, B.lo), hi = std::min(A.lo + A.w, B.lo + B.w) - 1;
  const int uni = A.w + B.w - std::max(0, hi - lo + 1);
  cplx tr;
  if (hi < lo) {
    tr = window_reduce(A, 0, -1)(0, 0) * window_reduce(B, 0, -1)(0, 0);
  } else {
    tr = (window_reduce(A, lo, hi) * window_reduce(B, lo, hi)).trace();
  }
  return tr * std::pow(double(D), b.k - uni);
}

}  // namespace hier
