#pragma once

// Small labeled-tensor contraction engine and an evaluator for folded gate diagrams.
//
// A diagram places folded gates w = u (x) conj(u) on a plane using doubled integer
// coordinates: a gate centred at (X, Y) has legs TL (X-1, Y+1), TR (X+1, Y+1) (outputs)
// and BL (X-1, Y-1), BR (X+1, Y-1) (inputs). A top leg of one gate and a bottom leg of
// another at the same point are contracted. Bullets cap a leg with |o> = vec(I)/sqrt(D).
// Each folded leg index is a D + a' (a on the u layer, a' on the conj(u) layer).

#include "hier/tensor_core.hpp"

#include <map>
#include <numeric>

namespace hier {

/// Dense tensor with integer leg labels, row-major over the label order.
struct LTensor {
  std::vector<int> labels;
  std::vector<std::int64_t> dims;
  std::vector<cplx> data;

  std::int64_t size() const {
    return std::accumulate(dims.begin(), dims.end(), std::int64_t{1}, std::multiplies<>());
  }
  int axis(int label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return static_cast<int>(i);
    return -1;
  }
};

inline LTensor permute(const LTensor& t, const std::vector<int>& order) {
  const int n = static_cast<int>(t.labels.size());
  std::vector<int> src(n);
  LTensor r;
  for (int i = 0; i < n; ++i) {
    src[i] = t.axis(order[i]);
    if (src[i] < 0) throw std::invalid_argument("permute: unknown label");
    r.labels.push_back(order[i]);
    r.dims.push_back(t.dims[src[i]]);
  }
  std::vector<std::int64_t> stride(n, 1);
  for (int i = n - 2; i >= 0; --i) stride[i] = stride[i + 1] * t.dims[i + 1];
  r.data.resize(t.data.size());
  std::vector<std::int64_t> idx(n, 0);
  for (std::int64_t k = 0; k < static_cast<std::int64_t>(r.data.size()); ++k) {
    std::int64_t off = 0;
    for (int i = 0; i < n; ++i) off += idx[i] * stride[src[i]];
    r.data[k] = t.data[off];
    for (int i = n - 1; i >= 0; --i) {
      if (++idx[i] < r.dims[i]) break;
      idx[i] = 0;
    }
  }
  return r;
}

/// Contracts all labels shared by a and b; result legs are a's free legs then b's free legs.
inline LTensor contract(const LTensor& a, const LTensor& b) {
  std::vector<int> shared, fa, fb;
  for (int l : a.labels) (b.axis(l) >= 0 ? shared : fa).push_back(l);
  for (int l : b.labels)
    if (a.axis(l) < 0) fb.push_back(l);
  std::vector<int> oa = fa, ob = shared;
  oa.insert(oa.end(), shared.begin(), shared.end());
  ob.insert(ob.end(), fb.begin(), fb.end());
  const LTensor pa = permute(a, oa), pb = permute(b, ob);
  std::int64_t m = 1, k = 1, n = 1;
  for (std::size_t i = 0; i < fa.size(); ++i) m *= pa.dims[i];
  for (std::size_t i = fa.size(); i < oa.size(); ++i) k *= pa.dims[i];
  for (std::size_t i = shared.size(); i < ob.size(); ++i) n *= pb.dims[i];
  using RM = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RM> ma(pa.data.data(), m, k), mb(pb.data.data(), k, n);
  LTensor r;
  r.labels = fa;
  r.labels.insert(r.labels.end(), fb.begin(), fb.end());
  for (std::size_t i = 0; i < fa.size(); ++i) r.dims.push_back(pa.dims[i]);
  for (std::size_t i = shared.size(); i < ob.size(); ++i) r.dims.push_back(pb.dims[i]);
  r.data.resize(m * n);
  Eigen::Map<RM> mr(r.data.data(), m, n);
  mr.noalias() = ma * mb;
  return r;
}

inline LTensor outer(const LTensor& a, const LTensor& b) { return contract(a, b); }

inline LTensor vector_tensor(int label, const CVector& v) {
  return {{label}, {static_cast<std::int64_t>(v.size())}, std::vector<cplx>(v.data(), v.data() + v.size())};
}

/// |o> = vec(I_D)/sqrt(D) as a folded-leg vector.
inline CVector bullet(int D) {
  CVector b = CVector::Zero(D * D);
  for (int a = 0; a < D; ++a) b(a * D + a) = 1.0 / std::sqrt(double(D));
  return b;
}

/// Folded gate as a four-leg tensor with legs (TL, TR, BL, BR).
inline LTensor folded_gate_tensor(const GateTensor& g, const std::array<int, 4>& labels) {
  const int D = g.D, F = D * D;
  LTensor t{{labels[0], labels[1], labels[2], labels[3]}, {F, F, F, F}, {}};
  t.data.resize(static_cast<std::size_t>(F) * F * F * F);
  std::size_t k = 0;
  for (int tl = 0; tl < F; ++tl)
    for (int tr = 0; tr < F; ++tr)
      for (int bl = 0; bl < F; ++bl)
        for (int br = 0; br < F; ++br) {
          const int kk = tl / D, kp = tl % D, l = tr / D, lp = tr % D;
          const int i = bl / D, ip = bl % D, j = br / D, jp = br % D;
          t.data[k++] = g.u(kk * D + l, i * D + j) * std::conj(g.u(kp * D + lp, ip * D + jp));
        }
  return t;
}

struct Point {
  int x = 0, y = 0;
  bool operator<(const Point& o) const { return x != o.x ? x < o.x : y < o.y; }
  bool operator==(const Point& o) const { return x == o.x && y == o.y; }
};

/// Gates, bullets, and the ordered open legs of one side of a diagrammatic identity.
/// An open point that touches no gate contributes a free |o> factor.
struct Diagram {
  std::vector<Point> gates;
  std::vector<Point> bullets;
  std::vector<Point> open;

  Diagram transformed(int sx, int sy) const {
    Diagram d;
    for (auto p : gates) d.gates.push_back({sx * p.x, sy * p.y});
    for (auto p : bullets) d.bullets.push_back({sx * p.x, sy * p.y});
    for (auto p : open) d.open.push_back({sx * p.x, sy * p.y});
    return d;
  }
  Diagram mirrored() const { return transformed(-1, 1); }
  Diagram rotated() const { return transformed(-1, -1); }
};

/// Evaluates a diagram with all gates equal to g; output legs follow d.open.
inline LTensor evaluate(const Diagram& d, const GateTensor& g) {
  const int D = g.D;
  std::map<Point, int> label_of;
  auto label = [&](Point p) {
    auto it = label_of.find(p);
    if (it != label_of.end()) return it->second;
    const int l = static_cast<int>(label_of.size());
    label_of[p] = l;
    return l;
  };
  std::map<Point, int> touches;
  for (auto c : d.gates)
    for (Point p : {Point{c.x - 1, c.y + 1}, Point{c.x + 1, c.y + 1}, Point{c.x - 1, c.y - 1},
                    Point{c.x + 1, c.y - 1}})
      ++touches[p];
  for (auto b : d.bullets)
    if (touches[b] != 1) throw std::invalid_argument("diagram: bullet must cap exactly one leg");
  const CVector o = bullet(D);
  // Cap each gate's bullets before merging it, keeping intermediates small.
  LTensor acc{{}, {}, {1.0}};
  for (auto c : d.gates) {
    const std::array<Point, 4> legs{Point{c.x - 1, c.y + 1}, Point{c.x + 1, c.y + 1},
                                    Point{c.x - 1, c.y - 1}, Point{c.x + 1, c.y - 1}};
    const std::array<int, 4> ls{label(legs[0]), label(legs[1]), label(legs[2]), label(legs[3])};
    LTensor t = folded_gate_tensor(g, ls);
    for (auto p : legs)
      if (std::find(d.bullets.begin(), d.bullets.end(), p) != d.bullets.end())
        t = contract(t, vector_tensor(label(p), o));
    acc = contract(acc, t);
  }
  std::vector<int> order;
  int free_label = 1 << 20;
  for (auto p : d.open) {
    if (touches.count(p) && touches[p] == 1) {
      order.push_back(label(p));
    } else if (!touches.count(p)) {
      acc = outer(acc, vector_tensor(free_label, o));
      order.push_back(free_label++);
    } else {
      throw std::invalid_argument("diagram: open point is an internal leg");
    }
  }
  if (acc.labels.size() != order.size()) throw std::invalid_argument("diagram: dangling legs not listed as open");
  return permute(acc, order);
}

inline double max_diff(const LTensor& a, const LTensor& b) {
  if (a.data.size() != b.data.size()) throw std::invalid_argument("max_diff: shape mismatch");
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

inline double frob2_diff(const LTensor& a, const LTensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::norm(a.data[i] - b.data[i]);
  return s;
}

/// A diagrammatic identity lhs = rhs.
struct Identity {
  Diagram lhs, rhs;
  Identity mirrored() const { return {lhs.mirrored(), rhs.mirrored()}; }
  Identity rotated() const { return {lhs.rotated(), rhs.rotated()}; }
};

/// Level-k staircase identity with bullets on the right: k gates descending to the right,
/// bullets on every top-right leg and on the lowest bottom-right leg, equal to the
/// (k-1)-gate staircase with a bullet on the freed bottom-left leg.
inline Identity staircase_right(int k) {
  Identity id;
  auto build = [](int n, Diagram& d) {
    for (int m = 0; m < n; ++m) {
      const Point c{2 * m, -2 * m};
      d.gates.push_back(c);
      d.bullets.push_back({c.x + 1, c.y + 1});
    }
    if (n > 0) d.bullets.push_back({2 * (n - 1) + 1, -2 * (n - 1) - 1});
  };
  build(k, id.lhs);
  build(k - 1, id.rhs);
  std::vector<Point> open{{-1, 1}};
  for (int m = 0; m < k; ++m) open.push_back({2 * m - 1, -2 * m - 1});
  id.lhs.open = open;
  id.rhs.open = open;
  return id;
}

}  // namespace hier
