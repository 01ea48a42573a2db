#pragma once

// Command-line surface: gate specs, CSV and SVG output, and the verify, correlate, quench,
// spectrum, search and plot commands. Everything is callable in-process through run().

#include "hier/quench.hpp"
#include "hier/search.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <future>
#include <map>
#include <set>

namespace hier::cli {

using nlohmann::json;

enum ExitCode { kOk = 0, kCheckFailed = 1, kUsage = 2, kResourceCap = 3 };

/// A requested check did not pass (exit code 1).
struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------------ gate specs

inline std::vector<double> split_numbers(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument("gate spec: bad number '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

/// D^2 x D^2 matrix from a flat list of [re, im] pairs or a list of rows of pairs.
inline CMatrix matrix_from_json(const json& j, int D) {
  const int n = D * D;
  std::vector<cplx> vals;
  auto pair = [](const json& p) {
    if (!p.is_array() || p.size() != 2) throw std::invalid_argument("gate file: entries are [re, im] pairs");
    return cplx(p[0].get<double>(), p[1].get<double>());
  };
  for (const auto& e : j) {
    if (e.is_array() && !e.empty() && e[0].is_array())
      for (const auto& p : e) vals.push_back(pair(p));
    else
      vals.push_back(pair(e));
  }
  const int rows = static_cast<int>(std::lround(std::sqrt(double(vals.size()))));
  if (rows * rows != static_cast<int>(vals.size()) || (rows != n && rows != D))
    throw std::invalid_argument("gate file: matrix has the wrong number of entries");
  CMatrix m(rows, rows);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < rows; ++c) m(r, c) = vals[r * rows + c];
  return m;
}

inline json matrix_to_json(const CMatrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(row);
  }
  return rows;
}

inline LocalGate local_from_json(const json& j, int D) {
  if (j.contains("angles")) {
    const auto a = j.at("angles").get<std::vector<double>>();
    if (a.size() != 3) throw std::invalid_argument("gate file: angles are [r, theta, phi]");
    return LocalGate::from_angles(a[0], a[1], a[2]);
  }
  if (j.contains("matrix")) return LocalGate::from_matrix(matrix_from_json(j.at("matrix"), D));
  throw std::invalid_argument("gate file: single-site gate needs 'angles' or 'matrix'");
}

inline ThetaTable theta_from_json(const json& j, int D) {
  if (j.contains("quadratic")) {
    const auto q = j.at("quadratic").get<std::vector<double>>();
    if (q.size() != 3) throw std::invalid_argument("gate file: quadratic is [lambda, mu, nu]");
    return theta_quadratic(D, q[0], q[1], q[2]);
  }
  if (j.contains("table")) {
    const auto t = j.at("table").get<std::string>();
    if (t == "dpq-half") return theta_l2_families(D, L2Family::DpqHalf);
    if (t == "p-squared") return theta_l2_families(D, L2Family::PSquared);
    if (t == "l3") return theta_l3_families(D);
    throw std::invalid_argument("gate file: unknown theta table '" + t + "'");
  }
  ThetaTable th = theta_ones(D);
  if (j.contains("exponents")) {
    // theta_{p,q} = omega^{e_{p,q}}, rows p.
    const auto e = j.at("exponents").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(e.size()) != D) throw std::invalid_argument("gate file: exponents need D rows");
    for (int p = 0; p < D; ++p) {
      if (static_cast<int>(e[p].size()) != D) throw std::invalid_argument("gate file: exponents need D columns");
      for (int q = 0; q < D; ++q) th.at(p, q) = omega_pow(D, e[p][q]);
    }
  } else if (j.contains("phases")) {
    const auto a = j.at("phases").get<std::vector<double>>();
    if (static_cast<int>(a.size()) != D * D) throw std::invalid_argument("gate file: phases need D^2 angles");
    for (int k = 0; k < D * D; ++k) th.entries[k] = std::exp(kI * a[k]);
  } else {
    throw std::invalid_argument("gate file: theta needs quadratic, table, exponents or phases");
  }
  if (!theta_valid(th)) throw std::invalid_argument("gate file: theta must be unimodular with theta_00 = 1");
  return th;
}

inline GateTensor gate_from_json(const json& j) {
  const int D = j.value("dim", 2);
  if (D < 2) throw std::invalid_argument("gate file: dim must be at least 2");
  const std::string fam = j.at("family").get<std::string>();
  GateTensor g;
  if (fam == "named") {
    g = build_named(j.at("name").get<std::string>(), D);
  } else if (fam == "matrix") {
    if (j.value("haar", false)) {
      if (!j.contains("seed")) throw std::invalid_argument("gate file: a Haar gate needs a seed");
      Rng rng(j.at("seed").get<std::uint64_t>());
      g = {D, haar_unitary(D * D, rng)};
    } else {
      g = {D, matrix_from_json(j.at("matrix"), D)};
      if (g.u.rows() != D * D) throw std::invalid_argument("gate file: matrix must be D^2 x D^2");
    }
  } else if (fam == "qubit-param") {
    if (D != 2) throw std::invalid_argument("gate file: qubit-param needs dim 2");
    QubitGateParams p;
    const auto J = j.value("J", std::vector<double>{0, 0, 0});
    if (J.size() != 3) throw std::invalid_argument("gate file: J is [Jx, Jy, Jz]");
    p.Jx = J[0], p.Jy = J[1], p.Jz = J[2];
    LocalGate* vs[4] = {&p.v1, &p.v2, &p.v3, &p.v4};
    for (int k = 0; k < 4; ++k) {
      const std::string key = "v" + std::to_string(k + 1);
      if (j.contains(key)) *vs[k] = local_from_json(j.at(key), D);
    }
    p.phase = j.value("phase", 0.0);
    if (j.contains("axes")) p.axes = j.at("axes").get<std::array<int, 3>>();
    g = build_qubit_gate(p);
  } else if (fam == "clifford-theta") {
    CliffordFamilyParams p{D, theta_from_json(j.at("theta"), D), {}, {}, {}, {}};
    std::optional<CMatrix>* vs[4] = {&p.v1, &p.v2, &p.v3, &p.v4};
    for (int k = 0; k < 4; ++k) {
      const std::string key = "v" + std::to_string(k + 1);
      if (j.contains(key)) *vs[k] = matrix_from_json(j.at(key).at("matrix"), D);
    }
    g = build_clifford_gate(p);
  } else {
    throw std::invalid_argument("gate file: unknown family '" + fam + "'");
  }
  if (!is_unitary(g.u, 1e-9)) throw std::invalid_argument("gate file: the gate is not unitary");
  return g;
}

inline json gate_to_json(const GateTensor& g) { return {{"dim", g.D}, {"family", "matrix"}, {"matrix", matrix_to_json(g.u)}}; }

/// named:NAME[:D], family:KIND[:ARGS], or a path to a JSON gate file.
inline GateTensor load_gate(const std::string& spec) {
  auto rest_of = [&](std::size_t n) { return spec.substr(n); };
  if (spec.rfind("named:", 0) == 0) {
    const std::string r = rest_of(6);
    const auto c = r.find(':');
    if (c == std::string::npos) return build_named(r, 2);
    return build_named(r.substr(0, c), std::stoi(r.substr(c + 1)));
  }
  if (spec.rfind("family:", 0) == 0) {
    const std::string r = rest_of(7);
    const auto c = r.find(':');
    const std::string kind = r.substr(0, c);
    const std::string args = c == std::string::npos ? "" : r.substr(c + 1);
    const auto nums = args.empty() || kind == "reference" ? std::vector<double>{} : split_numbers(args);
    auto need = [&](std::size_t n) {
      if (nums.size() != n) throw std::invalid_argument("gate spec: family:" + kind + " takes " + std::to_string(n) + " numbers");
    };
    if (kind == "qubit-l2") {
      need(4);
      return build_qubit_gate(qubit_l2_params(nums[0], nums[1], nums[2], nums[3]));
    }
    if (kind == "qubit") {
      need(3);
      QubitGateParams p;
      p.Jx = nums[0], p.Jy = nums[1], p.Jz = nums[2];
      return build_qubit_gate(p);
    }
    if (kind == "reference") {
      const ReferenceSet s = args == "left" ? ReferenceSet::Left : args == "middle" ? ReferenceSet::Middle
                            : args == "right" ? ReferenceSet::Right
                                              : throw std::invalid_argument("gate spec: reference set is left, middle or right");
      return build_qubit_gate(reference_params(s));
    }
    if (kind == "cnot-decomposition") return build_qubit_gate(cnot_decomposition());
    auto clifford = [&](const ThetaTable& t) { return build_clifford_gate({t.D, t, {}, {}, {}, {}}); };
    if (kind == "quadratic") {
      need(4);
      return clifford(theta_quadratic(static_cast<int>(nums[0]), nums[1], nums[2], nums[3]));
    }
    if (kind == "dpq-half" || kind == "p-squared" || kind == "l3") {
      need(1);
      const int D = static_cast<int>(nums[0]);
      if (kind == "l3") return clifford(theta_l3_families(D));
      return clifford(theta_l2_families(D, kind == "dpq-half" ? L2Family::DpqHalf : L2Family::PSquared));
    }
    throw std::invalid_argument("gate spec: unknown family '" + kind + "'");
  }
  std::ifstream f(spec);
  if (!f) throw std::invalid_argument("gate spec: cannot open '" + spec + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("gate file: ") + e.what());
  }
  return gate_from_json(j);
}

// ------------------------------------------------------------------ CSV and SVG

inline constexpr const char* kGridHeader = "i,j,t_num,t_den,re,im,method";

inline void write_grid_csv(std::ostream& out, const CorrelatorGrid& grid) {
  out << kGridHeader << '\n';
  out.precision(17);
  for (const auto& c : grid)
    out << c.i << ',' << c.j << ',' << c.t_num << ',' << c.t_den << ',' << c.value.real() << ',' << c.value.imag()
        << ',' << c.method << '\n';
}

inline CorrelatorGrid read_grid_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind(kGridHeader, 0) != 0) throw std::invalid_argument("csv: missing header");
  CorrelatorGrid grid;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 7) throw std::invalid_argument("csv: expected 7 fields");
    grid.push_back({std::stod(f[0]), std::stod(f[1]), std::stoi(f[2]), std::stoi(f[3]), cplx(std::stod(f[4]), std::stod(f[5])), f[6]});
  }
  return grid;
}

inline double time_of(const GridCell& c) { return double(c.t_num) / c.t_den; }

namespace detail {

inline std::string heat_color(double v) {
  // v in [0, 1]: white to dark blue.
  const int r = static_cast<int>(255 * (1 - v)), g = static_cast<int>(255 * (1 - 0.8 * v)), b = 255 - static_cast<int>(80 * v);
  std::ostringstream o;
  o << "rgb(" << r << ',' << g << ',' << b << ')';
  return o.str();
}

inline constexpr double kLogFloor = -12;

inline double log_abs(cplx v) { return std::max(kLogFloor, std::log10(std::max(std::abs(v), 1e-300))); }

}  // namespace detail

/// Heatmap of log10|C| over (i, t) for one method.
inline std::string svg_heatmap(const CorrelatorGrid& grid, const std::string& method) {
  std::set<double> is, ts;
  for (const auto& c : grid)
    if (c.method == method) is.insert(c.i), ts.insert(time_of(c));
  const double cw = 24, ch = 24, pad = 50;
  const double W = pad * 2 + cw * is.size(), H = pad * 2 + ch * ts.size();
  std::map<double, int> ix, it;
  for (double v : is) ix.emplace(v, static_cast<int>(ix.size()));
  for (double v : ts) it.emplace(v, static_cast<int>(it.size()));
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<text x=\"" << pad << "\" y=\"20\" font-size=\"12\">log10|C| (" << method << "), x: i, y: t</text>\n";
  for (const auto& c : grid) {
    if (c.method != method) continue;
    const double v = (detail::log_abs(c.value) - detail::kLogFloor) / -detail::kLogFloor;
    o << "<rect x=\"" << pad + cw * ix[c.i] << "\" y=\"" << H - pad - ch * (it[time_of(c)] + 1) << "\" width=\"" << cw
      << "\" height=\"" << ch << "\" fill=\"" << detail::heat_color(v) << "\"/>\n";
  }
  for (auto [v, k] : ix)
    o << "<text x=\"" << pad + cw * k + 2 << "\" y=\"" << H - pad + 14 << "\" font-size=\"9\">" << v << "</text>\n";
  for (auto [v, k] : it)
    o << "<text x=\"4\" y=\"" << H - pad - ch * k - 8 << "\" font-size=\"9\">" << v << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

/// log10|C| against t, one polyline per (i, method).
inline std::string svg_decay(const CorrelatorGrid& grid) {
  std::map<std::string, std::vector<std::pair<double, double>>> lines;
  double tmax = 0;
  for (const auto& c : grid) {
    std::ostringstream key;
    key << c.method << " i=" << c.i;
    lines[key.str()].push_back({time_of(c), detail::log_abs(c.value)});
    tmax = std::max(tmax, time_of(c));
  }
  const double W = 480, H = 320, pad = 50;
  auto X = [&](double t) { return pad + (W - 2 * pad) * (tmax > 0 ? t / tmax : 0); };
  auto Y = [&](double l) { return pad + (H - 2 * pad) * (l / detail::kLogFloor); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << W - 2 * pad << "\" height=\"" << H - 2 * pad
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int l = 0; l >= detail::kLogFloor; l -= 3)
    o << "<text x=\"8\" y=\"" << Y(l) + 4 << "\" font-size=\"10\">1e" << l << "</text>\n";
  o << "<text x=\"" << W - pad << "\" y=\"" << H - pad + 16 << "\" font-size=\"10\">t=" << tmax << "</text>\n";
  int k = 0;
  for (auto& [name, pts] : lines) {
    std::sort(pts.begin(), pts.end());
    o << "<polyline fill=\"none\" stroke=\"" << colors[k % 5] << "\" points=\"";
    for (auto [t, l] : pts) o << X(t) << ',' << Y(l) << ' ';
    o << "\"/>\n<text x=\"" << W - pad + 4 << "\" y=\"" << pad + 12 * k << "\" font-size=\"9\" fill=\"" << colors[k % 5]
      << "\">" << name << "</text>\n";
    ++k;
  }
  o << "</svg>\n";
  return o.str();
}

/// Heatmap when the grid spans several positions, decay plot otherwise.
inline std::string render_svg(const CorrelatorGrid& grid) {
  std::set<double> is;
  for (const auto& c : grid) is.insert(c.i);
  if (is.size() > 1 && !grid.empty()) return svg_heatmap(grid, grid.front().method);
  return svg_decay(grid);
}

// ------------------------------------------------------------------ commands

struct Output {
  std::ostream& out;
  std::ostream& err;
  std::string dir;  ///< empty: CSV to out
  bool svg = false;

  /// CSV to dir/name.csv (or the stream), SVG next to it.
  void emit(const std::string& name, const CorrelatorGrid& grid) const {
    if (dir.empty()) {
      write_grid_csv(out, grid);
      if (svg) err << "warning: --svg needs --out, skipped\n";
      return;
    }
    std::filesystem::create_directories(dir);
    const auto base = std::filesystem::path(dir) / name;
    std::ofstream f(base.string() + ".csv");
    write_grid_csv(f, grid);
    out << "wrote " << base.string() << ".csv\n";
    if (svg) {
      std::ofstream s(base.string() + ".svg");
      s << render_svg(grid);
      out << "wrote " << base.string() << ".svg\n";
    }
  }
  /// Reports go to out when the CSV goes to a file, to err otherwise.
  std::ostream& report() const { return dir.empty() ? err : out; }
};

inline std::optional<Side> parse_side(const std::string& s) {
  if (s == "left") return Side::Left;
  if (s == "right") return Side::Right;
  if (s == "both") return Side::Both;
  return std::nullopt;
}

inline void print_report(std::ostream& o, const char* label, const ConditionReport& r) {
  o << label << " level " << r.level_checked << " " << side_name(r.side) << " residual " << r.residual
    << (r.passed ? " pass" : " fail") << '\n';
}

inline int cmd_verify(const GateTensor& g, std::optional<int> level, Side side, double tol, std::ostream& out) {
  out.precision(6);
  print_report(out, "unitarity", check_unitarity(g, tol));
  const LevelPair lp = classify_level(g, tol);
  for (int k = 1; k <= 3; ++k) {
    print_report(out, "check", check_level(g, k, Side::Left, false, tol));
    print_report(out, "check", check_level(g, k, Side::Right, false, tol));
  }
  out << level_string(lp) << '\n';
  if (!level) return kOk;
  const ConditionReport r = check_level(g, *level, side, false, tol);
  out << "requested level " << *level << " " << side_name(side) << (r.passed ? " satisfied" : " not satisfied") << '\n';
  return r.passed ? kOk : kCheckFailed;
}

struct CorrelateConfig {
  int support = 1;
  std::string mode = "channel";
  std::optional<double> i;
  double j = 0;
  double tmax = 3;
  std::uint64_t seed = 0;
  int L = 0;  ///< ring cells; 0 picks the largest ring under the cap
  int jobs = 1;
};

inline std::vector<double> half_steps(double lo, double hi) {
  std::vector<double> v;
  for (int n = sites_of(lo); n <= sites_of(hi); ++n) v.push_back(n / 2.0);
  return v;
}

inline int default_ring(int D, std::int64_t cap = kDefaultRingCap) {
  int L = 1;
  while (ipow(D, 4 * (L + 1)) <= cap) ++L;
  return L;
}

/// Values evaluated in parallel over --jobs workers, order preserved.
template <class F>
std::vector<cplx> parallel_map(std::size_t n, int jobs, F f) {
  std::vector<cplx> out(n);
  if (jobs <= 1) {
    for (std::size_t k = 0; k < n; ++k) out[k] = f(k);
    return out;
  }
  std::vector<std::future<void>> fs;
  std::atomic<std::size_t> next{0};
  for (int w = 0; w < jobs; ++w)
    fs.push_back(std::async(std::launch::async, [&] {
      for (std::size_t k; (k = next++) < n;) out[k] = f(k);
    }));
  for (auto& x : fs) x.get();
  return out;
}

inline int cmd_correlate(const GateTensor& g, const CorrelateConfig& cfg, const Output& o) {
  if (cfg.support < 1 || cfg.support > 3) throw std::invalid_argument("correlate: support is 1, 2 or 3");
  const std::set<std::string> modes{"channel", "oracle", "lightcone", "both"};
  if (!modes.count(cfg.mode)) throw std::invalid_argument("correlate: unknown mode '" + cfg.mode + "'");
  const int D = g.D, k = cfg.support;
  Rng rng(cfg.seed);
  const Observable a = random_observable(D, k, rng), b = random_observable(D, k, rng);
  const int nmax = layers_of(cfg.tmax);
  const bool want_channel = cfg.mode == "channel" || cfg.mode == "both";
  const bool want_oracle = cfg.mode == "oracle" || cfg.mode == "both";
  if (want_channel && !check_l2(g).passed) throw CheckFailed("correlate: channel mode needs a level-2 gate");
  if (k > 1 && want_channel && mod(sites_of(cfg.j), 2) != 0)
    throw std::invalid_argument("correlate: multi-site channel formulas need b at an integer position");
  // positions: the single i, the time axis for multi-site channel runs, or the causal range.
  std::vector<double> is;
  if (cfg.i) is = {*cfg.i};
  else if (k > 1 && cfg.mode == "channel") is = {cfg.j};
  else is = half_steps(cfg.j - cfg.tmax - (k - 1) / 2.0, cfg.j + cfg.tmax);
  CorrelatorGrid grid;
  std::map<std::pair<double, int>, cplx> channel_vals;
  if (want_channel) {
    for (int n = 0; n <= nmax; ++n)
      for (double i : is) {
        cplx v;
        if (k == 1) v = correlator_l2(g, a, b, i, cfg.j, n / 2.0, false);
        else if (i != cfg.j) continue;
        else if (k == 2) v = correlator_2site_time(g, a, b, n / 2.0, false);
        else v = correlator_3site_time(g, a, b, n / 2.0, false);
        grid.push_back(make_cell(i, cfg.j, n, v, "channel"));
        channel_vals[{i, n}] = v;
      }
  }
  double worst = 0;
  int compared = 0;
  if (want_oracle) {
    const RingSpec ring{D, cfg.L > 0 ? cfg.L : default_ring(D)};
    ring.validate();
    const RingGrid rg = correlator_grid_exact(ring, g, a, b, cfg.j, nmax);
    for (int n = 0; n <= nmax; ++n)
      for (double i : is) {
        const int s = mod(sites_of(i), ring.sites());
        const auto& v = rg.values[n][s];
        if (!v) continue;
        grid.push_back(make_cell(i, cfg.j, n, *v, "oracle"));
        if (auto it = channel_vals.find({i, n}); it != channel_vals.end()) {
          worst = std::max(worst, std::abs(it->second - *v));
          ++compared;
        }
      }
  }
  if (cfg.mode == "lightcone") {
    std::vector<std::pair<double, int>> pts;
    for (int n = 0; n <= nmax; ++n)
      for (double i : is) pts.push_back({i, n});
    const auto vals = parallel_map(pts.size(), cfg.jobs, [&](std::size_t q) {
      return correlator_lightcone(g, a, b, pts[q].first, cfg.j, pts[q].second / 2.0);
    });
    for (std::size_t q = 0; q < pts.size(); ++q) grid.push_back(make_cell(pts[q].first, cfg.j, pts[q].second, vals[q], "lightcone"));
  }
  o.emit("correlate", grid);
  if (cfg.mode == "both") o.report() << "compared " << compared << " cells, max discrepancy " << worst << '\n';
  return kOk;
}

struct QuenchConfig {
  std::string state = "bell";
  int support = 1;
  double i = 0, j = 0;  ///< two-point positions
  double tmax = 3;
  std::uint64_t seed = 0;
  bool oracle_fallback = false;
  int L = 6;
};

inline PurifiedMPS load_state(const std::string& s) {
  if (s == "bell") return bell_state();
  if (s == "cnot-mixed") return cnot_mixed_state();
  return read_mps_file(s);
}

inline int cmd_quench(const GateTensor& g, const QuenchConfig& cfg, const Output& o) {
  const PurifiedMPS m = load_state(cfg.state);
  if (m.d != g.D) throw std::invalid_argument("quench: state and gate have different local dimensions");
  Rng rng(cfg.seed);
  const int nmax = layers_of(cfg.tmax);
  std::ostream& rep = o.report();
  rep.precision(6);
  bool solvable;
  if (cfg.support == 1) {
    const auto r = check_1pt_solvable(m, g);
    const bool l2 = check_l2(g).passed;
    solvable = r.passed && r.mirrored_passed && l2;
    for (const auto& [name, v] : r.residuals) rep << name << " residual " << v << '\n';
    rep << "gate level 2 " << (l2 ? "yes" : "no") << '\n';
  } else if (cfg.support == 2) {
    const auto r = check_2pt_solvable(m, g);
    solvable = r.passed;
    for (const auto& [name, v] : r.residuals) rep << name << " residual " << v << '\n';
    rep << "algebraic residual " << r.algebraic_residual << (r.verdicts_agree ? " (verdicts agree)" : " (verdicts differ)") << '\n';
  } else {
    throw std::invalid_argument("quench: support is 1 or 2");
  }
  rep << "solvable " << (solvable ? "yes" : "no") << '\n';
  CorrelatorGrid grid;
  if (solvable) {
    if (cfg.support == 1) {
      const CMatrix O = random_observable(g.D * g.D, rng);
      for (int n = 0; n <= nmax; ++n) grid.push_back(make_cell(0, 0, n, one_point_correlator(m, g, O, n / 2.0, false), "analytic"));
    } else {
      const Observable a = random_observable(g.D, 1, rng), b = random_observable(g.D, 1, rng);
      for (int n = 0; n <= nmax; ++n)
        grid.push_back(make_cell(cfg.i, cfg.j, n, two_point_quench(m, g, a, b, cfg.i, cfg.j, n / 2.0, false), "analytic"));
    }
  } else {
    if (!cfg.oracle_fallback) throw CheckFailed("quench: state is not solvable for this gate (use --oracle-fallback)");
    rep << "using the ring oracle with L = " << cfg.L << '\n';
    std::vector<PlacedOp> ops;
    if (cfg.support == 1) {
      ops.push_back({random_observable(g.D * g.D, rng), 1});
    } else {
      const Observable a = random_observable(g.D, 1, rng), b = random_observable(g.D, 1, rng);
      ops.push_back({a.op, mod(sites_of(cfg.i), 2 * cfg.L)});
      ops.push_back({b.op, mod(sites_of(cfg.j), 2 * cfg.L)});
    }
    const auto vals = quench_exact_purified(m, g, cfg.L, ops, nmax);
    for (int n = 0; n <= nmax; ++n)
      grid.push_back(make_cell(cfg.support == 1 ? 0 : cfg.i, cfg.support == 1 ? 0 : cfg.j, n, vals[n], "oracle"));
  }
  o.emit("quench", grid);
  return kOk;
}

inline Channel named_channel(const GateTensor& g, const std::string& which) {
  if (which == "Q") return build_Q(g);
  if (which == "R") return build_R(g);
  const auto ch = build_single_site_channels(g);
  if (which == "epsL") return ch.eps_L;
  if (which == "epsR") return ch.eps_R;
  if (which == "ML") return ch.M_L;
  if (which == "MR") return ch.M_R;
  throw std::invalid_argument("spectrum: channel is epsL, epsR, ML, MR, Q or R");
}

/// Defective zero eigenvalues come back from the dense solver near sqrt(eps), so the cut sits above that.
inline constexpr double kNonzeroEig = 1e-6;

inline int cmd_spectrum(const GateTensor& g, const std::string& which, std::ostream& out) {
  const Channel ch = named_channel(g, which);
  const std::vector<cplx> ev = spectrum(ch.m, 1 << 13);
  const Ergodicity e = ergodicity(ch);
  // identity sector: the eigenvalue removed as the identity eigenvector.
  std::size_t id = 0;
  for (std::size_t k = 1; k < ev.size(); ++k)
    if (std::abs(ev[k] - 1.0) < std::abs(ev[id] - 1.0)) id = k;
  out.precision(12);
  out << "index,modulus,re,im,sector\n";
  int nonzero = 0;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    if (std::abs(ev[k]) > kNonzeroEig) ++nonzero;
    out << k << ',' << std::abs(ev[k]) << ',' << ev[k].real() << ',' << ev[k].imag() << ',' << (k == id ? "identity" : "traceless") << '\n';
  }
  out << "# nonzero eigenvalues " << nonzero << '\n';
  out << "# largest traceless eigenvalue " << e.lambda.real() << ' ' << e.lambda.imag() << " modulus " << std::abs(e.lambda) << '\n';
  out << "# " << (e.ergodic ? "ergodic" : "non-ergodic") << '\n';
  return kOk;
}

/// Search specs are JSON: mode, level, side, D, fixed_J (array or null), nonvanishing_J,
/// j_margin, exclude_du, base (gate spec), start ("zero" for a start at the base),
/// init_noise, step.
inline std::pair<CostSpec, MinimizeOptions> search_spec_from_json(const json& j) {
  CostSpec s;
  MinimizeOptions opt;
  const std::string mode = j.value("mode", "qubit-params");
  if (mode == "qubit-params") s.mode = SearchMode::QubitParams;
  else if (mode == "clifford-theta") s.mode = SearchMode::CliffordTheta;
  else if (mode == "raw-unitary") s.mode = SearchMode::RawUnitary;
  else throw std::invalid_argument("search spec: unknown mode '" + mode + "'");
  s.level = j.value("level", 2);
  if (s.level < 1 || s.level > 3) throw std::invalid_argument("search spec: level is 1, 2 or 3");
  const auto side = parse_side(j.value("side", "both"));
  if (!side) throw std::invalid_argument("search spec: side is left, right or both");
  s.side = *side;
  s.D = j.value("D", 2);
  if (s.mode == SearchMode::QubitParams && s.D != 2) throw std::invalid_argument("search spec: qubit mode needs D = 2");
  if (j.contains("fixed_J")) {
    if (j.at("fixed_J").is_null()) s.fixed_J.reset();
    else s.fixed_J = j.at("fixed_J").get<std::array<double, 3>>();
  }
  s.nonvanishing_J = j.value("nonvanishing_J", false);
  s.j_margin = j.value("j_margin", s.j_margin);
  s.exclude_du = j.value("exclude_du", false);
  if (j.contains("base")) {
    const GateTensor b = load_gate(j.at("base").get<std::string>());
    if (b.D != s.D) throw std::invalid_argument("search spec: base gate has a different D");
    s.base = b.u;
  }
  if (j.value("start", "") == "zero") opt.start = std::vector<double>(parameter_count(s), 0.0);
  opt.init_noise = j.value("init_noise", 0.0);
  opt.step = j.value("step", opt.step);
  return {s, opt};
}

inline int cmd_search(const std::string& spec_path, std::uint64_t seed, int restarts, int budget, const Output& o) {
  std::ifstream f(spec_path);
  if (!f) throw std::invalid_argument("search: cannot open '" + spec_path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("search spec: ") + e.what());
  }
  auto [spec, opt] = search_spec_from_json(j);
  opt.seed = seed;
  opt.restarts = restarts;
  opt.budget = budget;
  const MinimizeResult r = minimize(spec, opt);
  std::ostream& rep = o.report();
  rep << search_record(spec, opt, r);
  const GateTensor best = gate_from_params(spec, r.x);
  const ConditionReport ver = check_level(best, spec.level, spec.side, false, 1e-4);
  rep << "reverify level " << spec.level << " residual " << ver.residual << (ver.passed ? " pass" : " fail") << '\n';
  rep << (r.found ? "found" : "not found") << " best cost " << r.cost << '\n';
  if (!o.dir.empty()) {
    std::filesystem::create_directories(o.dir);
    const auto path = std::filesystem::path(o.dir) / "search_gate.json";
    std::ofstream g(path);
    g << std::setprecision(17) << gate_to_json(best).dump(1) << '\n';
    std::ofstream rec(std::filesystem::path(o.dir) / "search_record.txt");
    rec << search_record(spec, opt, r);
    rep << "wrote " << path.string() << '\n';
  }
  return r.found ? kOk : kCheckFailed;
}

// ------------------------------------------------------------------ entry point

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"hierarchy circuit toolkit"};
  app.require_subcommand(1);
  std::string gate_spec, side_s = "both", mode, out_dir, channel = "Q", spec_file, state = "bell";
  std::optional<int> level;
  std::optional<double> ci;
  std::optional<std::uint64_t> seed;
  double tol = kDefaultTol, tmax = 3, j = 0, qi = 0;
  int L = 0, jobs = 1, support = 1, restarts = 10, budget = 4000;
  bool svg = false, fallback = false;

  auto add_common = [&](CLI::App* c, bool gate) {
    if (gate) c->add_option("--gate", gate_spec, "named:NAME[:D], family:KIND[:ARGS] or a JSON gate file")->required();
    c->add_option("--out", out_dir, "output directory");
    c->add_flag("--svg", svg, "also write SVG plots");
    c->add_option("--jobs", jobs, "parallel workers")->check(CLI::Range(1, 256));
  };
  auto* verify = app.add_subcommand("verify", "classify the hierarchy level of a gate");
  add_common(verify, true);
  verify->add_option("--level", level)->check(CLI::Range(1, 3));
  verify->add_option("--side", side_s);
  verify->add_option("--tol", tol);

  auto* corr = app.add_subcommand("correlate", "correlator grid from channels or the oracle");
  add_common(corr, true);
  corr->add_option("--support", support)->check(CLI::Range(1, 3));
  corr->add_option("--mode", mode, "channel, oracle, lightcone or both")->default_val("channel");
  corr->add_option("--i", ci);
  corr->add_option("--j", j);
  corr->add_option("--tmax", tmax);
  corr->add_option("--seed", seed);
  corr->add_option("--L", L);

  auto* quench = app.add_subcommand("quench", "quench from a solvable initial state");
  add_common(quench, true);
  quench->add_option("--state", state, "bell, cnot-mixed or an MPS file");
  quench->add_option("--support", support)->check(CLI::Range(1, 2));
  quench->add_option("--i", qi);
  quench->add_option("--j", j);
  quench->add_option("--tmax", tmax);
  quench->add_option("--seed", seed);
  quench->add_flag("--oracle-fallback", fallback);
  quench->add_option("--L", L);

  auto* spec = app.add_subcommand("spectrum", "eigenvalues of a channel");
  add_common(spec, true);
  spec->add_option("--channel", channel, "epsL, epsR, ML, MR, Q or R");

  auto* search = app.add_subcommand("search", "cost-function search for hierarchy gates");
  add_common(search, false);
  search->add_option("spec", spec_file, "JSON search spec")->required();
  search->add_option("--seed", seed);
  search->add_option("--restarts", restarts)->check(CLI::Range(1, 100000));
  search->add_option("--budget", budget)->check(CLI::Range(1, 100000000));

  auto* plot = app.add_subcommand("plot", "render an SVG from a correlator CSV");
  std::string csv_in;
  plot->add_option("csv", csv_in)->required();
  plot->add_option("--out", out_dir, "output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o1, o2;
    const int rc = app.exit(e, o1, o2);
    out << o1.str();
    err << o2.str();
    return rc == 0 ? kOk : kUsage;
  }
  Output o{out, err, out_dir, svg};
  auto need_seed = [&] {
    if (!seed) throw std::invalid_argument("--seed is required for randomized inputs");
    return *seed;
  };
  try {
    if (*plot) {
      std::ifstream f(csv_in);
      if (!f) throw std::invalid_argument("plot: cannot open '" + csv_in + "'");
      std::ofstream s(out_dir);
      s << render_svg(read_grid_csv(f));
      return kOk;
    }
    if (*search) return cmd_search(spec_file, need_seed(), restarts, budget, o);
    const GateTensor g = load_gate(gate_spec);
    if (*verify) {
      const auto side = parse_side(side_s);
      if (!side) throw std::invalid_argument("--side is left, right or both");
      return cmd_verify(g, level, *side, tol, out);
    }
    if (*corr) {
      CorrelateConfig c;
      c.support = support, c.mode = mode, c.i = ci, c.j = j, c.tmax = tmax, c.seed = need_seed(), c.L = L, c.jobs = jobs;
      return cmd_correlate(g, c, o);
    }
    if (*quench) {
      QuenchConfig c;
      c.state = state, c.support = support, c.i = qi, c.j = j, c.tmax = tmax, c.seed = need_seed();
      c.oracle_fallback = fallback;
      if (L > 0) c.L = L;
      return cmd_quench(g, c, o);
    }
    return cmd_spectrum(g, channel, out);
  } catch (const CheckFailed& e) {
    err << "check failed: " << e.what() << '\n';
    return kCheckFailed;
  } catch (const std::length_error& e) {
    err << "resource cap: " << e.what() << '\n';
    return kResourceCap;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace hier::cli
