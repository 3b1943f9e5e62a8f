#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "billiard.hpp"
#include "parallel.hpp"
#include "scatterer.hpp"

namespace lorentz {

// ---------------------------------------------------------------- observables

/// One additive term of an observable: coefficient times a basis function of (rho, theta),
/// applied on scatterers whose class matches the selector.
struct ObservableTerm {
  enum class Basis { value, cos, sin, band, rho };
  ClassSelector selector;
  Basis basis = Basis::value;
  double a = 0.0, b = 0.0;  ///< band limits in theta, or rho limits as a fraction of the perimeter
  double coef = 0.0;

  double eval(double rho_frac, double theta) const {
    switch (basis) {
      case Basis::value: return coef;
      case Basis::cos: return coef * std::cos(theta);
      case Basis::sin: return coef * std::sin(theta);
      case Basis::band: return theta >= a && theta < b ? coef : 0.0;
      case Basis::rho: return rho_frac >= a && rho_frac < b ? coef : 0.0;
    }
    return 0.0;
  }
};

/// Pattern-equivariant observable on scatterer boundaries: a sum of terms keyed by the pattern
/// class (at `depth`) of each scatterer's site.
struct ObservableSpec {
  double depth = 0.0;
  std::vector<ObservableTerm> terms;

  static ObservableSpec constant(double v) {
    ObservableSpec s;
    s.terms.push_back({{}, ObservableTerm::Basis::value, 0, 0, v});
    return s;
  }
};

inline ObservableSpec parse_observable_text(const std::string& text) {
  ObservableSpec g;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool have_depth = false;
  auto err = [&](const std::string& m) { return ParseError("observable line " + std::to_string(lineno) + ": " + m); };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = strip_comment(line);
    if (s.empty()) continue;
    if (starts_with(s, "depth")) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw err("expected depth = R");
      g.depth = parse_real(trim(s.substr(eq + 1)));
      have_depth = true;
      continue;
    }
    if (!starts_with(s, "class")) throw err("expected 'class <selector>: <basis> = <coefficient>'");
    const auto colon = s.find(':');
    const auto eq = s.rfind('=');
    if (colon == std::string::npos || eq == std::string::npos || eq < colon) throw err("expected 'class <selector>: <basis> = <coefficient>'");
    ObservableTerm t;
    const std::string sel = trim(s.substr(5, colon - 5));
    if (sel != "*") {
      for (const std::string& cond : split(sel, ',')) {
        const auto e = cond.find('=');
        if (e == std::string::npos) {
          t.selector.id = std::stoi(cond);
          continue;
        }
        const std::string key = trim(cond.substr(0, e));
        const int v = std::stoi(trim(cond.substr(e + 1)));
        if (key == "id") t.selector.id = v;
        else if (key == "proto") t.selector.proto = v;
        else if (key == "star") t.selector.star = v;
        else if (key == "size") t.selector.size = v;
        else throw err("unknown selector '" + key + "'");
      }
    }
    const std::string basis = trim(s.substr(colon + 1, eq - colon - 1));
    t.coef = parse_real(trim(s.substr(eq + 1)));
    auto range = [&](const std::string& b) {
      const auto o = b.find('('), c = b.rfind(')');
      if (o == std::string::npos || c == std::string::npos) throw err("expected (lo, hi)");
      const Vec2 p = parse_point(b.substr(o, c - o + 1));
      if (!(p.x < p.y)) throw err("empty range");
      return p;
    };
    if (basis == "value") t.basis = ObservableTerm::Basis::value;
    else if (basis == "cos") t.basis = ObservableTerm::Basis::cos;
    else if (basis == "sin") t.basis = ObservableTerm::Basis::sin;
    else if (starts_with(basis, "band")) {
      t.basis = ObservableTerm::Basis::band;
      const Vec2 p = range(basis);
      t.a = p.x, t.b = p.y;
    } else if (starts_with(basis, "rho")) {
      t.basis = ObservableTerm::Basis::rho;
      const Vec2 p = range(basis);
      t.a = p.x, t.b = p.y;
    } else {
      throw err("unknown basis '" + basis + "'");
    }
    g.terms.push_back(t);
  }
  if (!have_depth) throw ParseError("observable file must declare depth");
  return g;
}

inline ObservableSpec parse_observable_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open observable file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_observable_text(ss.str());
}

/// Transversally locally constant lift: the observable table reindexed by class id, plus the
/// class of every scatterer of the field.
struct TLCFunction {
  double depth = 0.0;
  std::shared_ptr<ClassRegistry> registry;
  std::vector<int> instance_class;
  std::vector<std::vector<ObservableTerm>> table;
  double offset = 0.0;

  double value(int cls, double rho_frac, double theta) const {
    double v = offset;
    if (cls >= 0)
      for (const ObservableTerm& t : table[cls]) v += t.eval(rho_frac, theta);
    return v;
  }
  double operator()(const ScattererField& f, const CollisionState& x) const {
    return value(instance_class[x.instance], x.rho / f.perimeter(x.instance), x.theta);
  }
  double max_abs() const {
    double m = 0.0;
    for (const auto& row : table) {
      double s = std::abs(offset);
      for (const ObservableTerm& t : row) s += std::abs(t.coef);
      m = std::max(m, s);
    }
    return table.empty() ? std::abs(offset) : m;
  }
  TLCFunction shifted(double c) const {
    TLCFunction h = *this;
    h.offset += c;
    return h;
  }
  TLCFunction scaled(double a) const {
    TLCFunction h = *this;
    h.offset *= a;
    for (auto& row : h.table)
      for (auto& t : row) t.coef *= a;
    return h;
  }
};

/// Pattern classes of every scatterer's site at the given depth (-1 where not classifiable).
inline std::pair<std::shared_ptr<ClassRegistry>, std::vector<int>> site_classes(const ScattererField& f, double depth) {
  auto reg = std::make_shared<ClassRegistry>(depth);
  std::vector<int> ids(f.instances.size(), -1);
  if (!f.patch) {
    // Explicit fields: one class per model.
    for (std::size_t m = 0; m < f.models.size(); ++m) {
      PatchKey k;
      k.fx = static_cast<std::int64_t>(m);
      reg->insert_or_get(k, static_cast<int>(m), 0);
    }
    for (std::size_t i = 0; i < f.instances.size(); ++i) ids[i] = f.instances[i].model;
    return {reg, ids};
  }
  if (depth == f.depth && f.classes) {
    for (std::size_t i = 0; i < f.instances.size(); ++i) ids[i] = f.instances[i].cls;
    return {f.classes, ids};
  }
  const Disk w = f.patch->window();
  for (std::size_t i = 0; i < f.instances.size(); ++i) {
    const Instance& in = f.instances[i];
    const Vec2 off = f.models[in.model].offset;
    if (norm(in.center - off - w.center) + depth > w.radius) continue;
    ids[i] = classify(*f.patch, {in.lattice, in.frac - off}, *reg).id;
  }
  const std::vector<int> remap = reg->canonicalize();
  for (int& id : ids)
    if (id >= 0) id = remap[id];
  return {reg, ids};
}

/// Lifts an observable to a table over realized classes. Every selector must match at least
/// one realized class.
inline TLCFunction lift_observable(const ScattererField& f, const ObservableSpec& g) {
  TLCFunction h;
  h.depth = g.depth;
  auto [reg, ids] = site_classes(f, g.depth);
  h.registry = reg;
  h.instance_class = std::move(ids);
  h.table.assign(reg->size(), {});
  std::vector<bool> used(g.terms.size(), false);
  for (std::size_t c = 0; c < reg->size(); ++c) {
    const PatternClass& pc = reg->at(static_cast<int>(c));
    for (std::size_t k = 0; k < g.terms.size(); ++k)
      if (g.terms[k].selector.matches(pc)) {
        h.table[c].push_back(g.terms[k]);
        used[k] = true;
      }
  }
  for (std::size_t k = 0; k < g.terms.size(); ++k)
    if (!used[k]) throw UnrealizedClass("observable term " + std::to_string(k) + " matches no realized pattern class");
  return h;
}

// ---------------------------------------------------------------- planar averages

/// Angular intervals (radians from the chart basepoint, within [0, 2 pi)) of the circle
/// (c, r) lying inside the disk (z, T).
inline std::vector<std::pair<double, double>> arcs_inside(Vec2 c, double r, Vec2 z, double T) {
  const double d = norm(c - z);
  if (d + r <= T) return {{0.0, kTwoPi}};
  if (d >= T + r || r >= T + d) return {};
  const double kappa = (T * T - d * d - r * r) / (2.0 * r * d);
  if (kappa <= -1.0) return {};
  if (kappa >= 1.0) return {{0.0, kTwoPi}};
  // |c + r e(phi) - z|^2 = d^2 + r^2 + 2 r d cos(phi - alpha) with alpha the direction of c - z.
  const double alpha = std::atan2(c.y - z.y, c.x - z.x);
  const double w = std::acos(kappa);
  double lo = wrap_angle(alpha + w);
  double hi = lo + (kTwoPi - 2.0 * w);
  if (hi <= kTwoPi) return {{lo, hi}};
  return {{lo, kTwoPi}, {0.0, hi - kTwoPi}};
}

namespace detail {

inline double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

/// Integral of a term over an arc (angles in radians on a circle of radius r) against
/// d rho cos(theta) d theta.
inline double term_integral(const ObservableTerm& t, double r, double phi0, double phi1) {
  const double len = r * (phi1 - phi0);
  switch (t.basis) {
    case ObservableTerm::Basis::value: return t.coef * 2.0 * len;
    case ObservableTerm::Basis::cos: return t.coef * (kPi / 2.0) * len;
    case ObservableTerm::Basis::sin: return 0.0;
    case ObservableTerm::Basis::band: {
      const double a = std::clamp(t.a, -kHalfPi, kHalfPi), b = std::clamp(t.b, -kHalfPi, kHalfPi);
      return t.coef * (std::sin(b) - std::sin(a)) * len;
    }
    case ObservableTerm::Basis::rho: return t.coef * 2.0 * r * overlap(phi0, phi1, kTwoPi * t.a, kTwoPi * t.b);
  }
  return 0.0;
}

}  // namespace detail

/// Unnormalized integral of h over the scatterer boundaries inside B_T(z) against
/// d rho cos(theta) d theta, by exact arc clipping and closed-form theta integrals.
inline double boundary_integral(const ScattererField& f, const TLCFunction& h, Vec2 z, double T) {
  if (!f.certified.contains_disk(z, T)) throw PreconditionViolation("averaging disk leaves the certified region");
  std::vector<int> near;
  f.visit_near(z, T + f.max_radius(), [&](int j) { near.push_back(j); });
  std::sort(near.begin(), near.end());
  near.erase(std::unique(near.begin(), near.end()), near.end());
  std::vector<double> parts;
  parts.reserve(near.size());
  for (int i : near) {
    const double r = f.radius(i);
    double s = 0.0;
    for (auto [p0, p1] : arcs_inside(f.instances[i].center, r, z, T)) {
      s += h.offset * 2.0 * r * (p1 - p0);
      const int cls = h.instance_class[i];
      if (cls < 0) throw WindowTooSmall("observable class undetermined inside the averaging disk");
      for (const ObservableTerm& t : h.table[cls]) s += detail::term_integral(t, r, p0, p1);
    }
    if (s != 0.0) parts.push_back(s);
  }
  return pairwise_sum(parts);
}

inline double planar_average(const ScattererField& f, const TLCFunction& h, Vec2 z, double T) {
  return boundary_integral(f, h, z, T) / (kPi * T * T);
}

struct PlanarAverageTable {
  std::vector<Vec2> centers;
  std::vector<double> radii;
  /// values[t][k]: average over B_{radii[t]}(centers[k]).
  std::vector<std::vector<double>> values;
  /// Largest |value - mean over centers| at each radius.
  std::vector<double> spread;
  double beta = 0.0;  ///< mean over centers at the largest radius
};

inline PlanarAverageTable planar_average_table(const ScattererField& f, const TLCFunction& h, const std::vector<Vec2>& centers,
                                               const std::vector<double>& radii) {
  PlanarAverageTable t;
  t.centers = centers;
  t.radii = radii;
  for (double T : radii) {
    std::vector<double> row;
    for (Vec2 z : centers) row.push_back(planar_average(f, h, z, T));
    const double mean = pairwise_sum(row) / static_cast<double>(row.size());
    double sp = 0.0;
    for (double v : row) sp = std::max(sp, std::abs(v - mean));
    t.values.push_back(row);
    t.spread.push_back(sp);
    t.beta = mean;
  }
  return t;
}

/// Gauss-Legendre nodes and weights on [-1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double pn = n == 1 ? z : p1;
      const double pm = n == 1 ? 1.0 : p0;
      dp = n * (z * pn - pm) / (z * z - 1.0);
      const double dz = pn / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[n - 1 - i] = z;
    w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

struct QuadratureOptions {
  double rho_spacing = 0.05;
  int theta_nodes = 32;
  unsigned workers = 1;
};

struct QuadratureResult {
  double integral = 0.0;
  std::size_t nodes = 0;
  std::size_t dropped = 0;  ///< nodes whose orbit hit a tangency (measure zero)
};

/// Integral over B_T(z) of fn(state) d rho cos(theta) d theta with midpoint nodes in rho along
/// each clipped arc and Gauss-Legendre nodes in theta. fn may throw Singularity (node dropped).
inline QuadratureResult boundary_quadrature(const ScattererField& f, const std::function<double(const CollisionState&)>& fn, Vec2 z,
                                            double T, const QuadratureOptions& opt = {}) {
  if (!f.certified.contains_disk(z, T)) throw PreconditionViolation("averaging disk leaves the certified region");
  std::vector<int> near;
  f.visit_near(z, T + f.max_radius(), [&](int j) { near.push_back(j); });
  std::sort(near.begin(), near.end());
  near.erase(std::unique(near.begin(), near.end()), near.end());
  const auto [gx, gw] = gauss_legendre(opt.theta_nodes);
  constexpr std::size_t chunk = 64;
  const std::size_t n_chunks = (near.size() + chunk - 1) / chunk;
  std::vector<double> sums(n_chunks, 0.0);
  std::vector<std::size_t> counts(n_chunks, 0), drops(n_chunks, 0);
  parallel_chunks(n_chunks, opt.workers, [&](std::size_t c) {
    std::vector<double> parts;
    for (std::size_t k = c * chunk; k < std::min(near.size(), (c + 1) * chunk); ++k) {
      const int i = near[k];
      const double r = f.radius(i);
      for (auto [p0, p1] : arcs_inside(f.instances[i].center, r, z, T)) {
        const double len = r * (p1 - p0);
        const int m = std::max(1, static_cast<int>(std::ceil(len / opt.rho_spacing)));
        const double h = len / m;
        for (int a = 0; a < m; ++a) {
          const double rho = r * p0 + (a + 0.5) * h;
          for (int b = 0; b < opt.theta_nodes; ++b) {
            const double th = kHalfPi * gx[b];
            CollisionState x{i, wrap_period(rho, kTwoPi * r), f.instances[i].address, th};
            ++counts[c];
            try {
              parts.push_back(fn(x) * std::cos(th) * kHalfPi * gw[b] * h);
            } catch (const Singularity&) {
              ++drops[c];
            }
          }
        }
      }
    }
    sums[c] = pairwise_sum(parts);
  });
  QuadratureResult q;
  q.integral = pairwise_sum(sums);
  for (std::size_t c = 0; c < n_chunks; ++c) q.nodes += counts[c], q.dropped += drops[c];
  return q;
}

/// Total boundary length per unit area of the scatterers centered in a disk.
inline double perimeter_density(const ScattererField& f, Disk d) {
  std::vector<double> p;
  for (std::size_t i = 0; i < f.instances.size(); ++i)
    if (d.contains(f.instances[i].center)) p.push_back(f.perimeter(static_cast<int>(i)));
  return pairwise_sum(p) / (kPi * d.radius * d.radius);
}

// ---------------------------------------------------------------- Monte Carlo

struct MCEstimate {
  double mean = 0.0;
  double sigma = 0.0;
  std::size_t used = 0;
  std::size_t dropped = 0;
};

/// Largest admissible singular-drop fraction for Monte Carlo estimates.
inline constexpr double kMaxDropRate = 1e-3;

/// Mean of h1(f^n x) h2(x) over samples of the normalized invariant measure. Singular orbits
/// are dropped and counted; more than 0.1% drops is an error.
inline std::vector<MCEstimate> mu_bar_inner_products(const ScattererField& f, const TLCFunction& h1, const TLCFunction& h2,
                                                     const std::vector<int>& n_list, const std::vector<CollisionState>& samples,
                                                     unsigned workers = 1) {
  const int n_max = n_list.empty() ? 0 : *std::max_element(n_list.begin(), n_list.end());
  const std::size_t N = samples.size();
  std::vector<std::vector<double>> vals(n_list.size(), std::vector<double>(N, 0.0));
  std::vector<char> ok(N, 1);
  constexpr std::size_t chunk = 1024;
  parallel_chunks((N + chunk - 1) / chunk, workers, [&](std::size_t c) {
    for (std::size_t s = c * chunk; s < std::min(N, (c + 1) * chunk); ++s) {
      CollisionState x = samples[s];
      const double b = h2(f, x);
      try {
        for (int n = 0; n <= n_max; ++n) {
          if (n > 0) x = collision_map(f, x).to;
          for (std::size_t k = 0; k < n_list.size(); ++k)
            if (n_list[k] == n) vals[k][s] = h1(f, x) * b;
        }
      } catch (const Singularity&) {
        ok[s] = 0;
      }
    }
  });
  std::vector<MCEstimate> out;
  std::size_t dropped = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 0));
  if (N > 0 && static_cast<double>(dropped) > kMaxDropRate * static_cast<double>(N))
    throw DegenerateField("singular drop rate " + fmt_real(static_cast<double>(dropped) / N) + " exceeds 0.1%");
  for (std::size_t k = 0; k < n_list.size(); ++k) {
    std::vector<double> v;
    v.reserve(N);
    for (std::size_t s = 0; s < N; ++s)
      if (ok[s]) v.push_back(vals[k][s]);
    const MeanSigma ms = mean_sigma(v);
    out.push_back({ms.mean, ms.sigma, v.size(), dropped});
  }
  return out;
}

inline MCEstimate mu_bar_inner_product(const ScattererField& f, const TLCFunction& h1, const TLCFunction& h2, int n,
                                       const std::vector<CollisionState>& samples, unsigned workers = 1) {
  return mu_bar_inner_products(f, h1, h2, {n}, samples, workers).front();
}

/// Kendall rank correlation (tau-b) with a two-sided normal-approximation p-value.
struct KendallResult {
  double tau = 0.0;
  double z = 0.0;
  double p_two_sided = 1.0;
  double p_less = 1.0;  ///< one-sided p for tau < 0
};

inline KendallResult kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  long long conc = 0, disc = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = x[j] - x[i], b = y[j] - y[i];
      if (a == 0 && b == 0) continue;
      if (a == 0) ++tx;
      else if (b == 0) ++ty;
      else if ((a > 0) == (b > 0)) ++conc;
      else ++disc;
    }
  KendallResult r;
  const double n0 = static_cast<double>(conc + disc);
  const double denom = std::sqrt((n0 + tx) * (n0 + ty));
  r.tau = denom > 0 ? (conc - disc) / denom : 0.0;
  const double nn = static_cast<double>(n);
  const double var = (2.0 * (2.0 * nn + 5.0)) / (9.0 * nn * (nn - 1.0));
  r.z = n > 1 ? r.tau / std::sqrt(var) : 0.0;
  r.p_two_sided = std::erfc(std::abs(r.z) / std::sqrt(2.0));
  r.p_less = 0.5 * std::erfc(-r.z / std::sqrt(2.0));
  return r;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::log(x[i]), b = std::log(y[i]);
    sx += a, sy += b, sxx += a * a, sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------- mixing

struct CorrelationResult {
  int n = 0;
  double T = 0.0;
  double raw = 0.0;         ///< left side: planar quadrature of (g1 o F^n) g2 over B_T
  double normalized = 0.0;  ///< raw / Vol(B_T)
  double sigma = 0.0;       ///< Monte Carlo sigma of the invariant-measure side (mass units)
  double mc = 0.0;          ///< invariant-measure side in mass units (probability mean x 2 x perimeter density)
  double mc_probability = 0.0;
  double beta1 = 0.0, beta2 = 0.0;
  double residual = 0.0;    ///< normalized - mc
};

struct MixingOptions {
  std::vector<int> n_list;
  std::vector<double> T_list;
  Vec2 center;
  /// T values for which the left side is computed by quadrature (may be empty).
  QuadratureOptions quadrature;
  unsigned workers = 1;
};

/// Both sides of the correlation identity: the planar quadrature of (g1 o F^n) g2 over B_T(z) and
/// Vol(B_T) times the invariant-measure inner product. mass_scale converts probability means
/// to mass per unit area (2 x perimeter density).
inline std::vector<CorrelationResult> mixing_experiment(const ScattererField& f, const TLCFunction& h1, const TLCFunction& h2,
                                                        const std::vector<CollisionState>& samples, double mass_scale,
                                                        const MixingOptions& opt) {
  const auto mc = mu_bar_inner_products(f, h1, h2, opt.n_list, samples, opt.workers);
  std::vector<CorrelationResult> out;
  for (double T : opt.T_list) {
    const double vol = kPi * T * T;
    const double b1 = planar_average(f, h1, opt.center, T);
    const double b2 = planar_average(f, h2, opt.center, T);
    for (std::size_t k = 0; k < opt.n_list.size(); ++k) {
      const int n = opt.n_list[k];
      CorrelationResult r;
      r.n = n;
      r.T = T;
      r.beta1 = b1;
      r.beta2 = b2;
      const auto fn = [&](const CollisionState& x0) {
        CollisionState x = x0;
        const double b = h2(f, x);
        if (b == 0.0) return 0.0;
        for (int j = 0; j < n; ++j) x = collision_map(f, x).to;
        return h1(f, x) * b;
      };
      QuadratureOptions q = opt.quadrature;
      q.workers = opt.workers;
      r.raw = boundary_quadrature(f, fn, opt.center, T, q).integral;
      r.normalized = r.raw / vol;
      r.mc_probability = mc[k].mean;
      r.mc = mc[k].mean * mass_scale;
      r.sigma = mc[k].sigma * mass_scale;
      r.residual = r.normalized - r.mc;
      out.push_back(r);
    }
  }
  return out;
}

// ---------------------------------------------------------------- flights and flow averages

inline MCEstimate mean_free_flight(const ScattererField& f, const std::vector<CollisionState>& samples, unsigned workers = 1) {
  const std::size_t N = samples.size();
  std::vector<double> tau(N, 0.0);
  std::vector<char> ok(N, 1);
  constexpr std::size_t chunk = 1024;
  parallel_chunks((N + chunk - 1) / chunk, workers, [&](std::size_t c) {
    for (std::size_t s = c * chunk; s < std::min(N, (c + 1) * chunk); ++s) {
      try {
        tau[s] = collision_map(f, samples[s]).tau;
      } catch (const Singularity&) {
        ok[s] = 0;
      }
    }
  });
  std::vector<double> v;
  for (std::size_t s = 0; s < N; ++s)
    if (ok[s]) v.push_back(tau[s]);
  const MeanSigma ms = mean_sigma(v);
  return {ms.mean, ms.sigma, v.size(), N - v.size()};
}

struct FlowAverage {
  double T = 0.0;
  double time_integral = 0.0;   ///< integral of g o phi_t over [0, T]
  double collision_sum = 0.0;   ///< sum of the flight integrand over completed flights
  double partial = 0.0;         ///< contribution of the last, incomplete flight
  int collisions = 0;
  double time_average() const { return time_integral / T; }
};

/// Time integral over [0, T] of the flight integrand of h: along the flight leaving state x the
/// observable equals h(x). Starts at a collision state.
inline FlowAverage flow_average(const ScattererField& f, const TLCFunction& h, CollisionState x, double T) {
  FlowAverage a;
  a.T = T;
  double L = 0.0;
  std::vector<double> parts;
  for (;;) {
    const FlightEvent ev = collision_map(f, x);
    const double v = h(f, x);
    if (L + ev.tau > T) {
      a.partial = v * (T - L);
      break;
    }
    parts.push_back(v * ev.tau);
    L += ev.tau;
    x = ev.to;
    ++a.collisions;
  }
  a.collision_sum = pairwise_sum(parts);
  a.time_integral = a.collision_sum + a.partial;
  return a;
}

/// Time estimator of the mean free flight: T / k(T) along the flow from x.
inline double flight_time_estimator(const ScattererField& f, CollisionState x, double T) {
  double L = 0.0;
  long k = 0;
  for (;;) {
    const FlightEvent ev = collision_map(f, x);
    if (L + ev.tau > T) break;
    L += ev.tau;
    x = ev.to;
    ++k;
  }
  return T / static_cast<double>(std::max<long>(k, 1));
}

// ---------------------------------------------------------------- deviation spectrum

struct SpectrumEntry {
  std::complex<double> eigenvalue;
  double modulus = 0.0;
  double exponent = 0.0;  ///< 2 log|lambda| / log lambda_1
  int jordan = 1;         ///< size of the largest Jordan block for this eigenvalue
  int multiplicity = 1;   ///< algebraic multiplicity
};

struct DeviationSpectrum {
  std::vector<SpectrumEntry> entries;  ///< distinct eigenvalues by decreasing modulus
  double perron = 0.0;
  int d_plus = 0;
  /// Largest exponent below the Perron one (the volume term), or -inf if none.
  double subleading() const {
    double s = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < entries.size(); ++i) s = std::max(s, entries[i].exponent);
    return s;
  }
};

inline DeviationSpectrum deviation_spectrum(const std::vector<std::vector<long long>>& R) {
  const int n = static_cast<int>(R.size());
  if (!is_primitive(R)) throw NonPrimitive("substitution matrix is not primitive");
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = static_cast<double>(R[i][j]);
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  std::vector<std::complex<double>> ev(es.eigenvalues().data(), es.eigenvalues().data() + n);
  // Snap near-integers and tiny imaginary parts (integer matrices often have integer spectra).
  for (auto& z : ev) {
    double re = z.real(), im = z.imag();
    if (std::abs(im) < 1e-9) im = 0.0;
    if (std::abs(re - std::round(re)) < 1e-9) re = std::round(re);
    z = {re, im};
  }
  std::sort(ev.begin(), ev.end(), [](auto a, auto b) {
    if (std::abs(std::abs(a) - std::abs(b)) > 1e-9) return std::abs(a) > std::abs(b);
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  DeviationSpectrum d;
  d.perron = ev.front().real();
  const double logp = std::log(d.perron);
  Eigen::MatrixXcd Mc = M.cast<std::complex<double>>();
  for (std::size_t i = 0; i < ev.size();) {
    std::size_t j = i;
    while (j < ev.size() && std::abs(ev[j] - ev[i]) < 1e-6) ++j;
    SpectrumEntry e;
    e.eigenvalue = ev[i];
    e.modulus = std::abs(ev[i]);
    e.exponent = e.modulus > 0 ? 2.0 * std::log(e.modulus) / logp : -std::numeric_limits<double>::infinity();
    e.multiplicity = static_cast<int>(j - i);
    // Largest Jordan block: smallest k with rank (M - lambda)^k = n - multiplicity.
    const Eigen::MatrixXcd A = Mc - ev[i] * Eigen::MatrixXcd::Identity(n, n);
    Eigen::MatrixXcd P = A;
    e.jordan = 1;
    for (int k = 1; k <= e.multiplicity; ++k) {
      Eigen::FullPivLU<Eigen::MatrixXcd> lu(P);
      lu.setThreshold(1e-8);
      if (lu.rank() == n - e.multiplicity) {
        e.jordan = k;
        break;
      }
      P = P * A;
      e.jordan = k + 1;
    }
    d.entries.push_back(e);
    i = j;
  }
  for (const SpectrumEntry& e : d.entries)
    if (e.exponent > 1.0 + 1e-12) d.d_plus += e.multiplicity;
  return d;
}

struct DeviationFit {
  std::vector<double> radii;
  std::vector<double> rms;  ///< RMS over centers of |integral over B_T - Vol(B_T) beta|
  double slope = 0.0;
};

/// RMS deviation of ergodic integrals of a (centered) observable over disks with the given
/// centers, and its log-log slope in T.
inline DeviationFit deviation_fit(const ScattererField& f, const TLCFunction& h, double beta, const std::vector<Vec2>& centers,
                                  const std::vector<double>& radii) {
  DeviationFit fit;
  fit.radii = radii;
  for (double T : radii) {
    std::vector<double> sq;
    for (Vec2 z : centers) {
      const double dev = boundary_integral(f, h, z, T) - kPi * T * T * beta;
      sq.push_back(dev * dev);
    }
    fit.rms.push_back(std::sqrt(pairwise_sum(sq) / static_cast<double>(sq.size())));
  }
  fit.slope = loglog_slope(fit.radii, fit.rms);
  return fit;
}

}  // namespace lorentz
