#pragma once

#include <algorithm>
#include <array>
#include <tuple>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geometry.hpp"
#include "patch.hpp"
#include "textio.hpp"

namespace lorentz {

/// Circular model scatterer: radius and center offset from the site.
struct CircleModel {
  double radius = 0.0;
  Vec2 offset;
  bool operator==(const CircleModel&) const = default;
};

/// Point of an arclength chart.
struct ChartPoint {
  Vec2 point;
  Vec2 tangent;
  Vec2 normal;
  double curvature = 0.0;
};

inline ChartPoint circle_chart(Vec2 center, double r, double rho) {
  const double phi = rho / r;
  const Vec2 n{std::cos(phi), std::sin(phi)};
  return {center + n * r, rot90(n), n, 1.0 / r};
}

/// Strictly convex closed curve given by a periodic cubic-spline support function p(phi):
/// point = p n + p' t, radius of curvature p + p''. Curvature is continuous at knots.
class SplineScatterer {
 public:
  explicit SplineScatterer(std::vector<double> support) : p_(std::move(support)) {
    const int n = static_cast<int>(p_.size());
    if (n < 4) throw PreconditionViolation("spline needs at least 4 knots");
    h_ = kTwoPi / n;
    // Periodic cubic spline: second derivatives m solve m[k-1] + 4 m[k] + m[k+1] = 6 (p[k-1] - 2 p[k] + p[k+1]) / h^2.
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b(n);
    for (int k = 0; k < n; ++k) {
      A(k, k) = 4.0;
      A(k, (k + 1) % n) += 1.0;
      A(k, (k + n - 1) % n) += 1.0;
      b(k) = 6.0 * (p_[(k + n - 1) % n] - 2.0 * p_[k] + p_[(k + 1) % n]) / (h_ * h_);
    }
    const Eigen::VectorXd m = A.partialPivLu().solve(b);
    m_.assign(m.data(), m.data() + n);
    arc_.assign(n + 1, 0.0);
    for (int k = 0; k < n; ++k) {
      // Radius of curvature is a cubic in phi on each piece: Simpson is exact.
      const double a = k * h_;
      const double r0 = curvature_radius(a), r1 = curvature_radius(a + 0.5 * h_), r2 = curvature_radius(a + h_ * (1 - 1e-15));
      arc_[k + 1] = arc_[k] + h_ / 6.0 * (r0 + 4.0 * r1 + r2);
    }
    for (int k = 0; k < n; ++k)
      for (int j = 0; j <= 16; ++j)
        if (curvature_radius(k * h_ + j * h_ / 16) <= 0.0) throw PreconditionViolation("spline scatterer is not strictly convex");
  }

  double perimeter() const { return arc_.back(); }

  /// Support function and its first two derivatives at phi.
  std::array<double, 3> support(double phi) const {
    phi = wrap_period(phi, kTwoPi);
    const int n = static_cast<int>(p_.size());
    int k = std::min(static_cast<int>(phi / h_), n - 1);
    const double t = phi - k * h_;
    const double u = h_ - t;
    const double p0 = p_[k], p1 = p_[(k + 1) % n], m0 = m_[k], m1 = m_[(k + 1) % n];
    const double v = (m0 * u * u * u + m1 * t * t * t) / (6 * h_) + (p0 / h_ - m0 * h_ / 6) * u + (p1 / h_ - m1 * h_ / 6) * t;
    const double d1 = (-m0 * u * u + m1 * t * t) / (2 * h_) - (p0 / h_ - m0 * h_ / 6) + (p1 / h_ - m1 * h_ / 6);
    const double d2 = (m0 * u + m1 * t) / h_;
    return {v, d1, d2};
  }

  double curvature_radius(double phi) const {
    const auto s = support(phi);
    return s[0] + s[2];
  }

  /// Arclength from the basepoint (phi = 0) to phi in [0, 2 pi).
  double arclength(double phi) const {
    phi = wrap_period(phi, kTwoPi);
    const int n = static_cast<int>(p_.size());
    const int k = std::min(static_cast<int>(phi / h_), n - 1);
    const double a = k * h_, t = phi - a;
    const double r0 = curvature_radius(a), r1 = curvature_radius(a + 0.5 * t), r2 = curvature_radius(phi);
    return arc_[k] + t / 6.0 * (r0 + 4.0 * r1 + r2);
  }

  /// Chart at arclength rho measured counterclockwise from the basepoint.
  ChartPoint chart(double rho) const {
    rho = wrap_period(rho, perimeter());
    const auto it = std::upper_bound(arc_.begin(), arc_.end(), rho);
    const int k = std::clamp(static_cast<int>(it - arc_.begin()) - 1, 0, static_cast<int>(p_.size()) - 1);
    double lo = k * h_, hi = (k + 1) * h_;
    double phi = 0.5 * (lo + hi);
    for (int i = 0; i < 100; ++i) {
      const double f = arclength(phi) - rho;
      if (f > 0) hi = phi;
      else lo = phi;
      double next = phi - f / curvature_radius(phi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - phi) < 1e-15) {
        phi = next;
        break;
      }
      phi = next;
    }
    const auto s = support(phi);
    const Vec2 n{std::cos(phi), std::sin(phi)};
    const Vec2 t = rot90(n);
    return {n * s[0] + t * s[1], t, n, 1.0 / (s[0] + s[2])};
  }

  /// Largest jump of curvature across knots (zero up to rounding for a cubic spline).
  double curvature_jump_at_knots() const {
    double worst = 0.0;
    for (std::size_t k = 0; k < p_.size(); ++k) {
      const double a = k * h_;
      worst = std::max(worst, std::abs(1.0 / curvature_radius(a - 1e-12) - 1.0 / curvature_radius(a + 1e-12)));
    }
    return worst;
  }

  double min_curvature() const { return extreme_curvature(true); }
  double max_curvature() const { return extreme_curvature(false); }

 private:
  std::vector<double> p_, m_, arc_;
  double h_ = 0.0;

  double extreme_curvature(bool min) const {
    double v = min ? std::numeric_limits<double>::infinity() : 0.0;
    for (int j = 0; j < 64 * static_cast<int>(p_.size()); ++j) {
      const double k = 1.0 / curvature_radius(j * h_ / 64);
      v = min ? std::min(v, k) : std::max(v, k);
    }
    return v;
  }
};

/// Selector over pattern classes. All listed conditions must hold.
struct ClassSelector {
  std::optional<int> id, proto, star, size;

  bool matches(const PatternClass& c) const {
    if (id && *id != c.id) return false;
    if (proto && *proto != c.owner_proto) return false;
    if (star && *star != c.star) return false;
    if (size && *size != static_cast<int>(c.canonical.tiles.size())) return false;
    return true;
  }
};

/// Map from pattern classes at a declared depth to model scatterers (first matching rule wins).
struct Assignment {
  double depth = 0.0;
  struct Rule {
    ClassSelector selector;
    std::optional<CircleModel> model;
  };
  std::vector<Rule> rules;

  std::optional<CircleModel> lookup(const PatternClass& c) const {
    for (const Rule& r : rules)
      if (r.selector.matches(c)) return r.model;
    return std::nullopt;
  }

  static Assignment constant(double depth, double radius) {
    Assignment a;
    a.depth = depth;
    a.rules.push_back({{}, CircleModel{radius, {0, 0}}});
    return a;
  }
};

inline Assignment parse_assignment_text(const std::string& text) {
  Assignment a;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool have_depth = false;
  auto err = [&](const std::string& m) { return ParseError("assignment line " + std::to_string(lineno) + ": " + m); };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = strip_comment(line);
    if (s.empty()) continue;
    if (starts_with(s, "depth")) {
      const auto eq = s.find('=');
      a.depth = parse_real(trim(s.substr(eq == std::string::npos ? 5 : eq + 1)));
      if (a.depth < 0) throw err("depth must be >= 0");
      have_depth = true;
      continue;
    }
    if (!starts_with(s, "class")) throw err("expected 'class <selector> -> ...'");
    const auto arrow = s.find("->");
    if (arrow == std::string::npos) throw err("missing '->'");
    const std::string sel = trim(s.substr(5, arrow - 5));
    const std::string rhs = trim(s.substr(arrow + 2));
    Assignment::Rule rule;
    if (sel != "*") {
      for (const std::string& cond : split(sel, ',')) {
        const auto eq = cond.find('=');
        if (eq == std::string::npos) {
          rule.selector.id = std::stoi(cond);
          continue;
        }
        const std::string key = trim(cond.substr(0, eq));
        const int v = std::stoi(trim(cond.substr(eq + 1)));
        if (key == "id") rule.selector.id = v;
        else if (key == "proto") rule.selector.proto = v;
        else if (key == "star") rule.selector.star = v;
        else if (key == "size") rule.selector.size = v;
        else throw err("unknown selector '" + key + "'");
      }
    }
    if (rhs == "none") {
      a.rules.push_back(rule);
      continue;
    }
    if (!starts_with(rhs, "circle")) throw err("expected 'circle r=... [offset=(dx,dy)]' or 'none'");
    CircleModel m;
    bool have_r = false;
    std::string rest = trim(rhs.substr(6));
    while (!rest.empty()) {
      const auto eq = rest.find('=');
      if (eq == std::string::npos) throw err("bad circle parameters");
      const std::string key = trim(rest.substr(0, eq));
      std::string val;
      std::size_t used;
      const std::string after = trim(rest.substr(eq + 1));
      if (!after.empty() && after.front() == '(') {
        used = after.find(')');
        if (used == std::string::npos) throw err("unclosed offset");
        val = after.substr(0, used + 1);
        ++used;
      } else {
        used = after.find_first_of(" \t");
        if (used == std::string::npos) used = after.size();
        val = after.substr(0, used);
      }
      rest = trim(after.substr(used));
      if (key == "r") {
        m.radius = parse_real(val);
        have_r = true;
      } else if (key == "offset") {
        m.offset = parse_point(val);
      } else {
        throw err("unknown circle parameter '" + key + "'");
      }
    }
    if (!have_r || !(m.radius > 0)) throw err("circle needs r > 0");
    rule.model = m;
    a.rules.push_back(rule);
  }
  if (!have_depth) throw ParseError("assignment file must declare depth");
  return a;
}

inline Assignment parse_assignment_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open assignment file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_assignment_text(ss.str());
}

/// A placed scatterer. The center is plane(lattice) + frac; relative positions of two
/// instances are computed from lattice differences so equivalent configurations give
/// bit-identical geometry.
struct Instance {
  LatticeVec lattice;
  Vec2 frac;
  Vec2 center;      ///< patch coordinates
  int model = 0;    ///< index into ScattererField::models
  int cls = -1;     ///< pattern class at the assignment depth
  int address = -1; ///< pattern class at the transversal (address) depth; -1 if undetermined
};

struct CategoryACertificate {
  enum class Method { verified_by_sweep, counterexample_found };
  double M = 0.0;
  double tau_min = 0.0;
  double sep_min = 0.0;
  double K_min = 0.0;
  double K_max = 0.0;
  Method method = Method::verified_by_sweep;
  double longest_chord = 0.0;
  int n_directions = 0;
  double offset_spacing = 0.0;
  double margin = 0.05;
  double neighborhood = 0.0;
  std::size_t representatives = 0;
  std::size_t rays = 0;
  // Witness of an unobstructed ray when a counterexample is found.
  Vec2 witness_anchor;
  Vec2 witness_direction;

  bool verified() const { return method == Method::verified_by_sweep; }
  double Lambda() const { return 1.0 + 2.0 * tau_min * K_min; }

  std::string report() const {
    std::ostringstream o;
    o << "method=" << (verified() ? "verified-by-sweep" : "counterexample-found") << "\n";
    o << "M=" << fmt_real(M) << "\ntau_min=" << fmt_real(tau_min) << "\nsep_min=" << fmt_real(sep_min) << "\nK_min=" << fmt_real(K_min)
      << "\nK_max=" << fmt_real(K_max) << "\nlongest_chord=" << fmt_real(longest_chord) << "\nn_directions=" << n_directions
      << "\noffset_spacing=" << fmt_real(offset_spacing) << "\nmargin=" << fmt_real(margin) << "\n";
    if (!verified())
      o << "witness_anchor=(" << fmt_real(witness_anchor.x) << "," << fmt_real(witness_anchor.y) << ")\nwitness_direction=("
        << fmt_real(witness_direction.x) << "," << fmt_real(witness_direction.y) << ")\n";
    return o.str();
  }
};

/// Equivariant scatterer configuration over a patch (or an explicit instance list).
class ScattererField {
 public:
  std::shared_ptr<const PatchRegion> patch;  ///< null for explicit fields
  LatticeBasis lattice;
  double depth = 0.0;
  double address_depth = 0.0;
  std::vector<CircleModel> models;
  std::vector<Instance> instances;
  std::shared_ptr<ClassRegistry> classes;
  std::shared_ptr<ClassRegistry> addresses;
  Disk populated;
  /// Region in which dynamics is certified; collisions outside it raise RegionExit.
  Disk certified;
  /// Upper bound on flight length used when no certificate is present.
  double flight_cap = 1e3;
  std::optional<CategoryACertificate> certificate;

  double radius(int i) const { return models[instances[i].model].radius; }
  /// center_j - center_i computed from exact lattice differences.
  Vec2 rel(int i, int j) const {
    const Instance& a = instances[i];
    const Instance& b = instances[j];
    return lattice.to_plane(b.lattice - a.lattice) + (b.frac - a.frac);
  }
  double perimeter(int i) const { return kTwoPi * radius(i); }
  double max_radius() const { return max_r_; }
  double min_radius() const { return min_r_; }
  const UniformGrid& grid() const { return grid_; }

  /// Flight bound used by free_flight: certificate M with margin, else the cap.
  double flight_limit() const { return certificate && certificate->verified() ? certificate->M * (1.0 + certificate->margin) : flight_cap; }

  ChartPoint chart(int i, double rho) const { return circle_chart(instances[i].center, radius(i), rho); }

  /// Instances whose grid cells meet the disk (may contain repeats and extras).
  template <class Fn>
  void visit_near(Vec2 p, double r, Fn&& fn) const {
    BBox b;
    b.expand(p - Vec2{r, r});
    b.expand(p + Vec2{r, r});
    grid_.visit_box(b, fn);
  }

  /// Explicit field: every center is its own class and address (the model index).
  static ScattererField from_instances(const std::vector<Vec2>& centers, const std::vector<double>& radii) {
    if (centers.size() != radii.size() || centers.empty()) throw PreconditionViolation("centers and radii must match");
    ScattererField f;
    std::map<double, int> model_of;
    for (double r : radii)
      if (!model_of.count(r)) {
        model_of[r] = static_cast<int>(f.models.size());
        f.models.push_back({r, {0, 0}});
      }
    BBox box;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      Instance in;
      in.frac = centers[i];
      in.center = centers[i];
      in.model = model_of[radii[i]];
      in.cls = in.model;
      in.address = in.model;
      f.instances.push_back(in);
      box.expand(centers[i]);
    }
    f.finalize();
    const Vec2 c = (box.lo + box.hi) * 0.5;
    double R = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) R = std::max(R, norm(centers[i] - c) + radii[i]);
    f.populated = {c, R};
    f.certified = {c, R + 1e-9};
    return f;
  }

  /// Rebuilds the spatial index and radius bounds after instances change.
  void finalize() {
    max_r_ = 0.0;
    min_r_ = std::numeric_limits<double>::infinity();
    for (const Instance& in : instances) {
      max_r_ = std::max(max_r_, models[in.model].radius);
      min_r_ = std::min(min_r_, models[in.model].radius);
    }
    BBox all;
    for (const Instance& in : instances) all.expand(in.center);
    all.lo -= Vec2{max_r_, max_r_};
    all.hi += Vec2{max_r_, max_r_};
    grid_ = UniformGrid(all, std::max(2.0 * max_r_, 1e-3));
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const Instance& in = instances[i];
      const double r = models[in.model].radius;
      BBox b;
      b.expand(in.center - Vec2{r, r});
      b.expand(in.center + Vec2{r, r});
      grid_.insert_box(static_cast<int>(i), b);
    }
  }

 private:
  double max_r_ = 0.0, min_r_ = 0.0;
  UniformGrid grid_;
};

/// Places one scatterer per classified site whose class maps to a model. Sites closer than
/// the depth to the window border are left unpopulated.
inline ScattererField instantiate_field(std::shared_ptr<const PatchRegion> patch, const Assignment& assignment) {
  ScattererField f;
  f.patch = patch;
  f.lattice = patch->system().lattice;
  f.depth = assignment.depth;
  f.address_depth = assignment.depth;
  f.classes = std::make_shared<ClassRegistry>(assignment.depth);
  const Disk w = patch->window();
  f.populated = {w.center, w.radius - assignment.depth};
  if (f.populated.radius <= 0) throw WindowTooSmall("window smaller than the assignment depth");
  const SubstitutionSystem& sys = patch->system();
  std::vector<Instance> raw;
  for (std::size_t t = 0; t < patch->size(); ++t) {
    const PlacedTile& tile = patch->tiles()[t];
    for (const Site& s : sys.prototiles[tile.proto].sites) {
      const LatticeVec L = tile.translation + s.lattice;
      const Vec2 x = patch->plane(L) + s.frac;
      if (norm(x - w.center) > f.populated.radius) continue;
      const PatternClass c = classify(*patch, {L, s.frac}, *f.classes);
      const auto model = assignment.lookup(c);
      if (!model) continue;
      auto it = std::find(f.models.begin(), f.models.end(), *model);
      const int mi = static_cast<int>(it - f.models.begin());
      if (it == f.models.end()) f.models.push_back(*model);
      Instance in;
      in.lattice = L;
      in.frac = s.frac + model->offset;
      in.center = x + model->offset;
      in.model = mi;
      in.cls = c.id;
      raw.push_back(in);
    }
  }
  if (raw.empty()) throw WindowTooSmall("no scatterer sites inside the populated region");
  const std::vector<int> remap = f.classes->canonicalize();
  for (Instance& in : raw) {
    in.cls = remap[in.cls];
    in.address = in.cls;
  }
  // Model ids in order of first appearance depend only on the patch; make them canonical anyway.
  std::vector<int> order(f.models.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& x = f.models[a];
    const auto& y = f.models[b];
    return std::tie(x.radius, x.offset.x, x.offset.y) < std::tie(y.radius, y.offset.x, y.offset.y);
  });
  std::vector<int> mre(order.size());
  std::vector<CircleModel> sorted;
  for (std::size_t n = 0; n < order.size(); ++n) {
    mre[order[n]] = static_cast<int>(n);
    sorted.push_back(f.models[order[n]]);
  }
  f.models = sorted;
  for (Instance& in : raw) in.model = mre[in.model];
  f.instances = std::move(raw);
  f.finalize();
  f.certified = f.populated;
  f.addresses = f.classes;
  return f;
}

/// Assigns transversal addresses: the pattern class of each scatterer's site at depth R_m.
/// Sites too close to the window border for that depth get address -1.
inline void assign_addresses(ScattererField& f, double address_depth) {
  if (!f.patch) return;
  f.address_depth = address_depth;
  f.addresses = std::make_shared<ClassRegistry>(address_depth);
  const Disk w = f.patch->window();
  std::vector<int> ids(f.instances.size(), -1);
  for (std::size_t i = 0; i < f.instances.size(); ++i) {
    const Instance& in = f.instances[i];
    const Vec2 site = in.center - f.models[in.model].offset;
    if (norm(site - w.center) + address_depth > w.radius) continue;
    const Vec2 frac = in.frac - f.models[in.model].offset;
    ids[i] = classify(*f.patch, {in.lattice, frac}, *f.addresses).id;
  }
  const std::vector<int> remap = f.addresses->canonicalize();
  for (std::size_t i = 0; i < f.instances.size(); ++i) f.instances[i].address = ids[i] < 0 ? -1 : remap[ids[i]];
}

namespace detail {

/// Smallest t > t_min with p + t d on the circle (center c, radius r); grazing counts as a miss
/// when graze_tol > 0. Uses the cancellation-free root.
inline std::optional<double> ray_circle(Vec2 p, Vec2 d, Vec2 c, double r, double t_min, double graze_tol = 0.0) {
  const Vec2 q = p - c;
  const double b = dot(q, d);
  const double cc = dot(q, q) - r * r;
  const double disc = b * b - cc;
  if (disc < 0.0 || (graze_tol > 0.0 && disc <= graze_tol * r * r)) return std::nullopt;
  const double s = std::sqrt(disc);
  // Roots t = -b -/+ s; the smaller is the entry point.
  double t1;
  if (b <= 0.0) t1 = cc / (-b + s);  // = -b - s without cancellation
  else t1 = -b - s;
  if (t1 > t_min) return t1;
  return std::nullopt;  // starting inside or past the circle: no entry ahead
}

}  // namespace detail

/// Walks the field grid along a ray in absolute coordinates; returns (t, instance) of the first
/// entry into a scatterer with t in (t_min, t_max], excluding `skip`.
inline std::optional<std::pair<double, int>> cast_ray(const ScattererField& f, Vec2 p, Vec2 d, double t_max, int skip = -1,
                                                      double graze_tol = 0.0, double t_min = 1e-12) {
  const UniformGrid& g = f.grid();
  const double cs = g.cell_size();
  const Vec2 o = g.origin();
  int ix = static_cast<int>(std::floor((p.x - o.x) / cs));
  int iy = static_cast<int>(std::floor((p.y - o.y) / cs));
  const int sx = d.x > 0 ? 1 : (d.x < 0 ? -1 : 0);
  const int sy = d.y > 0 ? 1 : (d.y < 0 ? -1 : 0);
  const double inf = std::numeric_limits<double>::infinity();
  double tx = sx ? ((o.x + (ix + (sx > 0)) * cs) - p.x) / d.x : inf;
  double ty = sy ? ((o.y + (iy + (sy > 0)) * cs) - p.y) / d.y : inf;
  const double dtx = sx ? cs / std::abs(d.x) : inf;
  const double dty = sy ? cs / std::abs(d.y) : inf;
  std::optional<std::pair<double, int>> best;
  for (;;) {
    if (ix < 0 || iy < 0 || ix >= g.nx() || iy >= g.ny()) return best;
    for (int j : g.cell(ix, iy)) {
      if (j == skip) continue;
      const auto t = detail::ray_circle(p, d, f.instances[j].center, f.radius(j), t_min, graze_tol);
      if (t && *t <= t_max && (!best || *t < best->first || (*t == best->first && j < best->second))) best = std::pair{*t, j};
    }
    const double t_exit = std::min(tx, ty);
    if (best && best->first <= t_exit) return best;
    if (t_exit > t_max) return best;
    if (tx < ty) {
      ix += sx;
      tx += dtx;
    } else {
      iy += sy;
      ty += dty;
    }
  }
}

/// Minimum boundary separation over all instance pairs.
inline double min_separation(const ScattererField& f) {
  double sep = std::numeric_limits<double>::infinity();
  const double reach = 2.0 * f.max_radius() + 1.0;
  for (std::size_t i = 0; i < f.instances.size(); ++i) {
    std::vector<int> near;
    f.visit_near(f.instances[i].center, reach, [&](int j) {
      if (static_cast<std::size_t>(j) > i) near.push_back(j);
    });
    std::sort(near.begin(), near.end());
    near.erase(std::unique(near.begin(), near.end()), near.end());
    for (int j : near) {
      const double s = norm(f.rel(static_cast<int>(i), j)) - f.radius(static_cast<int>(i)) - f.radius(j);
      sep = std::min(sep, s);
    }
  }
  if (f.instances.size() < 2) return sep;
  // Pairs beyond `reach` are separated by at least reach - 2 r_max.
  return std::min(sep, reach);
}

struct SweepOptions {
  int n_directions = 720;
  /// Offset spacing as a fraction of sep_min.
  double spacing_fraction = 0.25;
  double margin = 0.05;
  /// Chords longer than this are reported as horizon counterexamples.
  double L_max = 50.0;
};

namespace detail {

/// Local configuration around an instance: relative positions and models of all scatterers
/// within `reach`. Equal keys imply equal free chords of length below reach - 2 r_max.
inline std::string neighborhood_key(const ScattererField& f, int i, double reach) {
  std::vector<std::tuple<std::int64_t, std::int64_t, int>> items;
  f.visit_near(f.instances[i].center, reach, [&](int j) {
    const Vec2 r = f.rel(i, j);
    if (norm(r) <= reach) items.emplace_back(quantize(r.x), quantize(r.y), f.instances[j].model);
  });
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  std::string s;
  const int m = f.instances[i].model;
  s.append(reinterpret_cast<const char*>(&m), sizeof m);
  for (auto& [x, y, k] : items) {
    s.append(reinterpret_cast<const char*>(&x), sizeof x);
    s.append(reinterpret_cast<const char*>(&y), sizeof y);
    s.append(reinterpret_cast<const char*>(&k), sizeof k);
  }
  return s;
}

}  // namespace detail

/// Certifies the category-A conditions. sep_min is exact over instance pairs; the horizon is
/// checked by a ray sweep from the boundary of one representative per local configuration,
/// over n_directions directions and offsets at spacing <= sep_min/4. Grazing contacts count as
/// misses, which can only lengthen chords, so M is conservative.
inline CategoryACertificate certify_category_A(ScattererField& f, const SweepOptions& opt = {}) {
  if (f.instances.size() < 2) throw PreconditionViolation("certification needs at least two scatterers");
  CategoryACertificate cert;
  cert.sep_min = min_separation(f);
  if (!(cert.sep_min > 0.0))
    throw DegenerateField("no-corners violation: scatterers overlap or touch (sep_min = " + fmt_real(cert.sep_min) + ")");
  cert.K_min = 1.0 / f.max_radius();
  cert.K_max = 1.0 / f.min_radius();
  cert.tau_min = cert.sep_min;
  cert.n_directions = opt.n_directions;
  cert.margin = opt.margin;
  cert.offset_spacing = opt.spacing_fraction * cert.sep_min;
  const double rmax = f.max_radius();
  double reach = 4.0 * rmax + 1.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    const Disk region{f.populated.center, f.populated.radius - reach};
    if (region.radius <= 0) throw WindowTooSmall("window too small for horizon certification");
    // Representatives: first instance (in index order) of each local configuration.
    std::map<std::string, int> reps;
    for (std::size_t i = 0; i < f.instances.size(); ++i) {
      if (!region.contains(f.instances[i].center)) continue;
      reps.emplace(detail::neighborhood_key(f, static_cast<int>(i), reach), static_cast<int>(i));
    }
    std::vector<int> rep_list;
    for (auto& [k, i] : reps) rep_list.push_back(i);
    std::sort(rep_list.begin(), rep_list.end());
    double longest = 0.0;
    bool escaped = false;
    bool too_long = false;
    std::size_t rays = 0;
    for (int k = 0; k < opt.n_directions && !escaped; ++k) {
      const double ang = kTwoPi * k / opt.n_directions;
      const Vec2 d{std::cos(ang), std::sin(ang)};
      const Vec2 perp = rot90(d);
      for (int i : rep_list) {
        if (escaped) break;
        const double r = f.radius(i);
        const int n_off = static_cast<int>(std::ceil(2.0 * r / cert.offset_spacing)) + 1;
        for (int s_i = 0; s_i < n_off && !escaped; ++s_i) {
          const double s = -r + 2.0 * r * s_i / (n_off - 1);
          const Vec2 start = f.instances[i].center + perp * s + d * std::sqrt(std::max(0.0, r * r - s * s));
          ++rays;
          const auto hit = cast_ray(f, start, d, opt.L_max, i, 1e-12);
          if (!hit) {
            escaped = true;
            cert.witness_anchor = start;
            cert.witness_direction = d;
            longest = opt.L_max;
            break;
          }
          if (hit->first > reach - 2.0 * rmax) too_long = true;
          longest = std::max(longest, hit->first);
        }
      }
    }
    cert.rays = rays;
    cert.representatives = rep_list.size();
    cert.neighborhood = reach;
    cert.longest_chord = longest;
    if (escaped) {
      cert.method = CategoryACertificate::Method::counterexample_found;
      cert.M = std::numeric_limits<double>::infinity();
      f.certificate = cert;
      return cert;
    }
    if (too_long) {
      reach = std::max(2.0 * reach, longest + 2.0 * rmax + 1.0);
      continue;
    }
    cert.method = CategoryACertificate::Method::verified_by_sweep;
    cert.M = longest * (1.0 + opt.margin);
    f.certified = {f.populated.center, f.populated.radius - reach};
    f.certificate = cert;
    return cert;
  }
  throw WindowTooSmall("horizon sweep did not converge within the window");
}

/// Searches for a nonzero translation of length <= max_len that maps every scatterer in the
/// inner disk onto a scatterer of the same radius. Returns it if found.
inline std::optional<Vec2> find_lattice_translation(const ScattererField& f, double max_len, Disk inner) {
  // Anchor: instance nearest the inner center.
  int a = -1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < f.instances.size(); ++i) {
    const double d = norm(f.instances[i].center - inner.center);
    if (d < best) best = d, a = static_cast<int>(i);
  }
  std::vector<std::pair<double, int>> cands;
  f.visit_near(f.instances[a].center, max_len, [&](int j) {
    if (j == a) return;
    const double l = norm(f.rel(a, j));
    if (l <= max_len && f.radius(j) == f.radius(a)) cands.push_back({l, j});
  });
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  for (auto [l, j] : cands) {
    const Vec2 v = f.rel(a, j);
    bool ok = true;
    for (std::size_t i = 0; i < f.instances.size() && ok; ++i) {
      if (!inner.contains(f.instances[i].center)) continue;
      const Vec2 target = f.instances[i].center + v;
      bool found = false;
      f.visit_near(target, 1e-6, [&](int k) {
        if (!found && norm(f.instances[k].center - target) < 1e-7 && f.radius(k) == f.radius(static_cast<int>(i))) found = true;
      });
      ok = found;
    }
    if (ok) return v;
  }
  return std::nullopt;
}

}  // namespace lorentz
