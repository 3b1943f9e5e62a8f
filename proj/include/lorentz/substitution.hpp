#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "textio.hpp"

namespace lorentz {

/// Integer coordinates over a lattice basis. Tile translations and scatterer sites
/// live on the lattice so that translation equivalence is decided exactly.
struct LatticeVec {
  std::int64_t a = 0;
  std::int64_t b = 0;

  constexpr LatticeVec operator+(LatticeVec o) const { return {a + o.a, b + o.b}; }
  constexpr LatticeVec operator-(LatticeVec o) const { return {a - o.a, b - o.b}; }
  constexpr LatticeVec operator*(std::int64_t s) const { return {a * s, b * s}; }
  constexpr auto operator<=>(const LatticeVec&) const = default;
};

struct LatticeBasis {
  Vec2 e1{1.0, 0.0};
  Vec2 e2{0.0, 1.0};

  Vec2 to_plane(LatticeVec v) const {
    return {static_cast<double>(v.a) * e1.x + static_cast<double>(v.b) * e2.x,
            static_cast<double>(v.a) * e1.y + static_cast<double>(v.b) * e2.y};
  }
  /// Real lattice coordinates of a plane point.
  Vec2 coords(Vec2 p) const {
    const double det = cross(e1, e2);
    return {cross(p, e2) / det, cross(e1, p) / det};
  }
  /// Nearest lattice vector, if p lies on the lattice within tol.
  std::optional<LatticeVec> from_plane(Vec2 p, double tol = 1e-7) const {
    const Vec2 c = coords(p);
    const LatticeVec v{std::llround(c.x), std::llround(c.y)};
    if (norm(to_plane(v) - p) > tol) return std::nullopt;
    return v;
  }
};

/// A scatterer site of a prototile: lattice part plus an exact fractional remainder.
struct Site {
  LatticeVec lattice;
  Vec2 frac;
};

struct Prototile {
  int id = 0;
  Polygon polygon;
  Vec2 anchor;
  int rotation = 0;
  std::vector<Site> sites;

  double area() const { return signed_area(polygon); }
};

struct Child {
  int proto = 0;
  LatticeVec offset;
  int rotation = 0;
};

/// Expansion-and-substitution rule. Placing prototile i at translation t and
/// substituting gives children (j, lambda*t + v) for each rule entry (j, v).
struct SubstitutionSystem {
  std::vector<Prototile> prototiles;
  int expansion = 2;
  LatticeBasis lattice;
  std::vector<std::vector<Child>> rule;

  std::size_t size() const { return prototiles.size(); }

  /// R[i][j] = number of children of type j in the substitution of type i.
  std::vector<std::vector<long long>> matrix() const {
    std::vector<std::vector<long long>> m(size(), std::vector<long long>(size(), 0));
    for (std::size_t i = 0; i < rule.size(); ++i)
      for (const Child& c : rule[i]) ++m[i][static_cast<std::size_t>(c.proto)];
    return m;
  }
};

inline bool is_primitive(const std::vector<std::vector<long long>>& m) {
  const std::size_t n = m.size();
  if (n == 0) return false;
  std::vector<std::vector<char>> p(n, std::vector<char>(n)), a(n, std::vector<char>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i][j] = p[i][j] = m[i][j] > 0;
  // Wielandt: a primitive matrix has a positive power at exponent (n-1)^2 + 1.
  const std::size_t limit = (n - 1) * (n - 1) + 1;
  for (std::size_t k = 1; k <= limit; ++k) {
    bool all = true;
    for (auto& row : p)
      for (char c : row) all = all && c;
    if (all) return true;
    std::vector<std::vector<char>> q(n, std::vector<char>(n, 0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < n; ++l)
        if (p[i][l])
          for (std::size_t j = 0; j < n; ++j) q[i][j] = q[i][j] || a[l][j];
    p.swap(q);
  }
  return false;
}

struct PerronData {
  double eigenvalue = 0.0;
  std::vector<double> left;   ///< count frequencies, sums to 1
  std::vector<double> right;  ///< sums to 1
};

/// Perron eigenvalue and eigenvectors by power iteration in long double.
inline PerronData perron(const std::vector<std::vector<long long>>& m) {
  if (!is_primitive(m)) throw NonPrimitive("substitution matrix is not primitive");
  const std::size_t n = m.size();
  auto iterate = [&](bool left) {
    std::vector<long double> v(n, 1.0L / n), w(n);
    long double lam = 0;
    for (int it = 0; it < 20000; ++it) {
      for (std::size_t i = 0; i < n; ++i) {
        long double s = 0;
        for (std::size_t j = 0; j < n; ++j) s += left ? v[j] * m[j][i] : m[i][j] * v[j];
        w[i] = s;
      }
      long double tot = 0;
      for (auto x : w) tot += x;
      long double diff = 0;
      for (std::size_t i = 0; i < n; ++i) {
        w[i] /= tot;
        diff = std::max(diff, std::abs(w[i] - v[i]));
      }
      lam = tot;
      v.swap(w);
      if (diff < 1e-18L && it > 10) break;
    }
    return std::pair{lam, v};
  };
  auto [lam_l, l] = iterate(true);
  auto [lam_r, r] = iterate(false);
  PerronData out;
  out.eigenvalue = static_cast<double>((lam_l + lam_r) / 2);
  for (auto x : l) out.left.push_back(static_cast<double>(x));
  for (auto x : r) out.right.push_back(static_cast<double>(x));
  return out;
}

inline Polygon place(const Prototile& p, Vec2 t) { return translated(p.polygon, t); }

/// Checks every structural invariant of a substitution system. Throws on failure.
inline void validate(const SubstitutionSystem& sys) {
  if (sys.prototiles.empty()) throw RuleInconsistency("no prototiles");
  if (sys.expansion < 2) throw RuleInconsistency("expansion must be an integer > 1");
  if (sys.rule.size() != sys.size()) throw RuleInconsistency("one rule section per prototile required");
  for (std::size_t i = 0; i < sys.size(); ++i) {
    const Prototile& p = sys.prototiles[i];
    if (p.id != static_cast<int>(i)) throw RuleInconsistency("prototile ids must be 0..n-1 in order");
    if (!is_simple(p.polygon)) throw RuleInconsistency("prototile " + std::to_string(i) + " is not simple");
    if (p.area() <= 0.0) throw RuleInconsistency("prototile " + std::to_string(i) + " is not positively oriented");
    if (!contains_strictly(p.polygon, p.anchor))
      throw RuleInconsistency("anchor of prototile " + std::to_string(i) + " is not interior");
  }
  const double lam = sys.expansion;
  for (std::size_t i = 0; i < sys.size(); ++i) {
    const Prototile& parent = sys.prototiles[i];
    Polygon outline = parent.polygon;
    for (Vec2& v : outline) v = v * lam;
    double area = 0.0;
    std::vector<Polygon> kids;
    for (const Child& c : sys.rule[i]) {
      if (c.proto < 0 || c.proto >= static_cast<int>(sys.size()))
        throw RuleInconsistency("rule " + std::to_string(i) + " references unknown prototile");
      if (sys.prototiles[c.proto].rotation != c.rotation)
        throw RuleInconsistency("rule " + std::to_string(i) + ": rotation index does not match child prototile");
      Polygon k = place(sys.prototiles[c.proto], sys.lattice.to_plane(c.offset));
      for (Vec2 v : k)
        if (!contains(outline, v, 1e-9))
          throw RuleInconsistency("rule " + std::to_string(i) + ": child escapes the expanded parent");
      area += signed_area(k);
      kids.push_back(std::move(k));
    }
    for (std::size_t a = 0; a < kids.size(); ++a)
      for (std::size_t b = a + 1; b < kids.size(); ++b)
        if (interiors_overlap(kids[a], kids[b]))
          throw RuleInconsistency("rule " + std::to_string(i) + ": children overlap");
    const double target = lam * lam * parent.area();
    if (std::abs(area - target) > 1e-9 * target)
      throw RuleInconsistency("rule " + std::to_string(i) + ": children do not cover the expanded parent");
  }
  const PerronData pd = perron(sys.matrix());
  if (std::abs(pd.eigenvalue - lam * lam) > 1e-9 * lam * lam)
    throw RuleInconsistency("Perron eigenvalue differs from expansion squared");
}

/// Per-unit-area tile frequencies: Perron count frequencies scaled so sum(freq * area) = 1.
inline std::vector<double> patch_frequencies(const SubstitutionSystem& sys) {
  const PerronData pd = perron(sys.matrix());
  double denom = 0.0;
  for (std::size_t i = 0; i < sys.size(); ++i) denom += pd.left[i] * sys.prototiles[i].area();
  std::vector<double> f(sys.size());
  for (std::size_t i = 0; i < sys.size(); ++i) f[i] = pd.left[i] / denom;
  return f;
}

/// Frequencies from a bare matrix and areas (no geometry needed).
inline std::vector<double> patch_frequencies(const std::vector<std::vector<long long>>& m,
                                             const std::vector<double>& areas) {
  const PerronData pd = perron(m);
  double denom = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) denom += pd.left[i] * areas[i];
  std::vector<double> f(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) f[i] = pd.left[i] / denom;
  return f;
}

/// Lattice points on a polygon's boundary owned by it: p belongs to the tile containing p + delta
/// for a fixed generic delta, so each point of the tiling is owned by exactly one tile.
inline std::vector<Site> boundary_lattice_sites(const Polygon& poly, const LatticeBasis& lat) {
  const Vec2 delta = unit_from_angle(10.0 * kPi / 180.0) * 1e-6;
  const BBox b = bounds(poly);
  Vec2 lo = lat.coords(b.lo), hi = lat.coords(b.hi);
  const Vec2 c1 = lat.coords({b.lo.x, b.hi.y}), c2 = lat.coords({b.hi.x, b.lo.y});
  const double amin = std::min({lo.x, hi.x, c1.x, c2.x}), amax = std::max({lo.x, hi.x, c1.x, c2.x});
  const double bmin = std::min({lo.y, hi.y, c1.y, c2.y}), bmax = std::max({lo.y, hi.y, c1.y, c2.y});
  std::vector<Site> out;
  for (auto a = static_cast<std::int64_t>(std::floor(amin)) - 1; a <= static_cast<std::int64_t>(std::ceil(amax)) + 1; ++a)
    for (auto bb = static_cast<std::int64_t>(std::floor(bmin)) - 1; bb <= static_cast<std::int64_t>(std::ceil(bmax)) + 1; ++bb) {
      const Vec2 p = lat.to_plane({a, bb});
      if (distance_to_boundary(poly, p) > 1e-9) continue;
      if (contains_strictly(poly, p + delta, 1e-12)) out.push_back({{a, bb}, {0.0, 0.0}});
    }
  return out;
}

namespace detail {

/// Exact 60-degree rotations on the triangular lattice e1 = (1,0), e2 = (1/2, sqrt(3)/2).
inline LatticeVec rot60(LatticeVec v, int k) {
  k = ((k % 6) + 6) % 6;
  for (int i = 0; i < k; ++i) v = {-v.b, v.a + v.b};
  return v;
}

}  // namespace detail

/// The half-hex substitution: a trapezoid of three unit triangles, lambda = 2, with its six
/// rotations registered as distinct prototiles so that equivalence is by translation only.
inline SubstitutionSystem half_hex() {
  SubstitutionSystem sys;
  sys.expansion = 2;
  sys.lattice = {{1.0, 0.0}, {0.5, std::sqrt(3.0) / 2.0}};
  // Base tile vertices and anchor in lattice coordinates.
  const std::array<LatticeVec, 4> verts{LatticeVec{0, 0}, LatticeVec{2, 0}, LatticeVec{1, 1}, LatticeVec{0, 1}};
  // Children of the base tile: (rotation offset, lattice offset).
  const std::array<std::pair<int, LatticeVec>, 4> kids{std::pair{0, LatticeVec{1, 0}}, std::pair{3, LatticeVec{2, 2}},
                                                       std::pair{4, LatticeVec{0, 2}}, std::pair{2, LatticeVec{4, 0}}};
  const Vec2 anchor_c{7.0 / 9.0, 4.0 / 9.0};  // centroid (1, 2 sqrt(3)/9) in lattice coordinates
  for (int k = 0; k < 6; ++k) {
    Prototile p;
    p.id = k;
    p.rotation = k;
    for (LatticeVec v : verts) p.polygon.push_back(sys.lattice.to_plane(detail::rot60(v, k)));
    // Rotate the anchor by rotating its lattice coordinates linearly.
    Vec2 ac = anchor_c;
    for (int i = 0; i < k; ++i) ac = {-ac.y, ac.x + ac.y};
    p.anchor = sys.lattice.e1 * ac.x + sys.lattice.e2 * ac.y;
    p.sites = boundary_lattice_sites(p.polygon, sys.lattice);
    sys.prototiles.push_back(std::move(p));
  }
  sys.rule.resize(6);
  for (int k = 0; k < 6; ++k)
    for (auto [dr, off] : kids) {
      const int j = (k + dr) % 6;
      sys.rule[k].push_back({j, detail::rot60(off, k), j});
    }
  return sys;
}

/// Periodic control: unit square, lambda = 2, four children. Its tilings are the square grid.
inline SubstitutionSystem square_grid() {
  SubstitutionSystem sys;
  sys.expansion = 2;
  Prototile p;
  p.polygon = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  p.anchor = {0.5, 0.5};
  p.sites = {{{0, 0}, {0.5, 0.5}}};
  sys.prototiles.push_back(p);
  sys.rule = {{{0, {0, 0}, 0}, {0, {1, 0}, 0}, {0, {0, 1}, 0}, {0, {1, 1}, 0}}};
  return sys;
}

/// Product of the length-4 substitution a -> aaab, b -> abbb with itself on unit rhombi of the
/// triangular lattice, lambda = 4. Prototile 2u + v carries the labels (u, v); all four share
/// one shape. The matrix spectrum is 16, 8, 8, 4, so the sub-leading deviation exponent is 3/2.
inline SubstitutionSystem rhombus_product() {
  SubstitutionSystem sys;
  sys.expansion = 4;
  sys.lattice = {{1.0, 0.0}, {0.5, std::sqrt(3.0) / 2.0}};
  const std::array<std::array<int, 4>, 2> word{std::array<int, 4>{0, 0, 0, 1}, std::array<int, 4>{0, 1, 1, 1}};
  for (int k = 0; k < 4; ++k) {
    Prototile p;
    p.id = k;
    for (LatticeVec v : {LatticeVec{0, 0}, LatticeVec{1, 0}, LatticeVec{1, 1}, LatticeVec{0, 1}})
      p.polygon.push_back(sys.lattice.to_plane(v));
    p.anchor = sys.lattice.to_plane({1, 1}) * 0.5;
    p.sites = boundary_lattice_sites(p.polygon, sys.lattice);
    sys.prototiles.push_back(std::move(p));
  }
  sys.rule.resize(4);
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) sys.rule[k].push_back({2 * word[k / 2][i] + word[k % 2][j], {i, j}, 0});
  return sys;
}

namespace detail {

/// Writes a real as a small fraction when it is one.
inline std::string fraction_text(double v) {
  for (int d = 1; d <= 36; ++d) {
    const double n = std::round(v * d);
    if (std::abs(n / d - v) < 1e-12) {
      const long long ni = static_cast<long long>(n);
      if (d == 1) return std::to_string(ni);
      const long long g = std::gcd(std::llabs(ni), static_cast<long long>(d));
      return std::to_string(ni / g) + (d / g == 1 ? "" : "/" + std::to_string(d / g));
    }
  }
  return fmt_real(v);
}

inline std::string lattice_text(const LatticeBasis& lat, Vec2 p) {
  const Vec2 c = lat.coords(p);
  return "[" + fraction_text(c.x) + ", " + fraction_text(c.y) + "]";
}

}  // namespace detail

/// Serializes a system to the rule-file format read by parse_rule_file.
inline std::string format_rule_file(const SubstitutionSystem& sys) {
  std::ostringstream o;
  o << "expansion = " << sys.expansion << "\n";
  o << "lattice = (" << fmt_real(sys.lattice.e1.x) << ", " << fmt_real(sys.lattice.e1.y) << ") (" << fmt_real(sys.lattice.e2.x)
    << ", " << fmt_real(sys.lattice.e2.y) << ")\n";
  for (const Prototile& p : sys.prototiles) {
    o << "\n[prototile " << p.id << "]\nrotation = " << p.rotation << "\n";
    for (Vec2 v : p.polygon) o << "vertex " << detail::lattice_text(sys.lattice, v) << "\n";
    o << "anchor " << detail::lattice_text(sys.lattice, p.anchor) << "\n";
    for (const Site& s : p.sites)
      o << "site " << detail::lattice_text(sys.lattice, sys.lattice.to_plane(s.lattice) + s.frac) << "\n";
  }
  for (std::size_t i = 0; i < sys.rule.size(); ++i) {
    o << "\n[rule " << i << "]\n";
    for (const Child& c : sys.rule[i])
      o << "child " << c.proto << " @ [" << c.offset.a << ", " << c.offset.b << "] rot " << c.rotation << "\n";
  }
  return o.str();
}

namespace detail {

/// Point given either as plane "(x, y)" or lattice "[a, b]".
inline Vec2 parse_any_point(const std::string& text, const LatticeBasis& lat) {
  const std::string t = trim(text);
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']') throw ParseError("expected [a, b]: " + t);
    const Vec2 c = parse_point("(" + t.substr(1, t.size() - 2) + ")");
    return lat.e1 * c.x + lat.e2 * c.y;
  }
  return parse_point(t);
}

}  // namespace detail

/// Parses and validates a substitution rule file.
inline SubstitutionSystem parse_rule_text(const std::string& text) {
  SubstitutionSystem sys;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  enum class Sec { header, proto, rule } sec = Sec::header;
  int current = -1;
  std::vector<std::vector<std::string>> pending_children;
  std::vector<std::vector<std::string>> pending_sites;
  std::vector<std::vector<std::string>> pending_verts;
  std::vector<std::string> pending_anchor;
  auto err = [&](const std::string& m) { return ParseError("rule file line " + std::to_string(lineno) + ": " + m); };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = strip_comment(line);
    if (s.empty()) continue;
    if (s.front() == '[' && s.find('@') == std::string::npos && (starts_with(s, "[prototile") || starts_with(s, "[rule"))) {
      const auto words = split(s.substr(1, s.size() - 2), ' ');
      if (words.size() < 2 || s.back() != ']') throw err("bad section header");
      const int idx = std::stoi(words.back());
      if (idx < 0 || idx > 4096) throw err("bad section index");
      const auto need = static_cast<std::size_t>(idx) + 1;
      if (words.front() == "prototile") {
        sec = Sec::proto;
        if (pending_verts.size() < need) {
          pending_verts.resize(need);
          pending_sites.resize(need);
          pending_anchor.resize(need);
          sys.prototiles.resize(need);
        }
        sys.prototiles[idx].id = idx;
      } else {
        sec = Sec::rule;
        if (pending_children.size() < need) pending_children.resize(need);
      }
      current = idx;
      continue;
    }
    if (sec == Sec::header) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw err("expected key = value");
      const std::string key = trim(s.substr(0, eq)), val = trim(s.substr(eq + 1));
      if (key == "expansion") {
        const double lam = parse_real(val);
        if (std::abs(lam - std::round(lam)) > 1e-12 || lam < 2)
          throw err("only integer expansions >= 2 are supported (lattice-exact placement)");
        sys.expansion = static_cast<int>(std::lround(lam));
      } else if (key == "lattice") {
        const auto close = val.find(')');
        if (close == std::string::npos) throw err("lattice needs two vectors");
        sys.lattice.e1 = parse_point(val.substr(0, close + 1));
        sys.lattice.e2 = parse_point(val.substr(close + 1));
        if (std::abs(cross(sys.lattice.e1, sys.lattice.e2)) < 1e-12) throw err("degenerate lattice");
      } else {
        throw err("unknown key '" + key + "'");
      }
      continue;
    }
    if (sec == Sec::proto) {
      if (starts_with(s, "rotation")) {
        const auto eq = s.find('=');
        sys.prototiles[current].rotation = std::stoi(trim(s.substr(eq == std::string::npos ? 8 : eq + 1)));
      } else if (starts_with(s, "vertex")) {
        pending_verts[current].push_back(s.substr(6));
      } else if (starts_with(s, "anchor")) {
        pending_anchor[current] = s.substr(6);
      } else if (starts_with(s, "site")) {
        pending_sites[current].push_back(s.substr(4));
      } else {
        throw err("unknown prototile entry");
      }
      continue;
    }
    if (!starts_with(s, "child")) throw err("expected 'child j @ offset rot k'");
    pending_children[current].push_back(s.substr(5));
  }
  const LatticeBasis& lat = sys.lattice;
  for (std::size_t i = 0; i < sys.prototiles.size(); ++i) {
    Prototile& p = sys.prototiles[i];
    if (pending_verts[i].size() < 3) throw ParseError("prototile " + std::to_string(i) + " needs at least 3 vertices");
    for (const auto& v : pending_verts[i]) p.polygon.push_back(detail::parse_any_point(v, lat));
    if (trim(pending_anchor[i]).empty()) throw ParseError("prototile " + std::to_string(i) + " has no anchor");
    p.anchor = detail::parse_any_point(pending_anchor[i], lat);
    for (const auto& st : pending_sites[i]) {
      const Vec2 q = detail::parse_any_point(st, lat);
      const Vec2 c = lat.coords(q);
      const LatticeVec l{static_cast<std::int64_t>(std::floor(c.x + 1e-9)), static_cast<std::int64_t>(std::floor(c.y + 1e-9))};
      Vec2 frac = q - lat.to_plane(l);
      if (norm(frac) < 1e-9) frac = {0.0, 0.0};
      p.sites.push_back({l, frac});
    }
    if (p.sites.empty()) p.sites.push_back({{0, 0}, p.anchor});
  }
  sys.rule.resize(sys.prototiles.size());
  if (pending_children.size() > sys.prototiles.size()) throw ParseError("rule for unknown prototile");
  for (std::size_t i = 0; i < pending_children.size(); ++i)
    for (const std::string& c : pending_children[i]) {
      const auto at = c.find('@');
      const auto rot = c.rfind("rot");
      if (at == std::string::npos) throw ParseError("child entry needs '@'");
      Child ch;
      ch.proto = std::stoi(trim(c.substr(0, at)));
      const std::string off = trim(c.substr(at + 1, (rot == std::string::npos || rot < at ? c.size() : rot) - at - 1));
      ch.rotation = (rot == std::string::npos || rot < at) ? (ch.proto >= 0 && ch.proto < static_cast<int>(sys.size()) ? sys.prototiles[ch.proto].rotation : 0)
                                                           : std::stoi(trim(c.substr(rot + 3)));
      const auto lv = lat.from_plane(detail::parse_any_point(off, lat), 1e-9);
      if (!lv) throw RuleInconsistency("child offset " + off + " is not a lattice vector");
      ch.offset = *lv;
      sys.rule[i].push_back(ch);
    }
  validate(sys);
  return sys;
}

inline SubstitutionSystem parse_rule_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open rule file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_rule_text(ss.str());
}

}  // namespace lorentz
