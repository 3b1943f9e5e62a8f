#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace lorentz {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kHalfPi = std::numbers::pi / 2.0;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Absolute tolerance for overlap and containment tests, in tile-edge units.
inline constexpr double kGeomTol = 1e-9;

/// Quantum used to snap coordinates before hashing (2^-30).
inline constexpr double kSnapQuantum = 1.0 / 1073741824.0;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }
constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
constexpr double norm2(Vec2 a) { return dot(a, a); }
/// Counterclockwise quarter turn.
constexpr Vec2 rot90(Vec2 a) { return {-a.y, a.x}; }
inline Vec2 rotate(Vec2 a, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}
inline Vec2 unit_from_angle(double angle) { return {std::cos(angle), std::sin(angle)}; }
inline Vec2 normalized(Vec2 a) { return a / norm(a); }

inline double snap(double v) { return std::nearbyint(v / kSnapQuantum) * kSnapQuantum; }
inline Vec2 snap(Vec2 v) { return {snap(v.x), snap(v.y)}; }
inline std::int64_t quantize(double v) { return std::llround(v / kSnapQuantum); }

/// Wraps an angle into [0, 2pi).
inline double wrap_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Wraps into [0, period).
inline double wrap_period(double v, double period) {
  double r = std::fmod(v, period);
  if (r < 0.0) r += period;
  if (r >= period) r = 0.0;
  return r;
}

/// Signed difference a - b folded into (-period/2, period/2].
inline double periodic_diff(double a, double b, double period) {
  double d = std::fmod(a - b, period);
  if (d > 0.5 * period) d -= period;
  if (d <= -0.5 * period) d += period;
  return d;
}

struct Disk {
  Vec2 center;
  double radius = 0.0;

  bool contains(Vec2 p, double tol = 0.0) const { return norm(p - center) <= radius + tol; }
  /// True if the disk B_r(p) lies inside this disk.
  bool contains_disk(Vec2 p, double r) const { return norm(p - center) + r <= radius + kGeomTol; }
};

struct BBox {
  Vec2 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Vec2 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};

  void expand(Vec2 p) {
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
  }
  bool empty() const { return lo.x > hi.x; }
  double diameter() const { return empty() ? 0.0 : norm(hi - lo); }
};

using Polygon = std::vector<Vec2>;

inline double signed_area(std::span<const Vec2> poly) {
  double a = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) a += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * a;
}

inline Vec2 centroid(std::span<const Vec2> poly) {
  double a = 0.0;
  Vec2 c;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Vec2 p = poly[i], q = poly[(i + 1) % n];
    const double w = cross(p, q);
    a += w;
    c += (p + q) * w;
  }
  return c / (3.0 * a);
}

inline BBox bounds(std::span<const Vec2> poly) {
  BBox b;
  for (Vec2 p : poly) b.expand(p);
  return b;
}

inline Polygon translated(std::span<const Vec2> poly, Vec2 t) {
  Polygon out(poly.begin(), poly.end());
  for (Vec2& p : out) p += t;
  return out;
}

inline double distance_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double l2 = norm2(ab);
  double t = l2 > 0.0 ? dot(p - a, ab) / l2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + ab * t));
}

inline double distance_to_boundary(std::span<const Vec2> poly, Vec2 p) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) d = std::min(d, distance_to_segment(p, poly[i], poly[(i + 1) % n]));
  return d;
}

/// Even-odd point-in-polygon. Points within tol of the boundary count as inside.
inline bool contains(std::span<const Vec2> poly, Vec2 p, double tol = kGeomTol) {
  if (distance_to_boundary(poly, p) <= tol) return true;
  bool inside = false;
  for (std::size_t i = 0, n = poly.size(), j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xc = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < xc) inside = !inside;
    }
  }
  return inside;
}

/// Strict interior test: inside and farther than tol from the boundary.
inline bool contains_strictly(std::span<const Vec2> poly, Vec2 p, double tol = kGeomTol) {
  return distance_to_boundary(poly, p) > tol && contains(poly, p, 0.0);
}

/// Proper crossing of two segments (interiors cross at a single point).
inline bool segments_cross(Vec2 a, Vec2 b, Vec2 c, Vec2 d, double tol = kGeomTol) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  const double la = norm(b - a), lc = norm(d - c);
  return ((d1 > tol * la && d2 < -tol * la) || (d1 < -tol * la && d2 > tol * la)) &&
         ((d3 > tol * lc && d4 < -tol * lc) || (d3 < -tol * lc && d4 > tol * lc));
}

inline bool is_simple(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (norm(poly[(i + 1) % n] - poly[i]) <= kGeomTol) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n], 0.0)) return false;
    }
  }
  return true;
}

/// Interiors of two simple polygons intersect (beyond tol). Touching along edges is allowed.
inline bool interiors_overlap(std::span<const Vec2> a, std::span<const Vec2> b, double tol = kGeomTol) {
  const BBox ba = bounds(a), bb = bounds(b);
  if (ba.hi.x < bb.lo.x + tol || bb.hi.x < ba.lo.x + tol || ba.hi.y < bb.lo.y + tol || bb.hi.y < ba.lo.y + tol)
    return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (segments_cross(a[i], a[(i + 1) % a.size()], b[j], b[(j + 1) % b.size()], tol)) return true;
  for (Vec2 p : a)
    if (contains_strictly(b, p, tol)) return true;
  for (Vec2 p : b)
    if (contains_strictly(a, p, tol)) return true;
  // Coincident polygons: no crossings and no strictly interior vertices.
  const Vec2 ca = centroid(a), cb = centroid(b);
  return contains_strictly(b, ca, tol) || contains_strictly(a, cb, tol);
}

/// Length of the part of segment [p, q] lying inside a simple polygon.
inline double segment_length_inside(std::span<const Vec2> poly, Vec2 p, Vec2 q) {
  const Vec2 d = q - p;
  std::vector<double> ts{0.0, 1.0};
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Vec2 a = poly[i], e = poly[(i + 1) % n] - a;
    const double den = cross(d, e);
    if (std::abs(den) < 1e-300) continue;
    const double t = cross(a - p, e) / den;
    const double u = cross(a - p, d) / den;
    if (t > 0.0 && t < 1.0 && u >= 0.0 && u <= 1.0) ts.push_back(t);
  }
  std::sort(ts.begin(), ts.end());
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const double t0 = ts[i], t1 = ts[i + 1];
    if (t1 <= t0) continue;
    if (contains(poly, p + d * (0.5 * (t0 + t1)), 0.0)) len += t1 - t0;
  }
  return len * norm(d);
}

/// Largest inscribed disk of a simple polygon, found by grid search plus local refinement.
inline Disk inscribed_disk(std::span<const Vec2> poly) {
  const BBox b = bounds(poly);
  auto score = [&](Vec2 p) { return contains(poly, p, 0.0) ? distance_to_boundary(poly, p) : -1.0; };
  Vec2 best = centroid(poly);
  double best_s = score(best);
  const int n = 64;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const Vec2 p{b.lo.x + (b.hi.x - b.lo.x) * i / n, b.lo.y + (b.hi.y - b.lo.y) * j / n};
      const double s = score(p);
      if (s > best_s) best_s = s, best = p;
    }
  double step = b.diameter() / n;
  while (step > 1e-12 * std::max(1.0, b.diameter())) {
    bool moved = false;
    for (Vec2 dir : {Vec2{1, 0}, Vec2{-1, 0}, Vec2{0, 1}, Vec2{0, -1}, Vec2{1, 1}, Vec2{1, -1}, Vec2{-1, 1}, Vec2{-1, -1}}) {
      const Vec2 p = best + dir * step;
      const double s = score(p);
      if (s > best_s) best_s = s, best = p, moved = true;
    }
    if (!moved) step *= 0.5;
  }
  return {best, best_s};
}

/// Uniform grid over a bounding box; each cell holds indices of items overlapping it.
class UniformGrid {
 public:
  UniformGrid() = default;
  UniformGrid(BBox box, double cell) : cell_(cell) {
    if (box.empty()) box.expand({0, 0});
    origin_ = box.lo - Vec2{cell, cell};
    nx_ = static_cast<int>(std::ceil((box.hi.x - origin_.x) / cell)) + 2;
    ny_ = static_cast<int>(std::ceil((box.hi.y - origin_.y) / cell)) + 2;
    cells_.assign(static_cast<std::size_t>(nx_) * ny_, {});
  }

  void insert_box(int item, BBox b) {
    const int x0 = cx(b.lo.x), x1 = cx(b.hi.x), y0 = cy(b.lo.y), y1 = cy(b.hi.y);
    for (int j = y0; j <= y1; ++j)
      for (int i = x0; i <= x1; ++i) cells_[idx(i, j)].push_back(item);
  }

  int cx(double x) const { return std::clamp(static_cast<int>(std::floor((x - origin_.x) / cell_)), 0, nx_ - 1); }
  int cy(double y) const { return std::clamp(static_cast<int>(std::floor((y - origin_.y) / cell_)), 0, ny_ - 1); }
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }
  const std::vector<int>& cell(int i, int j) const { return cells_[idx(i, j)]; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double cell_size() const { return cell_; }
  Vec2 origin() const { return origin_; }

  /// Calls fn(item) for every item in cells overlapping the box; items may repeat.
  template <class Fn>
  void visit_box(BBox b, Fn&& fn) const {
    const int x0 = cx(b.lo.x), x1 = cx(b.hi.x), y0 = cy(b.lo.y), y1 = cy(b.hi.y);
    for (int j = y0; j <= y1; ++j)
      for (int i = x0; i <= x1; ++i)
        for (int item : cells_[idx(i, j)]) fn(item);
  }

 private:
  double cell_ = 1.0;
  Vec2 origin_;
  int nx_ = 0, ny_ = 0;
  std::vector<std::vector<int>> cells_;
};

}  // namespace lorentz
