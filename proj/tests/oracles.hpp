#pragma once

// Test-side reference computations. They share no code with the library beyond plain
// vector types, and use the slowest obvious method for each quantity.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <tuple>
#include <vector>

#include "lorentz/billiard.hpp"

namespace oracle {

using lorentz::Vec2;

/// First t in (t_min, t_max] where p + t d enters the closed disk, by marching in steps of
/// `step` and bisecting the sign change of |x - c| - r.
inline std::optional<double> ray_disk_march(Vec2 p, Vec2 d, Vec2 c, double r, double t_min, double t_max, double step = 1e-3) {
  auto g = [&](double t) {
    const Vec2 q{p.x + t * d.x - c.x, p.y + t * d.y - c.y};
    return std::hypot(q.x, q.y) - r;
  };
  double a = t_min, ga = g(a);
  for (double b = t_min + step; b <= t_max + step; b += step) {
    const double gb = g(b);
    if (ga > 0 && gb <= 0) {
      for (int k = 0; k < 200; ++k) {
        const double m = 0.5 * (a + b);
        (g(m) > 0 ? a : b) = m;
      }
      return 0.5 * (a + b);
    }
    a = b, ga = gb;
  }
  return std::nullopt;
}

struct TraceHit {
  int index = -1;
  double tau = 0.0;
  Vec2 point;
  Vec2 outgoing;
};

/// Next scatterer hit by brute force over every circle, and the mirror-reflected velocity.
inline std::optional<TraceHit> trace(const std::vector<Vec2>& centers, const std::vector<double>& radii, int from, Vec2 p, Vec2 d,
                                     double t_max) {
  std::optional<TraceHit> best;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (static_cast<int>(i) == from) continue;
    const auto t = ray_disk_march(p, d, centers[i], radii[i], 1e-9, t_max);
    if (t && (!best || *t < best->tau)) best = TraceHit{static_cast<int>(i), *t, {}, {}};
  }
  if (!best) return best;
  best->point = {p.x + best->tau * d.x, p.y + best->tau * d.y};
  Vec2 n{best->point.x - centers[best->index].x, best->point.y - centers[best->index].y};
  const double l = std::hypot(n.x, n.y);
  n = {n.x / l, n.y / l};
  const double vn = d.x * n.x + d.y * n.y;
  best->outgoing = {d.x - 2 * vn * n.x, d.y - 2 * vn * n.y};
  return best;
}

/// Central finite-difference Jacobian of the collision map in (rho, theta).
inline std::array<double, 4> fd_jacobian(const lorentz::ScattererField& f, const lorentz::CollisionState& x, double h = 1e-6) {
  auto image = [&](double dr, double dt) {
    lorentz::CollisionState y = x;
    y.rho += dr;
    y.theta += dt;
    return lorentz::collision_map(f, y).to;
  };
  const auto base = lorentz::collision_map(f, x).to;
  auto drho = [&](const lorentz::CollisionState& a, const lorentz::CollisionState& b) {
    const double P = f.perimeter(base.instance);
    double v = a.rho - b.rho;
    v -= P * std::round(v / P);
    return v;
  };
  const auto rp = image(h, 0), rm = image(-h, 0), tp = image(0, h), tm = image(0, -h);
  return {drho(rp, rm) / (2 * h), drho(tp, tm) / (2 * h), (rp.theta - rm.theta) / (2 * h), (tp.theta - tm.theta) / (2 * h)};
}

/// Outgoing angles theta at the boundary point of circle (c1, r1) with polar angle phi whose
/// rays are tangent to circle (c2, r2). Closed form: the tangent directions make the angle
/// asin(r2 / dist) with the line of centers seen from the point.
inline std::vector<double> tangency_thetas(Vec2 c1, double r1, double phi, Vec2 c2, double r2) {
  const Vec2 n{std::cos(phi), std::sin(phi)};
  const Vec2 p{c1.x + r1 * n.x, c1.y + r1 * n.y};
  const Vec2 q{c2.x - p.x, c2.y - p.y};
  const double dist = std::hypot(q.x, q.y);
  const double base = std::atan2(q.y, q.x);
  const double half = std::asin(r2 / dist);
  std::vector<double> out;
  for (double a : {base - half, base + half}) {
    // theta is measured from the normal n towards the counterclockwise tangent.
    double th = a - phi;
    th = std::remainder(th, 2 * M_PI);
    if (std::abs(th) < M_PI / 2) out.push_back(th);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Length of the part of the circle (c, r) inside the disk (z, T), by dense sampling.
inline double arc_length_inside(Vec2 c, double r, Vec2 z, double T, int n = 200000) {
  int inside = 0;
  for (int k = 0; k < n; ++k) {
    const double a = 2 * M_PI * (k + 0.5) / n;
    if (std::hypot(c.x + r * std::cos(a) - z.x, c.y + r * std::sin(a) - z.y) <= T) ++inside;
  }
  return 2 * M_PI * r * inside / n;
}

/// Row p of R^g by repeated integer vector-matrix products.
inline std::vector<long long> row_of_power(const std::vector<std::vector<long long>>& R, int p, int g) {
  std::vector<long long> v(R.size(), 0);
  v[p] = 1;
  for (int k = 0; k < g; ++k) {
    std::vector<long long> w(R.size(), 0);
    for (std::size_t i = 0; i < R.size(); ++i)
      for (std::size_t j = 0; j < R.size(); ++j) w[j] += v[i] * R[i][j];
    v = w;
  }
  return v;
}

/// Perron eigenvalue and normalized left eigenvector by plain power iteration.
inline std::pair<double, std::vector<double>> power_iteration(const std::vector<std::vector<long long>>& R, int iters = 2000) {
  const std::size_t n = R.size();
  std::vector<double> v(n, 1.0 / n);
  double lam = 0.0;
  for (int k = 0; k < iters; ++k) {
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) w[j] += v[i] * R[i][j];
    double s = 0.0;
    for (double x : w) s += x;
    lam = s;
    for (double& x : w) x /= s;
    v = w;
  }
  return {lam, v};
}

/// Kendall tau-a for samples without ties, by counting all pairs.
inline double kendall_tau_a(const std::vector<double>& x, const std::vector<double>& y) {
  long long s = 0, pairs = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      s += ((x[j] - x[i]) * (y[j] - y[i]) > 0) ? 1 : -1;
      ++pairs;
    }
  return static_cast<double>(s) / static_cast<double>(pairs);
}

/// Mean free path of a planar periodic array: pi |free area| / |boundary| per cell.
inline double lattice_mean_free_path(double cell_area, double r) { return M_PI * (cell_area - M_PI * r * r) / (2 * M_PI * r); }

/// Distance from x to a polygon (0 inside), by checking every edge.
inline double polygon_distance(const std::vector<Vec2>& poly, Vec2 x) {
  double d = 1e300;
  bool inside = false;
  for (std::size_t a = 0, b = poly.size() - 1; a < poly.size(); b = a++) {
    const Vec2 p = poly[a], q = poly[b];
    const double ex = q.x - p.x, ey = q.y - p.y;
    double t = ((x.x - p.x) * ex + (x.y - p.y) * ey) / (ex * ex + ey * ey);
    t = std::clamp(t, 0.0, 1.0);
    d = std::min(d, std::hypot(p.x + t * ex - x.x, p.y + t * ey - x.y));
    if ((p.y > x.y) != (q.y > x.y) && x.x < p.x + (x.y - p.y) * (q.x - p.x) / (q.y - p.y)) inside = !inside;
  }
  return inside ? 0.0 : d;
}

/// Tiles (prototile, translation relative to x rounded to 1e-6) within distance R of x, by a
/// linear scan over the whole patch.
template <class Patch>
std::vector<std::tuple<int, long long, long long>> neighborhood(const Patch& p, Vec2 x, double R) {
  std::vector<std::tuple<int, long long, long long>> out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = polygon_distance(p.polygon(i), x);
    if (d < R || d == 0.0) {
      const Vec2 t = p.translation(i);
      out.emplace_back(p.tiles()[i].proto, std::llround((t.x - x.x) * 1e6), std::llround((t.y - x.y) * 1e6));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace oracle
