#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "billiard.hpp"

namespace lorentz {

using Mat2 = Eigen::Matrix2d;
using Vec2d = Eigen::Vector2d;

/// Tangential derivative of (rho, theta) -> (rho', theta') along one flight.
/// tau: flight length, K, K1: curvatures at the two footpoints, c, c1: cosines of the outgoing
/// angle at the start and the outgoing angle at the hit.
inline Mat2 flight_jacobian(double tau, double K, double K1, double c, double c1) {
  Mat2 D;
  D << -(tau * K + c) / c1, -tau / c1, -(tau * K * K1 + K * c1 + K1 * c) / c1, -(tau * K1 + c1) / c1;
  return D;
}

inline double curvature_at(const ScattererField& f, const CollisionState& x) { return 1.0 / f.radius(x.instance); }

inline Mat2 tangential_jacobian(const ScattererField& f, const CollisionState& x) {
  const FlightEvent ev = collision_map(f, x);
  const double c1 = std::cos(ev.to.theta);
  if (c1 < kThetaGuard) throw Singularity("tangential image");
  return flight_jacobian(ev.tau, curvature_at(f, x), curvature_at(f, ev.to), std::cos(x.theta), c1);
}

/// Cones at a state. Slopes are d theta / d rho.
struct ConeField {
  double K = 0.0;
  double cos_theta = 0.0;
  double tau_forward = 0.0;
  double tau_backward = 0.0;

  double unstable_lo() const { return K; }
  double unstable_hi() const { return K + cos_theta / tau_backward; }
  double stable_lo() const { return -K - cos_theta / tau_forward; }
  double stable_hi() const { return -K; }

  static double slope(Vec2d v) { return v(1) / v(0); }
  bool in_unstable(Vec2d v, double tol = 1e-12) const {
    if (v(0) == 0.0) return false;
    const double s = slope(v);
    return s >= unstable_lo() - tol && s <= unstable_hi() + tol;
  }
  bool in_stable(Vec2d v, double tol = 1e-12) const {
    if (v(0) == 0.0) return false;
    const double s = slope(v);
    return s >= stable_lo() - tol && s <= stable_hi() + tol;
  }
};

inline ConeField cone_at(const ScattererField& f, const CollisionState& x) {
  ConeField c;
  c.K = curvature_at(f, x);
  c.cos_theta = std::cos(x.theta);
  c.tau_forward = collision_map(f, x).tau;
  c.tau_backward = inverse_collision_map(f, x).tau;
  return c;
}

struct ConeReport {
  std::size_t tested = 0;
  std::size_t skipped = 0;
  std::size_t failures = 0;
  /// Smallest distance of an image slope to the image cone boundary, relative to the cone width.
  double min_margin = std::numeric_limits<double>::infinity();
};

/// Strict invariance of unstable cones under Df and of stable cones under Df^{-1}.
inline ConeReport check_cone_invariance(const ScattererField& f, const std::vector<CollisionState>& samples) {
  ConeReport rep;
  for (const CollisionState& x : samples) {
    try {
      const FlightEvent fw = collision_map(f, x);
      const FlightEvent bw = inverse_collision_map(f, x);
      const CollisionState& y = fw.to;
      const CollisionState& z = bw.to;
      // Forward: unstable boundary vectors at x land strictly inside the unstable cone at y.
      const double Kx = curvature_at(f, x), Ky = curvature_at(f, y), Kz = curvature_at(f, z);
      const double cx = std::cos(x.theta), cy = std::cos(y.theta), cz = std::cos(z.theta);
      const Mat2 D = flight_jacobian(fw.tau, Kx, Ky, cx, cy);
      const double ulo_y = Ky, uhi_y = Ky + cy / fw.tau;
      for (double s : {Kx, Kx + cx / bw.tau}) {
        const Vec2d w = D * Vec2d(1.0, s);
        const double sl = w(1) / w(0);
        const double m = std::min(sl - ulo_y, uhi_y - sl) / (uhi_y - ulo_y);
        rep.min_margin = std::min(rep.min_margin, m);
        if (!(m > 0.0)) ++rep.failures;
      }
      // Backward: stable boundary vectors at x land strictly inside the stable cone at z.
      const Mat2 Dz = flight_jacobian(bw.tau, Kz, Kx, cz, cx);
      const Mat2 Dinv = Dz.inverse();
      const double slo_z = -Kz - cz / bw.tau, shi_z = -Kz;
      for (double s : {-Kx - cx / fw.tau, -Kx}) {
        const Vec2d w = Dinv * Vec2d(1.0, s);
        const double sl = w(1) / w(0);
        const double m = std::min(sl - slo_z, shi_z - sl) / (shi_z - slo_z);
        rep.min_margin = std::min(rep.min_margin, m);
        if (!(m > 0.0)) ++rep.failures;
      }
      ++rep.tested;
    } catch (const Error&) {
      ++rep.skipped;
    }
  }
  return rep;
}

struct ExpansionReport {
  double Lambda = 0.0;
  /// c_hat[n] = min over retained samples of |Df^n v| / (Lambda^n |v|), Euclidean norm.
  std::vector<double> c_hat;
  /// Smallest per-step growth factor of the p-norm cos(theta)|d rho| seen anywhere.
  double min_step_growth = std::numeric_limits<double>::infinity();
  std::size_t retained = 0;
  std::size_t dropped = 0;
  /// Samples whose p-norm growth sequence was not monotone.
  std::size_t non_monotone = 0;

  double c_hat_min() const { return c_hat.empty() ? 0.0 : *std::min_element(c_hat.begin(), c_hat.end()); }
};

/// Growth of unstable-cone vectors (lower boundary (1, K)) along forward orbits.
inline ExpansionReport expansion_report(const ScattererField& f, const std::vector<CollisionState>& samples, int n_max, double Lambda) {
  ExpansionReport rep;
  rep.Lambda = Lambda;
  rep.c_hat.assign(n_max + 1, std::numeric_limits<double>::infinity());
  for (const CollisionState& x0 : samples) {
    std::vector<double> ratio(n_max + 1);
    std::vector<double> pnorm(n_max + 1);
    Vec2d v(1.0, curvature_at(f, x0));
    const double v0 = v.norm();
    CollisionState x = x0;
    bool ok = true;
    ratio[0] = 1.0;
    pnorm[0] = std::cos(x.theta) * std::abs(v(0));
    try {
      for (int n = 1; n <= n_max; ++n) {
        const FlightEvent ev = collision_map(f, x);
        v = flight_jacobian(ev.tau, curvature_at(f, x), curvature_at(f, ev.to), std::cos(x.theta), std::cos(ev.to.theta)) * v;
        x = ev.to;
        ratio[n] = v.norm() / (std::pow(Lambda, n) * v0);
        pnorm[n] = std::cos(x.theta) * std::abs(v(0));
      }
    } catch (const Error&) {
      ok = false;
    }
    if (!ok) {
      ++rep.dropped;
      continue;
    }
    ++rep.retained;
    bool mono = true;
    for (int n = 0; n <= n_max; ++n) {
      rep.c_hat[n] = std::min(rep.c_hat[n], ratio[n]);
      if (n > 0) {
        rep.min_step_growth = std::min(rep.min_step_growth, pnorm[n] / pnorm[n - 1]);
        if (pnorm[n] < pnorm[n - 1]) mono = false;
      }
    }
    if (!mono) ++rep.non_monotone;
  }
  return rep;
}

/// Unstable direction at x: the lower unstable-cone vector at f^{-depth}(x) pushed forward.
/// Falls back to the cone's lower boundary at x when the backward orbit is not available.
inline Vec2d unstable_direction(const ScattererField& f, const CollisionState& x, int depth = 8) {
  std::vector<FlightEvent> back;
  CollisionState z = x;
  try {
    for (int j = 0; j < depth; ++j) {
      back.push_back(inverse_collision_map(f, z));
      z = back.back().to;
    }
  } catch (const Error&) {
  }
  Vec2d v(1.0, curvature_at(f, z));
  for (auto it = back.rbegin(); it != back.rend(); ++it) {
    const CollisionState& from = it->to;
    const CollisionState& to = it->from;
    v = flight_jacobian(it->tau, curvature_at(f, from), curvature_at(f, to), std::cos(from.theta), std::cos(to.theta)) * v;
    v /= v.norm();
  }
  if (v(0) < 0) v = -v;
  return v / v.norm();
}

namespace detail {

/// Chart radius of the depth-m unstable curve through x = z[0], capped at `cap`. The curve is the
/// image under f^m of a short cone segment at z[m]; a point is admissible when its backward images
/// f^{-j}, j <= m, stay on the scatterers z[j] and in the strips strip[j].
inline double curve_radius(const ScattererField& f, const std::vector<CollisionState>& z, const std::vector<double>& taus,
                           const std::vector<int>& strip, int m, double cap, int scan_steps, int bisections) {
  const CollisionState& x = z[0];
  Vec2d v = unstable_direction(f, z[m]);
  Vec2d w = v;
  for (int j = m; j > 0; --j) {
    const CollisionState& a = z[j];
    const CollisionState& b = z[j - 1];
    w = flight_jacobian(taus[j - 1], 1.0 / f.radius(a.instance), 1.0 / f.radius(b.instance), std::cos(a.theta),
                        std::cos(b.theta)) *
        w;
  }
  const double gain = w.norm();
  if (w(0) < 0) v = -v;
  const double per = f.perimeter(x.instance);
  auto point = [&](double sigma) -> std::optional<double> {
    CollisionState y = z[m];
    y.rho = wrap_period(y.rho + sigma * v(0), f.perimeter(y.instance));
    y.theta += sigma * v(1);
    try {
      for (int j = m; j >= 0; --j) {
        if (!(std::abs(y.theta) < kHalfPi - kThetaGuard)) return std::nullopt;
        if (y.instance != z[j].instance || homogeneity_index(y.theta) != strip[j]) return std::nullopt;
        if (j > 0) y = collision_map(f, y).to;
      }
    } catch (const Error&) {
      return std::nullopt;
    }
    return std::hypot(periodic_diff(y.rho, x.rho, per), y.theta - x.theta);
  };
  double radius = cap;
  for (int side : {1, -1}) {
    double lo = 0.0, lo_d = 0.0, hi = 0.0;
    bool failed = false;
    // Geometric scan up to the cap, then doubling past it if the curve bends back.
    for (int k = scan_steps; k > -scan_steps && lo_d < cap; --k) {
      const double sigma = side * cap * std::pow(4.0, -std::max(k, 0)) * std::pow(2.0, std::max(-k, 0)) / gain;
      const auto d = point(sigma);
      if (!d) {
        hi = sigma;
        failed = true;
        break;
      }
      lo = sigma;
      lo_d = *d;
    }
    if (!failed) continue;
    for (int b = 0; b < bisections; ++b) {
      const double mid = 0.5 * (lo + hi);
      const auto d = point(mid);
      if (d) {
        lo = mid;
        lo_d = *d;
      } else {
        hi = mid;
      }
    }
    radius = std::min(radius, lo_d);
  }
  return radius;
}

}  // namespace detail

/// Estimated unstable radius at x, truncated at depth n_back. Depth 0 is the distance from x to
/// the chart boundary |theta| = pi/2 along the unstable direction. At depth m >= 1 the unstable
/// curve through x is the image under f^m of a short cone segment at f^{-m}(x), and its radius is
/// the chart distance to the first point whose backward images f^{-j}, j <= m, leave the scatterers
/// or homogeneity strips of those of x, located by scan and bisection. The result is the minimum
/// over depths 0..n_back, so it never increases with n_back. Returns 0 when x or f(x) is singular.
inline double estimate_unstable_radius(const ScattererField& f, const CollisionState& x, int n_back, int scan_steps = 12,
                                       int bisections = 20) {
  if (!(std::abs(x.theta) < kHalfPi - kThetaGuard)) return 0.0;
  try {
    collision_map(f, x);
  } catch (const Singularity&) {
    return 0.0;
  }
  const Vec2d u = unstable_direction(f, x);
  double radius = std::numeric_limits<double>::infinity();
  if (u(1) > 0) radius = std::min((kHalfPi - x.theta) / u(1), (kHalfPi + x.theta) / u(1));
  if (n_back == 0) return radius;
  std::vector<CollisionState> z{x};
  std::vector<double> taus;
  try {
    for (int j = 0; j < n_back; ++j) {
      const FlightEvent ev = inverse_collision_map(f, z.back());
      taus.push_back(ev.tau);
      z.push_back(ev.to);
    }
  } catch (const Error&) {
    return 0.0;
  }
  std::vector<int> strip;
  for (const CollisionState& s : z) strip.push_back(homogeneity_index(s.theta));
  radius = std::min(radius, kPi);
  for (int m = 1; m <= n_back && radius > 0.0; ++m)
    radius = std::min(radius, detail::curve_radius(f, z, taus, strip, m, radius, scan_steps, bisections));
  return radius;
}

/// Upper bound on the length of an unstable curve lying in homogeneity strip k: the strip's
/// angular width times sqrt(1 + K_min^-2), since unstable slopes are at least K_min.
inline double strip_length_bound(int k, double K_min) {
  if (k == 0) return std::numeric_limits<double>::infinity();
  const double a = std::abs(k);
  return (1.0 / (a * a) - 1.0 / ((a + 1) * (a + 1))) * std::sqrt(1.0 + 1.0 / (K_min * K_min));
}

}  // namespace lorentz
