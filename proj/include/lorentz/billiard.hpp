#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "geometry.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "scatterer.hpp"

namespace lorentz {

/// States within this angle of tangency are treated as singular.
inline constexpr double kThetaGuard = 1e-7;
/// A launch never re-detects its own scatterer below this flight parameter.
inline constexpr double kSelfExclusion = 1e-9;
/// First homogeneity strip index.
inline constexpr int kStripFloor = 10;

struct Ray {
  Vec2 origin;
  Vec2 direction;
};

/// Point of the collision space: scatterer, arclength, address class, outgoing angle.
/// The velocity is cos(theta) n + sin(theta) t with t the counterclockwise tangent.
struct CollisionState {
  int instance = -1;
  double rho = 0.0;
  int cls = -1;
  double theta = 0.0;
};

struct FlightEvent {
  CollisionState from;
  CollisionState to;
  double tau = 0.0;
  Ray segment;
};

struct Hit {
  double tau = 0.0;
  int instance = -1;
  Vec2 point;
  Vec2 normal;
};

inline CollisionState time_reversal(CollisionState x) {
  x.theta = -x.theta;
  return x;
}

inline Vec2 reflect(Vec2 v, Vec2 n) {
  const double vn = dot(v, n);
  if (vn > 1e-9) throw OutgoingInput("reflect expects an incoming velocity");
  return v - n * (2.0 * vn);
}

/// Outgoing ray of a state in absolute coordinates.
inline Ray to_ray(const ScattererField& f, const CollisionState& x) {
  const ChartPoint c = f.chart(x.instance, x.rho);
  return {c.point, c.normal * std::cos(x.theta) + c.tangent * std::sin(x.theta)};
}

/// State on scatterer i at boundary point p with outgoing direction v.
inline CollisionState state_from_ray(const ScattererField& f, int i, Vec2 p, Vec2 v) {
  const Vec2 q = p - f.instances[i].center;
  const double r = f.radius(i);
  const Vec2 n = normalized(q);
  CollisionState x;
  x.instance = i;
  x.rho = wrap_period(std::atan2(n.y, n.x) * r, kTwoPi * r);
  x.cls = f.instances[i].address;
  x.theta = std::atan2(dot(v, rot90(n)), dot(v, n));
  return x;
}

namespace detail {

/// Nearest entry along p_rel + t d (coordinates relative to instance `from`), walking the grid
/// from the absolute point. Only relative geometry enters the arithmetic, so equivalent
/// configurations give identical results.
inline std::optional<std::pair<double, int>> relative_flight(const ScattererField& f, int from, Vec2 p_rel, Vec2 d, double t_max,
                                                             double self_min) {
  const Vec2 p = from >= 0 ? f.instances[from].center + p_rel : p_rel;
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
  Vec2 best_c;
  for (;;) {
    if (ix < 0 || iy < 0 || ix >= g.nx() || iy >= g.ny()) return best;
    for (int j : g.cell(ix, iy)) {
      const Vec2 c = from >= 0 ? f.rel(from, j) : f.instances[j].center;
      const auto t = ray_circle(p_rel, d, c, f.radius(j), j == from ? self_min : 0.0);
      if (!t || *t > t_max) continue;
      // Ties resolve by relative position, never by instance number.
      if (!best || *t < best->first || (*t == best->first && std::tie(c.x, c.y) < std::tie(best_c.x, best_c.y))) {
        best = std::pair{*t, j};
        best_c = c;
      }
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

}  // namespace detail

/// Nearest scatterer along a ray in absolute coordinates.
inline Hit free_flight(const ScattererField& f, const Ray& ray) {
  // A start on a boundary heading outward must not re-detect that scatterer.
  int self = -1;
  f.visit_near(ray.origin, 0.0, [&](int j) {
    if (std::abs(norm(ray.origin - f.instances[j].center) - f.radius(j)) < 1e-9) self = j;
  });
  std::optional<std::pair<double, int>> hit;
  if (self >= 0) {
    hit = detail::relative_flight(f, self, ray.origin - f.instances[self].center, ray.direction, f.flight_limit(), kSelfExclusion);
  } else {
    hit = detail::relative_flight(f, -1, ray.origin, ray.direction, f.flight_limit(), kSelfExclusion);
  }
  if (!hit) throw HorizonEscape("no scatterer within the flight bound " + fmt_real(f.flight_limit()));
  Hit h;
  h.tau = hit->first;
  h.instance = hit->second;
  h.point = ray.origin + ray.direction * h.tau;
  h.normal = normalized(h.point - f.instances[h.instance].center);
  return h;
}

/// The collision map f.
inline FlightEvent collision_map(const ScattererField& f, const CollisionState& x) {
  if (!(std::abs(x.theta) < kHalfPi - kThetaGuard)) throw Singularity("state is within the tangency guard");
  const Instance& a = f.instances[x.instance];
  if (!f.certified.contains(a.center)) throw RegionExit("state outside the certified region");
  const double r = f.radius(x.instance);
  const double phi = x.rho / r;
  const Vec2 n{std::cos(phi), std::sin(phi)};
  const Vec2 d = n * std::cos(x.theta) + rot90(n) * std::sin(x.theta);
  const Vec2 p_rel = n * r;
  const auto hit = detail::relative_flight(f, x.instance, p_rel, d, f.flight_limit(), kSelfExclusion);
  if (!hit) throw HorizonEscape("no scatterer within the flight bound " + fmt_real(f.flight_limit()));
  const auto [tau, j] = *hit;
  const Instance& b = f.instances[j];
  if (!f.certified.contains(b.center) || b.address < 0) throw RegionExit("trajectory leaves the certified region");
  const Vec2 q = p_rel + d * tau - f.rel(x.instance, j);
  const double rj = f.radius(j);
  const Vec2 n2 = q / norm(q);
  const Vec2 v2 = d - n2 * (2.0 * dot(d, n2));
  FlightEvent ev;
  ev.from = x;
  ev.tau = tau;
  ev.segment = {a.center + p_rel, d};
  ev.to.instance = j;
  ev.to.rho = wrap_period(std::atan2(n2.y, n2.x) * rj, kTwoPi * rj);
  ev.to.cls = b.address;
  ev.to.theta = std::atan2(dot(v2, rot90(n2)), dot(v2, n2));
  if (!(std::abs(ev.to.theta) < kHalfPi - kThetaGuard)) throw Singularity("tangential collision");
  return ev;
}

/// f^{-1} = I f I with I the time reversal theta -> -theta.
inline FlightEvent inverse_collision_map(const ScattererField& f, const CollisionState& x) {
  FlightEvent ev = collision_map(f, time_reversal(x));
  FlightEvent out;
  out.from = x;
  out.to = time_reversal(ev.to);
  out.tau = ev.tau;
  const Ray back = to_ray(f, out.to);
  out.segment = back;
  return out;
}

/// n iterates of f from x.
inline std::vector<FlightEvent> orbit(const ScattererField& f, CollisionState x, int n) {
  std::vector<FlightEvent> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    out.push_back(collision_map(f, x));
    x = out.back().to;
  }
  return out;
}

struct FlowResult {
  Vec2 point;
  Vec2 direction;
  int collisions = 0;
  /// Time of the last collision (0 if none).
  double last_collision = 0.0;
  std::optional<CollisionState> last_state;
};

/// Billiard flow for time t from a point outside the scatterers.
inline FlowResult flow(const ScattererField& f, Vec2 start, Vec2 direction, double t) {
  if (t < 0) throw PreconditionViolation("flow time must be nonnegative");
  f.visit_near(start, 0.0, [&](int j) {
    if (norm(start - f.instances[j].center) < f.radius(j) - 1e-12) throw PreconditionViolation("flow start inside a scatterer");
  });
  direction = normalized(direction);
  FlowResult res{start, direction, 0, 0.0, std::nullopt};
  Hit h = free_flight(f, {start, direction});
  if (h.tau > t) {
    res.point = start + direction * t;
    return res;
  }
  if (!f.certified.contains(f.instances[h.instance].center)) throw RegionExit("trajectory leaves the certified region");
  Vec2 v = reflect(direction, h.normal);
  CollisionState x = state_from_ray(f, h.instance, h.point, v);
  if (!(std::abs(x.theta) < kHalfPi - kThetaGuard)) throw Singularity("tangential collision");
  double L = h.tau;
  res.collisions = 1;
  for (;;) {
    const Ray r = to_ray(f, x);
    FlightEvent ev = collision_map(f, x);
    if (L + ev.tau > t) {
      res.point = r.origin + r.direction * (t - L);
      res.direction = r.direction;
      res.last_collision = L;
      res.last_state = x;
      return res;
    }
    L += ev.tau;
    x = ev.to;
    ++res.collisions;
  }
}

/// Homogeneity strip of an angle: 0 in the bulk |theta| <= pi/2 - k0^-2, k >= k0 for
/// pi/2 - k^-2 < theta <= pi/2 - (k+1)^-2, and -k for -pi/2 + (k+1)^-2 < theta <= -pi/2 + k^-2.
inline int homogeneity_index(double theta, int k0 = kStripFloor) {
  if (!(std::abs(theta) < kHalfPi)) throw PreconditionViolation("homogeneity index needs |theta| < pi/2");
  auto upper = [](double k) { return kHalfPi - 1.0 / (k * k); };
  auto lower = [](double k) { return -kHalfPi + 1.0 / (k * k); };
  if (theta > 0) {
    if (theta <= upper(k0)) return 0;
    double k = std::floor(1.0 / std::sqrt(kHalfPi - theta));
    k = std::max<double>(k, k0);
    while (k > k0 && theta <= upper(k)) k -= 1;
    while (theta > upper(k + 1)) k += 1;
    return static_cast<int>(k);
  }
  if (theta > lower(k0)) return 0;
  double k = std::floor(1.0 / std::sqrt(kHalfPi + theta));
  k = std::max<double>(k, k0);
  while (k > k0 && theta > lower(k)) k -= 1;
  while (theta <= lower(k + 1)) k += 1;
  return -static_cast<int>(k);
}

/// I.i.d. samples of the normalized invariant measure cos(theta) d rho d nu d theta over the
/// scatterers whose centers lie in `region`: instance proportional to perimeter, rho uniform,
/// sin(theta) uniform.
inline std::vector<CollisionState> sample_invariant_measure(const ScattererField& f, std::size_t count, std::uint64_t seed,
                                                            std::optional<Disk> region = std::nullopt) {
  const Disk reg = region.value_or(f.certified);
  std::vector<int> ids;
  std::vector<double> cum;
  double total = 0.0;
  for (std::size_t i = 0; i < f.instances.size(); ++i) {
    if (!reg.contains(f.instances[i].center) || f.instances[i].address < 0) continue;
    ids.push_back(static_cast<int>(i));
    total += f.perimeter(static_cast<int>(i));
    cum.push_back(total);
  }
  if (ids.empty()) throw PreconditionViolation("no scatterers in the sampling region");
  std::vector<CollisionState> out(count);
  constexpr std::size_t chunk = 4096;
  for (std::size_t c = 0; c * chunk < count; ++c) {
    Stream s(seed, c);
    for (std::size_t k = c * chunk; k < std::min(count, (c + 1) * chunk); ++k) {
      const double u = s.uniform() * total;
      const auto it = std::upper_bound(cum.begin(), cum.end(), u);
      const int i = ids[std::min<std::size_t>(it - cum.begin(), ids.size() - 1)];
      CollisionState& x = out[k];
      x.instance = i;
      x.rho = s.uniform() * f.perimeter(i);
      x.cls = f.instances[i].address;
      x.theta = std::asin(2.0 * s.uniform() - 1.0);
    }
  }
  return out;
}

/// Product cell (rho bin, address class, theta bin) of a canonical cylinder partition.
struct CylinderCells {
  int rho_bins = 4;
  int theta_bins = 8;
  int classes = 1;

  int size() const { return rho_bins * theta_bins * classes; }
  int index(const ScattererField& f, const CollisionState& x) const {
    const int rb = std::min(rho_bins - 1, static_cast<int>(x.rho / f.perimeter(x.instance) * rho_bins));
    // theta bins are equal-mass bins of the cos(theta)/2 density.
    const double u = 0.5 * (std::sin(x.theta) + 1.0);
    const int tb = std::clamp(static_cast<int>(u * theta_bins), 0, theta_bins - 1);
    return (x.cls * rho_bins + rb) * theta_bins + tb;
  }
};

struct InvarianceReport {
  std::size_t samples = 0;
  std::size_t dropped = 0;     ///< samples whose image is singular or leaves the region
  std::size_t cells = 0;       ///< cells holding at least one sample or image
  std::size_t failures = 0;    ///< cells with |n_image - n_cell| > z_max sigma
  double max_z = 0.0;

  double pass_fraction() const { return cells == 0 ? 1.0 : 1.0 - static_cast<double>(failures) / static_cast<double>(cells); }
};

/// Compares mass(f^{-1} C) with mass(C) for every cell C from one set of mu_bar samples:
/// n_image counts samples with f(x) in C, n_cell samples with x in C. The difference has
/// variance n_image + n_cell - 2 n_both under the sampling law.
inline InvarianceReport measure_invariance(const ScattererField& f, const std::vector<CollisionState>& samples,
                                           const CylinderCells& cells, double z_max = 4.0, unsigned workers = 1) {
  constexpr std::size_t chunk = 4096;
  const std::size_t n_chunks = (samples.size() + chunk - 1) / chunk;
  // Per sample: (cell of x, cell of f(x)) or -1 when the image is unavailable.
  std::vector<std::pair<int, int>> pairs(samples.size(), {-1, -1});
  parallel_chunks(n_chunks, workers, [&](std::size_t c) {
    for (std::size_t k = c * chunk; k < std::min(samples.size(), (c + 1) * chunk); ++k) {
      try {
        const FlightEvent ev = collision_map(f, samples[k]);
        pairs[k] = {cells.index(f, samples[k]), cells.index(f, ev.to)};
      } catch (const Error&) {
      }
    }
  });
  InvarianceReport rep;
  rep.samples = samples.size();
  std::vector<std::int64_t> in(static_cast<std::size_t>(cells.size()), 0), out(in.size(), 0), both(in.size(), 0);
  for (auto [a, b] : pairs) {
    if (a < 0 || b < 0 || a >= cells.size() || b >= cells.size()) {
      ++rep.dropped;
      continue;
    }
    ++in[static_cast<std::size_t>(a)];
    ++out[static_cast<std::size_t>(b)];
    if (a == b) ++both[static_cast<std::size_t>(a)];
  }
  for (std::size_t c = 0; c < in.size(); ++c) {
    if (in[c] == 0 && out[c] == 0) continue;
    ++rep.cells;
    const double d = static_cast<double>(out[c] - in[c]);
    const double var = static_cast<double>(out[c] + in[c] - 2 * both[c]);
    const double z = var > 0 ? std::abs(d) / std::sqrt(var) : (d == 0 ? 0.0 : std::numeric_limits<double>::infinity());
    rep.max_z = std::max(rep.max_z, z);
    if (z > z_max) ++rep.failures;
  }
  return rep;
}

/// Singular points of f^n found on one scatterer chart, as (rho, theta) pairs.
struct SingularitySet {
  int instance = -1;
  int cls = -1;
  int n = 0;
  std::vector<Vec2> points;
};

namespace detail {

/// Symbolic itinerary of n steps: hit positions relative to the start (quantized) and a final
/// code for orbits that stop (singular, escaping, leaving the region).
inline std::vector<std::int64_t> itinerary(const ScattererField& f, CollisionState x, int n) {
  std::vector<std::int64_t> out;
  const int start = x.instance;
  for (int k = 0; k < n; ++k) {
    try {
      const FlightEvent ev = collision_map(f, x);
      const Vec2 r = f.rel(start, ev.to.instance);
      out.push_back(quantize(r.x));
      out.push_back(quantize(r.y));
      x = ev.to;
    } catch (const HorizonEscape&) {
      out.push_back(-1);
      break;
    } catch (const Singularity&) {
      out.push_back(-2);
      break;
    } catch (const RegionExit&) {
      out.push_back(-3);
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Approximates the singular set of f^n on the chart of instance i: along n_rho vertical lines,
/// scans n_theta angles and bisects every change of the n-step itinerary down to `tol`.
/// n = 0 returns the chart boundary theta = +-pi/2.
inline SingularitySet detect_singularity_set(const ScattererField& f, int i, int n, int n_rho = 64, int n_theta = 400,
                                             double tol = 1e-10) {
  SingularitySet s;
  s.instance = i;
  s.cls = f.instances[i].address;
  s.n = n;
  const double per = f.perimeter(i);
  for (int a = 0; a < n_rho; ++a) {
    const double rho = per * (a + 0.5) / n_rho;
    if (n == 0) {
      s.points.push_back({rho, -kHalfPi});
      s.points.push_back({rho, kHalfPi});
      continue;
    }
    auto at = [&](double th) { return detail::itinerary(f, {i, rho, s.cls, th}, n); };
    const double lim = kHalfPi - kThetaGuard;
    double prev_t = -lim;
    auto prev = at(prev_t);
    for (int b = 1; b <= n_theta; ++b) {
      const double th = -lim + 2.0 * lim * b / n_theta;
      auto cur = at(th);
      if (cur != prev) {
        double lo = prev_t, hi = th;
        auto lo_it = prev;
        while (hi - lo > tol) {
          const double mid = 0.5 * (lo + hi);
          auto m = at(mid);
          if (m == lo_it) lo = mid;
          else hi = mid;
        }
        s.points.push_back({rho, 0.5 * (lo + hi)});
      }
      prev = std::move(cur);
      prev_t = th;
    }
  }
  return s;
}

}  // namespace lorentz
