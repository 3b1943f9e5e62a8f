#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "geometry.hpp"
#include "substitution.hpp"

namespace lorentz {

struct PlacedTile {
  int proto = 0;
  LatticeVec translation;
  int rotation = 0;
};

/// Finite patch of a tiling. Patch coordinates are tiling coordinates minus `origin`;
/// tile translations stay on the lattice so equivalence tests are exact.
class PatchRegion {
 public:
  PatchRegion() = default;
  PatchRegion(std::shared_ptr<const SubstitutionSystem> sys, std::vector<PlacedTile> tiles, Disk window, Vec2 origin)
      : sys_(std::move(sys)), tiles_(std::move(tiles)), window_(window), origin_(origin) {
    build_index();
  }

  const SubstitutionSystem& system() const { return *sys_; }
  std::shared_ptr<const SubstitutionSystem> system_ptr() const { return sys_; }
  const std::vector<PlacedTile>& tiles() const { return tiles_; }
  std::size_t size() const { return tiles_.size(); }
  const Disk& window() const { return window_; }
  Vec2 origin() const { return origin_; }

  /// Plane position (patch coordinates) of a lattice point.
  Vec2 plane(LatticeVec v) const { return sys_->lattice.to_plane(v) - origin_; }
  Vec2 translation(std::size_t i) const { return plane(tiles_[i].translation); }
  Polygon polygon(std::size_t i) const { return place(sys_->prototiles[tiles_[i].proto], translation(i)); }
  Vec2 anchor(std::size_t i) const { return translation(i) + sys_->prototiles[tiles_[i].proto].anchor; }
  Vec2 centroid_of(std::size_t i) const { return translation(i) + centroid(sys_->prototiles[tiles_[i].proto].polygon); }
  double max_tile_diameter() const { return max_diam_; }

  /// Visits indices of tiles whose bounding box meets the box (may repeat).
  template <class Fn>
  void visit_box(BBox b, Fn&& fn) const {
    index_.visit_box(b, fn);
  }

  /// Tile owning point p: the one containing p + delta for a fixed generic delta.
  std::optional<std::size_t> owner(Vec2 p) const {
    const Vec2 q = p + owner_delta();
    std::optional<std::size_t> found;
    BBox b;
    b.expand(q);
    index_.visit_box(b, [&](int i) {
      if (found) return;
      if (contains_strictly(polygon(static_cast<std::size_t>(i)), q, 1e-12)) found = static_cast<std::size_t>(i);
    });
    return found;
  }

  /// Translated copy (a new chart of the same tiling).
  PatchRegion translated_by(Vec2 w) const { return PatchRegion(sys_, tiles_, {window_.center + w, window_.radius}, origin_ - w); }
  PatchRegion with_window(Disk w) const { return PatchRegion(sys_, tiles_, w, origin_); }

  static Vec2 owner_delta() { return unit_from_angle(10.0 * kPi / 180.0) * 1e-6; }

 private:
  std::shared_ptr<const SubstitutionSystem> sys_;
  std::vector<PlacedTile> tiles_;
  Disk window_;
  Vec2 origin_;
  UniformGrid index_;
  double max_diam_ = 0.0;

  void build_index() {
    BBox all;
    for (const Prototile& p : sys_->prototiles) max_diam_ = std::max(max_diam_, bounds(p.polygon).diameter());
    for (std::size_t i = 0; i < tiles_.size(); ++i) {
      const Vec2 t = translation(i);
      all.expand(t);
    }
    all.lo -= Vec2{max_diam_, max_diam_};
    all.hi += Vec2{max_diam_, max_diam_};
    index_ = UniformGrid(all, std::max(max_diam_, 1e-6));
    for (std::size_t i = 0; i < tiles_.size(); ++i) index_.insert_box(static_cast<int>(i), bounds(polygon(i)));
  }
};

/// Single tile at the lattice origin; window is the tile's inscribed disk.
inline PatchRegion seed_patch(std::shared_ptr<const SubstitutionSystem> sys, int proto) {
  const Disk in = inscribed_disk(sys->prototiles.at(proto).polygon);
  return PatchRegion(sys, {{proto, {0, 0}, sys->prototiles[proto].rotation}}, {in.center, in.radius * (1 - 1e-9)}, {0, 0});
}

/// Applies the substitution `generations` times. Tile positions scale by lambda, so the
/// window and origin scale with them.
inline PatchRegion expand_patch(const PatchRegion& seed, int generations) {
  if (generations < 0) throw PreconditionViolation("generations must be >= 0");
  const SubstitutionSystem& sys = seed.system();
  for (const PlacedTile& t : seed.tiles())
    if (t.proto < 0 || t.proto >= static_cast<int>(sys.size())) throw PreconditionViolation("seed tile has unknown prototile");
  std::vector<PlacedTile> cur = seed.tiles();
  double scale = 1.0;
  for (int g = 0; g < generations; ++g) {
    std::vector<PlacedTile> next;
    next.reserve(cur.size() * 4);
    for (const PlacedTile& t : cur)
      for (const Child& c : sys.rule[t.proto]) next.push_back({c.proto, t.translation * sys.expansion + c.offset, c.rotation});
    cur.swap(next);
    scale *= sys.expansion;
  }
  const Disk w{seed.window().center * scale, seed.window().radius * scale};
  return PatchRegion(seed.system_ptr(), std::move(cur), w, seed.origin() * scale);
}

/// Supertile of a prototile after `generations` steps, recentred so the window center is (0, 0).
inline PatchRegion supertile_patch(std::shared_ptr<const SubstitutionSystem> sys, int proto, int generations) {
  const PatchRegion p = expand_patch(seed_patch(sys, proto), generations);
  const Vec2 c = p.window().center;
  return p.translated_by(-c);
}

inline std::vector<long long> tile_counts(const PatchRegion& p) {
  std::vector<long long> n(p.system().size(), 0);
  for (const PlacedTile& t : p.tiles()) ++n[t.proto];
  return n;
}

/// Checks the patch invariants: no interior overlaps and full coverage of the window
/// (coverage sampled on a grid of the given spacing).
inline void validate_patch(const PatchRegion& p, double spacing = 0.25) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Polygon a = p.polygon(i);
    p.visit_box(bounds(a), [&](int j) {
      if (static_cast<std::size_t>(j) <= i) return;
      if (interiors_overlap(a, p.polygon(static_cast<std::size_t>(j))))
        throw PreconditionViolation("tiles " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
    });
  }
  const Disk w = p.window();
  const int n = static_cast<int>(std::ceil(w.radius / spacing));
  for (int i = -n; i <= n; ++i)
    for (int j = -n; j <= n; ++j) {
      const Vec2 q = w.center + Vec2{i * spacing, j * spacing};
      if (!w.contains(q)) continue;
      if (!p.owner(q)) throw PreconditionViolation("window point not covered by any tile");
    }
}

/// One tile of a canonical patch: prototile and lattice position relative to the reference lattice point.
struct KeyTile {
  int proto = 0;
  LatticeVec rel;
  auto operator<=>(const KeyTile&) const = default;
};

/// Canonical patch around a point: the fractional offset of the point from its lattice
/// reference (quantized) and the sorted tiles.
struct PatchKey {
  std::int64_t fx = 0, fy = 0;
  std::vector<KeyTile> tiles;
  auto operator<=>(const PatchKey&) const = default;

  std::string bytes() const {
    std::string s(sizeof(std::int64_t) * 2, '\0');
    std::memcpy(s.data(), &fx, sizeof fx);
    std::memcpy(s.data() + sizeof fx, &fy, sizeof fy);
    for (const KeyTile& k : tiles) {
      char buf[sizeof(int) + 2 * sizeof(std::int64_t)];
      std::memcpy(buf, &k.proto, sizeof(int));
      std::memcpy(buf + sizeof(int), &k.rel.a, sizeof(std::int64_t));
      std::memcpy(buf + sizeof(int) + sizeof(std::int64_t), &k.rel.b, sizeof(std::int64_t));
      s.append(buf, sizeof buf);
    }
    return s;
  }
};

struct PatternClass {
  int id = -1;
  double depth = 0.0;
  PatchKey canonical;
  /// Prototile of the tile owning the reference point.
  int owner_proto = -1;
  /// Number of tiles whose closure contains the reference point.
  int star = 0;
};

/// Registry of pattern classes at one depth. Insert-or-get is thread-safe; ids are
/// provisional until canonicalize() renumbers them in key order.
class ClassRegistry {
 public:
  explicit ClassRegistry(double depth) : depth_(depth) {}

  double depth() const { return depth_; }

  int insert_or_get(PatchKey key, int owner_proto, int star) {
    const std::string b = key.bytes();
    std::lock_guard lock(mu_);
    auto it = ids_.find(b);
    if (it != ids_.end()) return it->second;
    const int id = static_cast<int>(classes_.size());
    ids_.emplace(b, id);
    classes_.push_back({id, depth_, std::move(key), owner_proto, star});
    return id;
  }

  /// Renumbers classes by lexicographic canonical key. Returns old id -> new id.
  std::vector<int> canonicalize() {
    std::lock_guard lock(mu_);
    std::vector<int> order(classes_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (classes_[a].owner_proto != classes_[b].owner_proto) return classes_[a].owner_proto < classes_[b].owner_proto;
      return classes_[a].canonical < classes_[b].canonical;
    });
    std::vector<int> remap(classes_.size());
    std::vector<PatternClass> sorted;
    sorted.reserve(classes_.size());
    for (std::size_t n = 0; n < order.size(); ++n) {
      remap[order[n]] = static_cast<int>(n);
      sorted.push_back(std::move(classes_[order[n]]));
      sorted.back().id = static_cast<int>(n);
    }
    classes_.swap(sorted);
    ids_.clear();
    for (const PatternClass& c : classes_) ids_.emplace(c.canonical.bytes(), c.id);
    return remap;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return classes_.size();
  }
  const PatternClass& at(int id) const {
    std::lock_guard lock(mu_);
    return classes_.at(static_cast<std::size_t>(id));
  }
  std::optional<int> find(const PatchKey& key) const {
    std::lock_guard lock(mu_);
    auto it = ids_.find(key.bytes());
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

 private:
  double depth_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, int> ids_;
  std::vector<PatternClass> classes_;
};

/// Lattice reference of a point: x = plane(ref) + frac (patch coordinates).
struct PointRef {
  LatticeVec ref;
  Vec2 frac;
};

inline PointRef point_ref(const PatchRegion& p, Vec2 x) {
  const LatticeBasis& lat = p.system().lattice;
  Vec2 c = lat.coords(x + p.origin());
  // Points on the lattice up to rounding must get one representation.
  for (double* v : {&c.x, &c.y})
    if (std::abs(*v - std::round(*v)) < 1e-9) *v = std::round(*v);
  const LatticeVec l{static_cast<std::int64_t>(std::floor(c.x)), static_cast<std::int64_t>(std::floor(c.y))};
  const Vec2 frac = lat.e1 * (c.x - static_cast<double>(l.a)) + lat.e2 * (c.y - static_cast<double>(l.b));
  return {l, {snap(frac.x), snap(frac.y)}};
}

/// Builds the canonical patch key of the depth-R neighborhood of plane(ref) + frac: the owner tile
/// plus every tile at distance < R. All geometry is computed in coordinates relative to ref,
/// so translation-equivalent points produce identical keys.
inline PatternClass canonical_patch(const PatchRegion& p, PointRef pr, double R) {
  const SubstitutionSystem& sys = p.system();
  const Vec2 x = p.plane(pr.ref) + pr.frac;
  if (norm(x - p.window().center) + R > p.window().radius + 1e-9)
    throw WindowTooSmall("depth-" + fmt_real(R) + " neighborhood leaves the patch window");
  const Vec2 delta = PatchRegion::owner_delta();
  PatternClass out;
  out.depth = R;
  out.canonical.fx = quantize(pr.frac.x);
  out.canonical.fy = quantize(pr.frac.y);
  BBox box;
  const double reach = R + 1e-6;
  box.expand(x - Vec2{reach, reach});
  box.expand(x + Vec2{reach, reach});
  std::vector<int> seen;
  p.visit_box(box, [&](int i) { seen.push_back(i); });
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  for (int i : seen) {
    const PlacedTile& t = p.tiles()[i];
    const Prototile& proto = sys.prototiles[t.proto];
    const LatticeVec rel = t.translation - pr.ref;
    const Vec2 shift = sys.lattice.to_plane(rel) - pr.frac;
    // Cheap rejection by the tile's circumscribed circle about its first vertex.
    const double far = norm(shift + proto.polygon[0]);
    const double extent = p.max_tile_diameter();
    if (far > R + extent + 1e-6) continue;
    double d = std::numeric_limits<double>::infinity();
    bool inside = false;
    const std::size_t nv = proto.polygon.size();
    for (std::size_t a = 0, b = nv - 1; a < nv; b = a++) {
      const Vec2 pa = proto.polygon[a] + shift, pb = proto.polygon[b] + shift;
      d = std::min(d, distance_to_segment({0, 0}, pa, pb));
      if ((pa.y > 0.0) != (pb.y > 0.0) && 0.0 < pa.x + (0.0 - pa.y) * (pb.x - pa.x) / (pb.y - pa.y)) inside = !inside;
    }
    if (d <= 1e-9) ++out.star;
    bool owns = false;
    if (d <= 1e-5 || inside) {
      const Polygon poly = translated(proto.polygon, shift);
      owns = contains_strictly(poly, delta, 1e-12);
    }
    if (owns) out.owner_proto = t.proto;
    if (owns || (R > 0.0 && (inside || d < R - 1e-9))) out.canonical.tiles.push_back({t.proto, rel});
  }
  if (out.owner_proto < 0) throw WindowTooSmall("point is not covered by the patch");
  if (out.star == 0) out.star = 1;
  std::sort(out.canonical.tiles.begin(), out.canonical.tiles.end());
  return out;
}

inline PatternClass classify(const PatchRegion& p, PointRef pr, ClassRegistry& reg) {
  PatternClass c = canonical_patch(p, pr, reg.depth());
  c.id = reg.insert_or_get(c.canonical, c.owner_proto, c.star);
  return c;
}

/// Class of the translated patch around x at the registry's depth.
inline PatternClass classify_point(const PatchRegion& p, Vec2 x, ClassRegistry& reg) {
  return classify(p, point_ref(p, x), reg);
}

namespace detail {

struct LatticeTileHash {
  std::size_t operator()(const KeyTile& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.proto) * 0x9e3779b97f4a7c15ull;
    h ^= static_cast<std::uint64_t>(k.rel.a) * 0xbf58476d1ce4e5b9ull + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.rel.b) * 0x94d049bb133111ebull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

using TileSet = std::unordered_set<KeyTile, LatticeTileHash>;

inline TileSet tile_set(const PatchRegion& p) {
  TileSet s;
  s.reserve(p.size() * 2);
  for (const PlacedTile& t : p.tiles()) s.insert({t.proto, t.translation});
  return s;
}

/// Tiles entirely inside the disk, keyed by lattice position shifted by `shift`.
inline std::vector<KeyTile> tiles_inside(const PatchRegion& p, Disk d, LatticeVec shift, Vec2 frame_offset) {
  std::vector<KeyTile> out;
  BBox b;
  b.expand(d.center - Vec2{d.radius, d.radius} - frame_offset);
  b.expand(d.center + Vec2{d.radius, d.radius} - frame_offset);
  std::vector<int> seen;
  p.visit_box(b, [&](int i) { seen.push_back(i); });
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  for (int i : seen) {
    const Polygon poly = translated(p.polygon(static_cast<std::size_t>(i)), frame_offset);
    bool in = true;
    for (Vec2 v : poly) in = in && norm(v - d.center) <= d.radius + 1e-9;
    if (in) out.push_back({p.tiles()[i].proto, p.tiles()[i].translation + shift});
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// True if translating by the lattice vector v maps every tile inside the disk onto a tile of the patch.
inline bool translation_preserves(const PatchRegion& p, LatticeVec v, Disk region) {
  static thread_local const PatchRegion* cached = nullptr;
  static thread_local detail::TileSet set;
  if (cached != &p) {
    set = detail::tile_set(p);
    cached = &p;
  }
  for (const KeyTile& k : detail::tiles_inside(p, region, {0, 0}, {0, 0}))
    if (!set.count({k.proto, k.rel + v})) return false;
  return true;
}

/// Tiling metric on finite patches. Scans eps geometrically (ratio 1.05) from 1/radius_cap and returns
/// the first eps at which the patches agree on B_{1/eps}(0) after a shift |w| <= eps. Shifts that can
/// make tiles coincide differ from the frame offset by lattice vectors, so those are enumerated exactly.
inline double patch_metric(const PatchRegion& p1, const PatchRegion& p2, double radius_cap) {
  if (radius_cap <= 1.0) throw PreconditionViolation("radius_cap must exceed 1");
  for (const PatchRegion* p : {&p1, &p2})
    if (!p->window().contains_disk({0, 0}, radius_cap)) throw PreconditionViolation("patch does not contain B_cap(0)");
  if (&p1.system() != &p2.system() && p1.system().lattice.e1 != p2.system().lattice.e1)
    throw PreconditionViolation("patches must come from the same substitution system");
  const LatticeBasis& lat = p1.system().lattice;
  // w = plane(delta) + (o2 - o1) for lattice delta; enumerate |w| <= 1.
  const Vec2 off = p2.origin() - p1.origin();
  std::vector<std::pair<double, LatticeVec>> shifts;
  const Vec2 c = lat.coords(-off);
  const int span = static_cast<int>(std::ceil(2.0 / std::min(norm(lat.e1), norm(lat.e2)))) + 2;
  for (int a = -span; a <= span; ++a)
    for (int b = -span; b <= span; ++b) {
      const LatticeVec d{static_cast<std::int64_t>(std::llround(c.x)) + a, static_cast<std::int64_t>(std::llround(c.y)) + b};
      const double w = norm(lat.to_plane(d) + off);
      if (w <= 1.0 + 1e-12) shifts.push_back({w, d});
    }
  std::sort(shifts.begin(), shifts.end());
  for (double eps = 1.0 / radius_cap; eps < 1.0; eps *= 1.05) {
    const Disk ball{{0, 0}, 1.0 / eps};
    const auto s1 = detail::tiles_inside(p1, ball, {0, 0}, {0, 0});
    for (const auto& [w, d] : shifts) {
      if (w > eps + 1e-12) break;
      // p2 + w expressed in p1's lattice frame: tile t of p2 sits at t + d.
      const Vec2 wv = lat.to_plane(d) + off;
      const auto s2 = detail::tiles_inside(p2, ball, d, wv);
      if (s1 == s2) return eps;
    }
  }
  return 1.0;
}

struct DeloneMultiset {
  std::vector<Vec2> points;
  std::vector<int> colors;
  double r_pack = 0.0;
  double R_cover = 0.0;
  /// Certified slack: the true covering radius is at most R_cover + cover_slack.
  double cover_slack = 0.0;
};

/// Tile centroids colored by prototile. r_pack is the exact minimum pairwise distance;
/// R_cover is the largest distance from a window point to the set, found on a grid and
/// refined by local search, with the grid's Lipschitz slack reported.
inline DeloneMultiset extract_delone(const PatchRegion& p, double grid_step = 0.05) {
  DeloneMultiset d;
  for (std::size_t i = 0; i < p.size(); ++i) {
    d.points.push_back(p.centroid_of(i));
    d.colors.push_back(p.tiles()[i].proto);
  }
  BBox all;
  for (Vec2 q : d.points) all.expand(q);
  const double cell = std::max(p.max_tile_diameter(), 1e-6);
  UniformGrid g(all, cell);
  for (std::size_t i = 0; i < d.points.size(); ++i) {
    BBox b;
    b.expand(d.points[i]);
    g.insert_box(static_cast<int>(i), b);
  }
  auto nearest = [&](Vec2 q) {
    double best = std::numeric_limits<double>::infinity();
    for (int ring = 1;; ++ring) {
      BBox b;
      b.expand(q - Vec2{ring * cell, ring * cell});
      b.expand(q + Vec2{ring * cell, ring * cell});
      g.visit_box(b, [&](int i) { best = std::min(best, norm(d.points[i] - q)); });
      if (best <= (ring - 0.0) * cell || ring > 1000000) return best;
    }
  };
  d.r_pack = d.points.size() > 1 ? std::numeric_limits<double>::infinity() : 0.0;
  for (std::size_t i = 0; i < d.points.size(); ++i) {
    BBox b;
    b.expand(d.points[i] - Vec2{cell, cell});
    b.expand(d.points[i] + Vec2{cell, cell});
    g.visit_box(b, [&](int j) {
      if (static_cast<std::size_t>(j) != i) d.r_pack = std::min(d.r_pack, norm(d.points[j] - d.points[i]));
    });
  }
  const Disk w = p.window();
  const int n = static_cast<int>(std::ceil(w.radius / grid_step));
  std::vector<std::pair<double, Vec2>> top;
  for (int i = -n; i <= n; ++i)
    for (int j = -n; j <= n; ++j) {
      const Vec2 q = w.center + Vec2{i * grid_step, j * grid_step};
      if (!w.contains(q)) continue;
      const double r = nearest(q);
      if (r > d.R_cover) d.R_cover = r;
      top.push_back({r, q});
    }
  std::sort(top.begin(), top.end(), [](auto& a, auto& b) { return a.first > b.first || (a.first == b.first && (a.second.x < b.second.x || (a.second.x == b.second.x && a.second.y < b.second.y))); });
  if (top.size() > 32) top.resize(32);
  for (auto [r, q] : top) {
    double step = grid_step / 2;
    while (step > 1e-9) {
      bool moved = false;
      for (Vec2 dir : {Vec2{1, 0}, Vec2{-1, 0}, Vec2{0, 1}, Vec2{0, -1}}) {
        const Vec2 c = q + dir * step;
        if (!w.contains(c)) continue;
        const double rc = nearest(c);
        if (rc > r) r = rc, q = c, moved = true;
      }
      if (!moved) step /= 2;
    }
    d.R_cover = std::max(d.R_cover, r);
  }
  d.cover_slack = grid_step * std::sqrt(0.5);
  return d;
}

/// Smallest R (on a grid of step r_step) such that every ball of radius R inside the window
/// contains a translate of `target`; +infinity if no R up to the window radius works.
inline double repetitivity_radius(const PatchRegion& patch, const PatchRegion& target, double grid_step = 0.1) {
  if (target.size() == 0) return 0.0;
  const detail::TileSet set = detail::tile_set(patch);
  const PlacedTile& t0 = target.tiles().front();
  // Target extent around the centroid of its tile anchors (target's own coordinates).
  Vec2 tc;
  for (std::size_t i = 0; i < target.size(); ++i) tc += target.anchor(i);
  tc = tc / static_cast<double>(target.size());
  double rho = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i)
    for (Vec2 v : target.polygon(i)) rho = std::max(rho, norm(v - tc));
  std::vector<Vec2> centers;
  for (const PlacedTile& t : patch.tiles()) {
    if (t.proto != t0.proto) continue;
    const LatticeVec u = t.translation - t0.translation;
    bool ok = true;
    for (const PlacedTile& s : target.tiles())
      if (!set.count({s.proto, s.translation + u})) {
        ok = false;
        break;
      }
    if (ok) centers.push_back(tc + target.origin() - patch.origin() + patch.system().lattice.to_plane(u));
  }
  const Disk w = patch.window();
  if (centers.empty()) return std::numeric_limits<double>::infinity();
  BBox all;
  for (Vec2 c : centers) all.expand(c);
  const double cell = std::max(1.0, std::sqrt((all.hi.x - all.lo.x + 1) * (all.hi.y - all.lo.y + 1) / static_cast<double>(centers.size())));
  UniformGrid g(all, cell);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    BBox b;
    b.expand(centers[i]);
    g.insert_box(static_cast<int>(i), b);
  }
  auto nearest = [&](Vec2 q) {
    double best = std::numeric_limits<double>::infinity();
    for (int ring = 1; ring < 100000; ++ring) {
      BBox b;
      b.expand(q - Vec2{ring * cell, ring * cell});
      b.expand(q + Vec2{ring * cell, ring * cell});
      g.visit_box(b, [&](int i) { best = std::min(best, norm(centers[i] - q)); });
      if (best <= ring * cell) break;
    }
    return best;
  };
  // f(y) = distance to nearest occurrence + rho; need sup over |y - z| <= T - R of f <= R.
  const int n = static_cast<int>(std::ceil(w.radius / grid_step));
  std::vector<std::pair<double, double>> samples;  // (|y - z|, f(y))
  for (int i = -n; i <= n; ++i)
    for (int j = -n; j <= n; ++j) {
      const Vec2 y = w.center + Vec2{i * grid_step, j * grid_step};
      const double r = norm(y - w.center);
      if (r > w.radius) continue;
      samples.push_back({r, nearest(y) + rho});
    }
  std::sort(samples.begin(), samples.end());
  std::vector<double> prefix_max(samples.size());
  double m = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) prefix_max[i] = m = std::max(m, samples[i].second);
  auto sup_within = [&](double s) {
    auto it = std::upper_bound(samples.begin(), samples.end(), std::pair{s, std::numeric_limits<double>::infinity()});
    if (it == samples.begin()) return 0.0;
    return prefix_max[static_cast<std::size_t>(it - samples.begin()) - 1];
  };
  auto ok = [&](double R) { return sup_within(w.radius - R) <= R; };
  double prev = 0.0;
  for (double R = grid_step; R <= w.radius + 1e-12; R += grid_step / 2) {
    if (!ok(R)) {
      prev = R;
      continue;
    }
    // The condition is monotone in R; bisect the last step.
    double lo = prev, hi = R;
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      (ok(mid) ? hi : lo) = mid;
    }
    return hi;
  }
  // A ball of the full window radius: only its centre qualifies.
  if (sup_within(0.0) <= w.radius) return w.radius;
  return std::numeric_limits<double>::infinity();
}

}  // namespace lorentz
