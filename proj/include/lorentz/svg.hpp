#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "patch.hpp"
#include "scatterer.hpp"

namespace lorentz {

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s = buf;
  if (s == "-0.0000") s = "0.0000";
  return s;
}

inline const char* tile_fill(int proto) {
  static constexpr const char* palette[] = {"#e8c170", "#8fb8de", "#b5d99c", "#e59a8c", "#c4a7d7", "#f2e394",
                                            "#9ad0c2", "#d9a5b3", "#a7b8a8", "#d7c49e", "#9fa8da", "#ffcc80"};
  return palette[static_cast<std::size_t>(proto) % (sizeof palette / sizeof *palette)];
}

}  // namespace detail

/// Deterministic SVG writer in plane units. The y axis is flipped so the picture has the usual
/// mathematical orientation; numbers are printed with four decimals.
class SvgDocument {
 public:
  explicit SvgDocument(BBox view, double px_per_unit = 20.0) : view_(view), scale_(px_per_unit) {}

  /// Tiles meeting `clip` (the patch window by default).
  void add_patch(const PatchRegion& p, std::optional<Disk> clip = std::nullopt) {
    const Disk w = clip.value_or(p.window());
    out_ += "<g stroke=\"#333333\" stroke-width=\"" + detail::svg_num(0.03) + "\" stroke-linejoin=\"round\">\n";
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Polygon poly = p.polygon(i);
      if (!intersects_window(poly, w)) continue;
      out_ += "<path fill=\"";
      out_ += detail::tile_fill(p.tiles()[i].proto);
      out_ += "\" d=\"";
      for (std::size_t k = 0; k < poly.size(); ++k) out_ += (k == 0 ? "M" : " L") + point(poly[k]);
      out_ += " Z\"/>\n";
    }
    out_ += "</g>\n";
  }

  void add_scatterers(const ScattererField& f, std::optional<Disk> only = std::nullopt) {
    out_ += "<g fill=\"#404040\" fill-opacity=\"0.85\" stroke=\"none\">\n";
    for (std::size_t i = 0; i < f.instances.size(); ++i) {
      const Vec2 c = f.instances[i].center;
      if (only && !only->contains(c)) continue;
      out_ += "<circle cx=\"" + detail::svg_num(c.x) + "\" cy=\"" + detail::svg_num(-c.y) + "\" r=\"" +
              detail::svg_num(f.radius(static_cast<int>(i))) + "\"/>\n";
    }
    out_ += "</g>\n";
  }

  void add_polyline(const std::vector<Vec2>& pts, const std::string& color = "#c0392b", double width = 0.05) {
    if (pts.empty()) return;
    out_ += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + detail::svg_num(width) + "\" points=\"";
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (k) out_ += ' ';
      out_ += detail::svg_num(pts[k].x) + "," + detail::svg_num(-pts[k].y);
    }
    out_ += "\"/>\n";
  }

  void add_circle_outline(Disk d, const std::string& color = "#1f618d", double width = 0.08) {
    out_ += "<circle fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + detail::svg_num(width) + "\" cx=\"" +
            detail::svg_num(d.center.x) + "\" cy=\"" + detail::svg_num(-d.center.y) + "\" r=\"" + detail::svg_num(d.radius) + "\"/>\n";
  }

  /// Comment lines placed right after the root element (metadata, provenance).
  void add_comment(const std::string& text) { comments_ += "<!-- " + escape_comment(text) + " -->\n"; }

  std::string str() const {
    const double w = view_.hi.x - view_.lo.x, h = view_.hi.y - view_.lo.y;
    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::svg_num(w * scale_) + "\" height=\"" +
         detail::svg_num(h * scale_) + "\" viewBox=\"" + detail::svg_num(view_.lo.x) + " " + detail::svg_num(-view_.hi.y) + " " +
         detail::svg_num(w) + " " + detail::svg_num(h) + "\">\n";
    s += comments_;
    s += "<rect x=\"" + detail::svg_num(view_.lo.x) + "\" y=\"" + detail::svg_num(-view_.hi.y) + "\" width=\"" + detail::svg_num(w) +
         "\" height=\"" + detail::svg_num(h) + "\" fill=\"#ffffff\"/>\n";
    s += out_;
    s += "</svg>\n";
    return s;
  }

 private:
  BBox view_;
  double scale_;
  std::string comments_;
  std::string out_;

  static std::string point(Vec2 p) { return detail::svg_num(p.x) + " " + detail::svg_num(-p.y); }

  static bool intersects_window(const Polygon& poly, const Disk& w) {
    for (Vec2 v : poly)
      if (w.contains(v)) return true;
    return contains_strictly(poly, w.center, 0.0) || distance_to_boundary(poly, w.center) <= w.radius;
  }

  static std::string escape_comment(std::string t) {
    for (std::size_t k = t.find("--"); k != std::string::npos; k = t.find("--", k)) t.replace(k, 2, "- -");
    return t;
  }
};

inline BBox window_box(const Disk& d) {
  BBox b;
  b.expand(d.center - Vec2{d.radius, d.radius});
  b.expand(d.center + Vec2{d.radius, d.radius});
  return b;
}

/// Tiles meeting the patch window, one path per tile, filled by prototile id.
inline std::string render(const PatchRegion& p, double px_per_unit = 20.0) {
  SvgDocument doc(window_box(p.window()), px_per_unit);
  doc.add_patch(p);
  return doc.str();
}

}  // namespace lorentz
