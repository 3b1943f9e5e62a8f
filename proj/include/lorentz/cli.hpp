#pragma once

#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hyperbolicity.hpp"
#include "statistics.hpp"
#include "svg.hpp"

namespace lorentz {

inline constexpr const char* kToolVersion = "lorentz 0.1.0";

/// Everything that defines one run. Paths may also name a builtin rule (half-hex, square,
/// rhombus-product). `workers` and `out_dir` never influence the numbers and are left out of
/// the config hash.
struct ExperimentConfig {
  std::string kind;
  std::string rule = "half-hex";
  std::string assignment;
  std::string observable;
  std::string observable2;
  int proto = 0;
  int generations = 6;
  double window_radius = 0.0;  ///< 0: the whole supertile window
  std::string window_center;   ///< "(x, y)" in patch coordinates; empty: window center
  double address_depth = -1.0; ///< < 0: 2M + 2 from the certificate
  int sweep_directions = 720;
  double sweep_spacing = 0.25;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string out_dir = ".";
  std::size_t samples = 10000;
  double region = 0.0;  ///< sampling disk radius around the certified center; 0: automatic
  std::vector<int> n_list{0, 1, 2, 4, 8};
  std::vector<double> T_list{4.0, 8.0};
  double t_max = 200.0;
  int steps = 40;
  int starts = 50;
  double view_radius = 12.0;
  double quad_spacing = 0.05;
  int quad_nodes = 32;
  bool center_observables = true;
};

/// Raised for a failed property check; `invariant` names it.
struct PropertyFailure : Error {
  std::string invariant;
  PropertyFailure(std::string name, const std::string& detail) : Error(name + ": " + detail), invariant(std::move(name)) {}
};

struct RunResult {
  int exit_code = 0;
  std::string message;
  std::vector<std::string> files;  ///< paths written (empty on failure)
};

namespace detail {

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::optional<SubstitutionSystem> builtin_rule(const std::string& name) {
  if (name == "half-hex") return half_hex();
  if (name == "square") return square_grid();
  if (name == "rhombus-product") return rhombus_product();
  return std::nullopt;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    if constexpr (std::is_floating_point_v<T>) s += fmt_real(v[i]);
    else s += std::to_string(v[i]);
  }
  return s;
}

/// Canonical "key = value" text of the numerically relevant settings.
inline std::string canonical_config(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv{
      {"kind", c.kind},
      {"rule", c.rule},
      {"assignment", c.assignment},
      {"observable", c.observable},
      {"observable2", c.observable2},
      {"proto", std::to_string(c.proto)},
      {"generations", std::to_string(c.generations)},
      {"window_radius", fmt_real(c.window_radius)},
      {"window_center", c.window_center},
      {"address_depth", fmt_real(c.address_depth)},
      {"sweep_directions", std::to_string(c.sweep_directions)},
      {"sweep_spacing", fmt_real(c.sweep_spacing)},
      {"seed", std::to_string(c.seed)},
      {"samples", std::to_string(c.samples)},
      {"region", fmt_real(c.region)},
      {"n_list", join(c.n_list)},
      {"T_list", join(c.T_list)},
      {"t_max", fmt_real(c.t_max)},
      {"steps", std::to_string(c.steps)},
      {"starts", std::to_string(c.starts)},
      {"view_radius", fmt_real(c.view_radius)},
      {"quad_spacing", fmt_real(c.quad_spacing)},
      {"quad_nodes", std::to_string(c.quad_nodes)},
      {"center_observables", c.center_observables ? "true" : "false"},
  };
  std::string s;
  for (const auto& [k, v] : kv) s += k + " = " + v + "\n";
  return s;
}

inline std::string one_line(std::string s) {
  while (!s.empty() && s.back() == '\n') s.pop_back();
  for (char& ch : s)
    if (ch == '\n') ch = ';';
  return s;
}

/// Loaded inputs shared by the experiment kinds.
struct Context {
  const ExperimentConfig& cfg;
  std::shared_ptr<const SubstitutionSystem> sys;
  std::shared_ptr<const PatchRegion> patch;
  std::optional<ScattererField> field;
  std::string hash;
  std::string certificate = "none";
  std::vector<std::pair<std::string, std::string>> files;

  std::vector<std::pair<std::string, std::string>> metadata() const {
    return {{"tool", kToolVersion}, {"kind", cfg.kind}, {"config_hash", hash}, {"seed", std::to_string(cfg.seed)}, {"certificate", certificate}};
  }
  std::string text_header() const {
    std::string s;
    for (const auto& [k, v] : metadata()) s += "# " + k + "=" + v + "\n";
    return s;
  }
  void csv_header(CsvWriter& w) const {
    for (const auto& [k, v] : metadata()) w.comment(k, v);
  }
  void svg_header(SvgDocument& d) const {
    for (const auto& [k, v] : metadata()) d.add_comment(k + "=" + v);
  }
  void emit(const std::string& name, std::string content) { files.emplace_back(name, std::move(content)); }

  const ScattererField& f() const { return *field; }
  /// Flight bound used for border bands.
  double flight_bound() const { return f().flight_limit(); }
  Vec2 center() const { return f().certified.center; }
};

inline SubstitutionSystem load_rule(const ExperimentConfig& c) {
  if (auto b = builtin_rule(c.rule)) return *b;
  return parse_rule_file(c.rule);
}

inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = fnv1a(canonical_config(c));
  auto add_file = [&](const std::string& key, const std::string& path) {
    if (path.empty() || (key == "rule" && builtin_rule(path))) return;
    h = fnv1a("file " + key + "\n", h);
    h = fnv1a(read_text(path), h);
  };
  add_file("rule", c.rule);
  add_file("assignment", c.assignment);
  add_file("observable", c.observable);
  add_file("observable2", c.observable2);
  return hex64(h);
}

inline void build_patch(Context& ctx) {
  const ExperimentConfig& c = ctx.cfg;
  SubstitutionSystem sys = load_rule(c);
  validate(sys);
  if (c.proto < 0 || c.proto >= static_cast<int>(sys.size())) throw PreconditionViolation("proto out of range");
  if (c.generations < 0 || c.generations > 10) throw PreconditionViolation("generations must lie in [0, 10]");
  ctx.sys = std::make_shared<const SubstitutionSystem>(std::move(sys));
  PatchRegion p = supertile_patch(ctx.sys, c.proto, c.generations);
  if (c.window_radius > 0 || !c.window_center.empty()) {
    const Disk full = p.window();
    Disk w{c.window_center.empty() ? full.center : parse_point(c.window_center), c.window_radius > 0 ? c.window_radius : full.radius};
    if (!full.contains_disk(w.center, w.radius)) throw WindowTooSmall("requested window exceeds the generated patch");
    p = p.with_window(w);
  }
  ctx.patch = std::make_shared<const PatchRegion>(std::move(p));
}

inline void build_field(Context& ctx) {
  const ExperimentConfig& c = ctx.cfg;
  if (c.assignment.empty()) throw PreconditionViolation("an assignment file is required for kind '" + c.kind + "'");
  build_patch(ctx);
  const Assignment a = parse_assignment_file(c.assignment);
  ScattererField f = instantiate_field(ctx.patch, a);
  SweepOptions opt;
  opt.n_directions = c.sweep_directions;
  opt.spacing_fraction = c.sweep_spacing;
  const CategoryACertificate cert = certify_category_A(f, opt);
  if (!cert.verified())
    throw HorizonEscape("finite-horizon violation: unobstructed ray from (" + fmt_real(cert.witness_anchor.x) + ", " +
                        fmt_real(cert.witness_anchor.y) + ") in direction (" + fmt_real(cert.witness_direction.x) + ", " +
                        fmt_real(cert.witness_direction.y) + ")");
  assign_addresses(f, c.address_depth < 0 ? 2.0 * cert.M + 2.0 : c.address_depth);
  ctx.certificate = one_line(cert.report());
  spdlog::debug("certified M={} region radius {}", cert.M, f.certified.radius);
  ctx.field = std::move(f);
}

/// Sampling disk that leaves room for `n_max` flights of maximal length plus `extra`.
inline Disk sampling_region(const Context& ctx, int n_max, double extra = 0.0) {
  const double band = (n_max + 1) * ctx.flight_bound() + extra;
  const double avail = ctx.f().certified.radius - band;
  const double r = ctx.cfg.region > 0 ? ctx.cfg.region : avail;
  if (!(r > 0) || r > avail + 1e-12)
    throw WindowTooSmall("certified region radius " + fmt_real(ctx.f().certified.radius) + " cannot hold a sampling disk of radius " +
                         fmt_real(r) + " plus a border band of " + fmt_real(band));
  return {ctx.center(), r};
}

inline TLCFunction load_observable(const Context& ctx, const std::string& path) {
  if (path.empty()) throw PreconditionViolation("an observable file is required for kind '" + ctx.cfg.kind + "'");
  return lift_observable(ctx.f(), parse_observable_file(path));
}

// ---------------------------------------------------------------- kinds

inline void run_tile(Context& ctx) {
  build_patch(ctx);
  const PatchRegion& p = *ctx.patch;
  const SubstitutionSystem& sys = *ctx.sys;
  try {
    validate_patch(p);
  } catch (const Error& e) {
    throw PropertyFailure("patch-validity", e.what());
  }
  const auto counts = tile_counts(p);
  // Row `proto` of R^g.
  const auto R = sys.matrix();
  std::vector<long long> row(sys.size(), 0);
  row[ctx.cfg.proto] = 1;
  for (int g = 0; g < ctx.cfg.generations; ++g) {
    std::vector<long long> next(sys.size(), 0);
    for (std::size_t i = 0; i < sys.size(); ++i)
      for (std::size_t j = 0; j < sys.size(); ++j) next[j] += row[i] * R[i][j];
    row = next;
  }
  if (ctx.cfg.window_radius <= 0 && ctx.cfg.window_center.empty() && counts != row)
    throw PropertyFailure("tile-counts", "tile counts differ from the substitution matrix power");

  SvgDocument doc(window_box(p.window()));
  ctx.svg_header(doc);
  doc.add_patch(p);
  ctx.emit("tiles.svg", doc.str());

  std::ostringstream t;
  CsvWriter w(t);
  ctx.csv_header(w);
  w.header({"index", "proto", "rotation", "lattice_a", "lattice_b", "x", "y"});
  for (std::size_t i = 0; i < p.size(); ++i) {
    const PlacedTile& pt = p.tiles()[i];
    const Vec2 x = p.translation(i);
    w.cell(i).cell(pt.proto).cell(pt.rotation).cell(static_cast<long long>(pt.translation.a)).cell(static_cast<long long>(pt.translation.b));
    w.cell(x.x).cell(x.y).end_row();
  }
  ctx.emit("tiles.csv", t.str());

  const PerronData pd = perron(R);
  long long total = 0;
  for (long long n : counts) total += n;
  std::ostringstream fq;
  CsvWriter wf(fq);
  ctx.csv_header(wf);
  wf.comment("perron_eigenvalue", fmt_real(pd.eigenvalue));
  wf.header({"proto", "count", "matrix_count", "frequency", "perron_frequency"});
  for (std::size_t i = 0; i < sys.size(); ++i)
    wf.cell(i).cell(counts[i]).cell(row[i]).cell(static_cast<double>(counts[i]) / static_cast<double>(total)).cell(pd.left[i]).end_row();
  ctx.emit("frequencies.csv", fq.str());
}

inline void run_scatter(Context& ctx) {
  build_field(ctx);
  const ScattererField& f = ctx.f();
  const Disk view{ctx.center(), ctx.cfg.view_radius};
  SvgDocument doc(window_box(view));
  ctx.svg_header(doc);
  doc.add_patch(*ctx.patch, view);
  doc.add_scatterers(f, view);
  ctx.emit("field.svg", doc.str());

  std::ostringstream s;
  CsvWriter w(s);
  ctx.csv_header(w);
  w.header({"index", "x", "y", "radius", "class", "address", "lattice_a", "lattice_b"});
  for (std::size_t i = 0; i < f.instances.size(); ++i) {
    const Instance& in = f.instances[i];
    w.cell(i).cell(in.center.x).cell(in.center.y).cell(f.radius(static_cast<int>(i))).cell(in.cls).cell(in.address);
    w.cell(static_cast<long long>(in.lattice.a)).cell(static_cast<long long>(in.lattice.b)).end_row();
  }
  ctx.emit("scatterers.csv", s.str());

  std::string c = ctx.text_header();
  c += f.certificate->report();
  c += "certified_center=(" + fmt_real(f.certified.center.x) + "," + fmt_real(f.certified.center.y) + ")\n";
  c += "certified_radius=" + fmt_real(f.certified.radius) + "\n";
  c += "scatterers=" + std::to_string(f.instances.size()) + "\n";
  c += "classes=" + std::to_string(f.classes->size()) + "\n";
  c += "address_depth=" + fmt_real(f.address_depth) + "\n";
  c += "addresses=" + std::to_string(f.addresses->size()) + "\n";
  const double probe = std::min(10.0, f.certified.radius / 2);
  const auto tr = find_lattice_translation(f, 6.0, {ctx.center(), probe});
  c += "lattice_translation=" + (tr ? "(" + fmt_real(tr->x) + "," + fmt_real(tr->y) + ")" : std::string("none")) + "\n";
  ctx.emit("certificate.txt", c);
}

inline void run_trajectory(Context& ctx) {
  build_field(ctx);
  const ScattererField& f = ctx.f();
  const int n = ctx.cfg.steps;
  if (n < 1) throw PreconditionViolation("steps must be positive");
  // Starts near the center; an orbit that reaches the border raises RegionExit.
  const Disk start{ctx.center(), std::min(5.0, f.certified.radius / 4)};
  const CollisionState x0 = sample_invariant_measure(f, 1, ctx.cfg.seed, start).front();
  const auto orb = orbit(f, x0, n);

  std::ostringstream s;
  CsvWriter w(s);
  ctx.csv_header(w);
  w.header({"k", "instance", "class", "rho", "theta", "tau", "x", "y"});
  std::vector<Vec2> pts;
  BBox box;
  auto row = [&](int k, const CollisionState& x, double tau) {
    const Vec2 p = f.chart(x.instance, x.rho).point;
    pts.push_back(p);
    box.expand(p);
    w.cell(k).cell(x.instance).cell(x.cls).cell(x.rho).cell(x.theta).cell(tau).cell(p.x).cell(p.y).end_row();
  };
  row(0, x0, 0.0);
  for (int k = 0; k < n; ++k) row(k + 1, orb[k].to, orb[k].tau);
  ctx.emit("trajectory.csv", s.str());

  box.lo -= Vec2{2.0, 2.0};
  box.hi += Vec2{2.0, 2.0};
  const Vec2 mid = (box.lo + box.hi) * 0.5;
  const Disk cover{mid, norm(box.hi - mid)};
  SvgDocument doc(box);
  ctx.svg_header(doc);
  doc.add_patch(*ctx.patch, cover);
  doc.add_scatterers(f, cover);
  doc.add_polyline(pts);
  ctx.emit("trajectory.svg", doc.str());
}

struct InvariantLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline void run_invariants(Context& ctx) {
  build_field(ctx);
  const ScattererField& f = ctx.f();
  const Disk reg = sampling_region(ctx, 2);
  const auto S = sample_invariant_measure(f, ctx.cfg.samples, ctx.cfg.seed, reg);
  std::vector<InvariantLine> lines;

  // Reversibility and chart round trips.
  double rev = 0.0, chart = 0.0, vol = 0.0;
  std::size_t regular = 0;
  for (const CollisionState& x : S) {
    try {
      const FlightEvent a = collision_map(f, x);
      const FlightEvent b = collision_map(f, time_reversal(a.to));
      const CollisionState back = time_reversal(b.to);
      const double P = f.perimeter(x.instance);
      double dr = std::abs(back.rho - x.rho);
      dr = std::min(dr, P - dr);
      rev = std::max({rev, back.instance == x.instance ? 0.0 : 1.0, dr, std::abs(back.theta - x.theta)});
      const Ray r = to_ray(f, x);
      const CollisionState y = state_from_ray(f, x.instance, r.origin, r.direction);
      double cr = std::abs(y.rho - x.rho);
      cr = std::min(cr, P - cr);
      chart = std::max({chart, cr, std::abs(y.theta - x.theta)});
      const Mat2 D = flight_jacobian(a.tau, curvature_at(f, x), curvature_at(f, a.to), std::cos(x.theta), std::cos(a.to.theta));
      vol = std::max(vol, std::abs(std::abs(D.determinant()) * std::cos(a.to.theta) - std::cos(x.theta)));
      ++regular;
    } catch (const Singularity&) {
    }
  }
  lines.push_back({"reversibility", rev <= 1e-9, "max_error=" + fmt_real(rev)});
  lines.push_back({"chart-roundtrip", chart <= 1e-9, "max_error=" + fmt_real(chart)});
  lines.push_back({"phase-volume", vol <= 1e-6, "max_error=" + fmt_real(vol)});

  const ConeReport cr = check_cone_invariance(f, S);
  lines.push_back({"cone-invariance", cr.failures == 0, "tested=" + std::to_string(cr.tested) + " failures=" + std::to_string(cr.failures)});

  const CylinderCells cells{4, 4, static_cast<int>(f.addresses->size())};
  const InvarianceReport ir = measure_invariance(f, S, cells, 4.0, ctx.cfg.workers);
  lines.push_back({"measure-invariance", ir.pass_fraction() >= 0.99,
                   "cells=" + std::to_string(ir.cells) + " failures=" + std::to_string(ir.failures) + " max_z=" + fmt_real(ir.max_z)});

  std::string out = ctx.text_header();
  out += "regular_states=" + std::to_string(regular) + "\n";
  const InvariantLine* bad = nullptr;
  for (const InvariantLine& l : lines) {
    out += l.name + "=" + (l.pass ? "pass " : "FAIL ") + l.detail + "\n";
    if (!l.pass && !bad) bad = &l;
  }
  if (bad) throw PropertyFailure(bad->name, bad->detail);
  ctx.emit("invariants.txt", out);
}

inline TLCFunction centered(const Context& ctx, const TLCFunction& h, const std::vector<CollisionState>& S) {
  if (!ctx.cfg.center_observables) return h;
  const TLCFunction one = lift_observable(ctx.f(), ObservableSpec::constant(1.0));
  return h.shifted(-mu_bar_inner_product(ctx.f(), h, one, 0, S, ctx.cfg.workers).mean);
}

inline void run_mixing(Context& ctx) {
  build_field(ctx);
  const ScattererField& f = ctx.f();
  const ExperimentConfig& c = ctx.cfg;
  if (c.n_list.empty() || c.T_list.empty()) throw PreconditionViolation("n_list and T_list must be nonempty");
  const int n_max = *std::max_element(c.n_list.begin(), c.n_list.end());
  const double T_max = *std::max_element(c.T_list.begin(), c.T_list.end());
  const Disk reg = sampling_region(ctx, n_max);
  if (T_max + (n_max + 1) * ctx.flight_bound() > f.certified.radius) throw WindowTooSmall("largest T plus border band exceeds the certified region");
  const auto S = sample_invariant_measure(f, c.samples, c.seed, reg);
  const TLCFunction h1 = centered(ctx, load_observable(ctx, c.observable), S);
  const TLCFunction h2 = c.observable2.empty() ? h1 : centered(ctx, load_observable(ctx, c.observable2), S);

  MixingOptions opt;
  opt.n_list = c.n_list;
  opt.T_list = c.T_list;
  opt.center = ctx.center();
  opt.quadrature.rho_spacing = c.quad_spacing;
  opt.quadrature.theta_nodes = c.quad_nodes;
  opt.workers = c.workers;
  const double scale = 2.0 * perimeter_density(f, reg);
  const auto res = mixing_experiment(f, h1, h2, S, scale, opt);

  std::ostringstream m;
  CsvWriter w(m);
  ctx.csv_header(w);
  w.header({"n", "T", "raw", "normalized", "sigma", "mc", "beta1", "beta2", "residual"});
  for (const CorrelationResult& r : res)
    w.cell(r.n).cell(r.T).cell(r.raw).cell(r.normalized).cell(r.sigma).cell(r.mc).cell(r.beta1).cell(r.beta2).cell(r.residual).end_row();
  // Summary: residual slope in T for each n.
  for (int n : c.n_list) {
    std::vector<double> Ts, rs;
    for (const CorrelationResult& r : res)
      if (r.n == n && r.residual != 0.0) Ts.push_back(r.T), rs.push_back(std::abs(r.residual));
    if (Ts.size() >= 2) w.comment("residual_slope_n" + std::to_string(n), fmt_real(loglog_slope(Ts, rs)));
  }
  ctx.emit("mixing.csv", m.str());

  std::ostringstream k;
  CsvWriter wk(k);
  ctx.csv_header(wk);
  std::vector<double> ns, mags;
  const double T0 = c.T_list.front();
  for (const CorrelationResult& r : res)
    if (r.T == T0) ns.push_back(r.n), mags.push_back(std::abs(r.mc));
  const KendallResult kt = kendall_tau(ns, mags);
  wk.comment("kendall_tau", fmt_real(kt.tau));
  wk.comment("kendall_p_less", fmt_real(kt.p_less));
  wk.header({"n", "correlation", "sigma", "z"});
  for (const CorrelationResult& r : res)
    if (r.T == T0) wk.cell(r.n).cell(r.mc).cell(r.sigma).cell(r.sigma > 0 ? r.mc / r.sigma : 0.0).end_row();
  ctx.emit("correlations.csv", k.str());
}

inline void run_ergodic(Context& ctx) {
  build_field(ctx);
  const ScattererField& f = ctx.f();
  const ExperimentConfig& c = ctx.cfg;
  if (c.starts < 2) throw PreconditionViolation("starts must be at least 2");
  const Disk reg = sampling_region(ctx, 1);
  const TLCFunction h = load_observable(ctx, c.observable);
  const auto S = sample_invariant_measure(f, c.samples, c.seed, reg);
  // tau-bar^-1 beta(G-bar) as the ratio of mu_bar means of h tau and tau.
  std::vector<double> ht, tt;
  for (const CollisionState& x : S) {
    try {
      const double tau = collision_map(f, x).tau;
      ht.push_back(h(f, x) * tau);
      tt.push_back(tau);
    } catch (const Singularity&) {
    }
  }
  const double target = pairwise_sum(ht) / pairwise_sum(tt);

  const double small = std::min(reg.radius, 5.0);
  const auto starts = sample_invariant_measure(f, static_cast<std::size_t>(c.starts), c.seed + 1, Disk{reg.center, small});
  const double bound = f.flight_limit() * h.max_abs();
  std::vector<double> Ts = c.T_list;
  if (Ts.empty()) Ts = {c.t_max, 2.0 * c.t_max};

  std::ostringstream e;
  CsvWriter w(e);
  ctx.csv_header(w);
  w.comment("target", fmt_real(target));
  std::vector<std::vector<double>> avg(Ts.size());
  std::vector<std::vector<FlowAverage>> runs(starts.size());
  parallel_chunks(starts.size(), c.workers, [&](std::size_t s) {
    for (double T : Ts) runs[s].push_back(flow_average(f, h, starts[s], T));
  });
  for (std::size_t t = 0; t < Ts.size(); ++t) {
    for (std::size_t s = 0; s < starts.size(); ++s) {
      const FlowAverage& a = runs[s][t];
      if (std::abs(a.time_integral - a.collision_sum) > bound)
        throw PropertyFailure("collision-sum-identity", "partial flight exceeds M max|g| at start " + std::to_string(s));
      avg[t].push_back(a.time_average());
    }
    const MeanSigma ms = mean_sigma(avg[t]);
    w.comment("T" + std::to_string(t), fmt_real(Ts[t]) + " mean=" + fmt_real(ms.mean) + " spread=" + fmt_real(ms.sigma * std::sqrt(static_cast<double>(avg[t].size()))));
  }
  w.header({"start", "T", "time_average", "collisions"});
  for (std::size_t t = 0; t < Ts.size(); ++t)
    for (std::size_t s = 0; s < starts.size(); ++s) w.cell(s).cell(Ts[t]).cell(runs[s][t].time_average()).cell(runs[s][t].collisions).end_row();
  ctx.emit("ergodic.csv", e.str());
}

inline void run_spectrum(Context& ctx) {
  const ExperimentConfig& c = ctx.cfg;
  SubstitutionSystem sys = load_rule(c);
  validate(sys);
  const DeviationSpectrum d = deviation_spectrum(sys.matrix());
  std::ostringstream s;
  CsvWriter w(s);
  ctx.csv_header(w);
  w.comment("perron", fmt_real(d.perron));
  w.comment("d_plus", std::to_string(d.d_plus));
  w.comment("predicted_slope", fmt_real(std::max(d.subleading(), 1.0)));
  w.header({"index", "re", "im", "modulus", "exponent", "jordan", "multiplicity"});
  for (std::size_t i = 0; i < d.entries.size(); ++i) {
    const SpectrumEntry& e = d.entries[i];
    w.cell(i).cell(e.eigenvalue.real()).cell(e.eigenvalue.imag()).cell(e.modulus).cell(e.exponent).cell(e.jordan).cell(e.multiplicity).end_row();
  }
  ctx.emit("spectrum.csv", s.str());
  if (c.assignment.empty() || c.observable.empty()) return;

  // Empirical deviation of ergodic integrals of a centered observable.
  build_field(ctx);
  const ScattererField& f = ctx.f();
  const double T_max = *std::max_element(c.T_list.begin(), c.T_list.end());
  const double reach = f.certified.radius - T_max - 1.0;
  if (!(reach > 0)) throw WindowTooSmall("largest T exceeds the certified region");
  TLCFunction h = load_observable(ctx, c.observable);
  double beta = 0.0;
  if (c.center_observables) beta = planar_average(f, h, ctx.center(), f.certified.radius - 1.0);
  std::vector<Vec2> centers;
  Stream rs(c.seed, 0);
  while (static_cast<int>(centers.size()) < c.starts) {
    const double x = rs.uniform(-1, 1), y = rs.uniform(-1, 1);
    if (x * x + y * y >= 1) continue;
    centers.push_back(ctx.center() + Vec2{x, y} * reach);
  }
  const DeviationFit fit = deviation_fit(f, h, beta, centers, c.T_list);
  std::ostringstream o;
  CsvWriter wd(o);
  ctx.csv_header(wd);
  wd.comment("beta", fmt_real(beta));
  wd.comment("slope", fmt_real(fit.slope));
  wd.header({"T", "rms_deviation"});
  for (std::size_t i = 0; i < fit.radii.size(); ++i) wd.cell(fit.radii[i]).cell(fit.rms[i]).end_row();
  ctx.emit("deviation.csv", o.str());
}

}  // namespace detail

/// Runs one experiment and writes its artifacts into cfg.out_dir. Exit codes: 0 success,
/// 1 invalid input (parse, rule, window, geometry), 2 failed property check.
inline RunResult run(const ExperimentConfig& cfg) {
  RunResult res;
  detail::Context ctx{cfg, nullptr, nullptr, std::nullopt, {}, "none", {}};
  try {
    ctx.hash = detail::config_hash(cfg);
    spdlog::info("{} run, config hash {}", cfg.kind, ctx.hash);
    if (cfg.kind == "tile") detail::run_tile(ctx);
    else if (cfg.kind == "scatter") detail::run_scatter(ctx);
    else if (cfg.kind == "trajectory") detail::run_trajectory(ctx);
    else if (cfg.kind == "invariants") detail::run_invariants(ctx);
    else if (cfg.kind == "mixing") detail::run_mixing(ctx);
    else if (cfg.kind == "ergodic") detail::run_ergodic(ctx);
    else if (cfg.kind == "spectrum") detail::run_spectrum(ctx);
    else throw PreconditionViolation("unknown experiment kind '" + cfg.kind + "'");
  } catch (const PropertyFailure& e) {
    res.exit_code = 2;
    res.message = std::string("property check failed: ") + e.what();
    return res;
  } catch (const std::exception& e) {
    res.exit_code = 1;
    res.message = std::string("invalid experiment: ") + e.what();
    return res;
  }
  namespace fs = std::filesystem;
  try {
    fs::create_directories(cfg.out_dir);
    for (const auto& [name, content] : ctx.files) {
      const std::string path = (fs::path(cfg.out_dir) / name).string();
      std::ofstream out(path, std::ios::binary);
      res.files.push_back(path);
      if (!(out << content)) throw Error("cannot write " + path);
    }
  } catch (const std::exception& e) {
    for (const std::string& p : res.files) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    res.files.clear();
    res.exit_code = 1;
    res.message = std::string("output failure: ") + e.what();
    return res;
  }
  res.message = "ok";
  return res;
}

}  // namespace lorentz
