#include "qlab/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "qlab/conformal_ops.hpp"
#include "qlab/error.hpp"
#include "qlab/field.hpp"
#include "qlab/mobius.hpp"
#include "qlab/moving_plane.hpp"
#include "qlab/radial_blowup.hpp"
#include "qlab/rescale.hpp"
#include "qlab/stereographic.hpp"

namespace qlab {

using nlohmann::json;

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::pass: return "PASS";
    case Outcome::fail: return "FAIL";
    case Outcome::expected_fail: return "XFAIL";
    case Outcome::unexpected_pass: return "XPASS";
  }
  return "FAIL";
}

bool ExperimentResult::passed() const {
  for (const auto& g : groups)
    if (g.outcome == Outcome::fail || g.outcome == Outcome::unexpected_pass) return false;
  return true;
}

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

[[noreturn]] void config_fail(const std::string& what) { throw Error(ErrorCode::config_error, what); }

/// Typed access to one JSON object; every key must be consumed, so typos in
/// a config are errors rather than silently ignored defaults.
class ConfigReader {
 public:
  ConfigReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_fail(where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T require(const std::string& key) {
    if (!j_.contains(key)) config_fail("missing " + where(key));
    return read<T>(key);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    return j_.contains(key) ? read<T>(key) : fallback;
  }

  double positive(const std::string& key, double fallback) {
    const double v = get<double>(key, fallback);
    if (!(v > 0.0) || !std::isfinite(v)) config_fail(where(key) + " must be positive");
    return v;
  }

  int at_least(const std::string& key, int fallback, int lo) {
    const int v = get<int>(key, fallback);
    if (v < lo) config_fail(where(key) + " must be >= " + std::to_string(lo));
    return v;
  }

  const json& raw(const std::string& key) {
    if (!j_.contains(key)) config_fail("missing " + where(key));
    used_.insert(key);
    return j_.at(key);
  }

  ConfigReader child(const std::string& key) { return ConfigReader(raw(key), where(key)); }

  Point point(const std::string& key, int n, std::optional<Point> fallback = std::nullopt) {
    if (!j_.contains(key)) {
      if (fallback) return *fallback;
      config_fail("missing " + where(key));
    }
    const auto v = read<std::vector<double>>(key);
    if (static_cast<int>(v.size()) != n) config_fail(where(key) + " must have " + std::to_string(n) + " entries");
    Point p(n);
    for (int i = 0; i < n; ++i) p[i] = v[static_cast<std::size_t>(i)];
    return p;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.count(key)) config_fail("unknown key " + where(key));
  }

  std::string where(const std::string& key = "") const {
    return key.empty() ? path_ : path_ + "." + key;
  }

 private:
  template <class T>
  T read(const std::string& key) {
    used_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      config_fail(where(key) + " has the wrong type");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

using Job = std::function<ExperimentResult()>;

struct Context {
  int n = 0;
  std::optional<std::uint64_t> seed;
  std::filesystem::path base_dir;

  std::uint64_t need_seed() const {
    if (!seed) config_fail("this experiment is Monte Carlo and needs a seed (config or --seed)");
    return *seed;
  }
};

AssertionGroup check(const std::string& name, bool ok, const std::string& detail) {
  return {name, ok ? Outcome::pass : Outcome::fail, detail};
}

std::string csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
    out << '\n';
  }
  return out.str();
}

json point_json(const Point& p) { return std::vector<double>(p.data(), p.data() + p.size()); }

Bubble parse_bubble(ConfigReader r, int n, const std::string& default_normalization = "standard") {
  const double lambda = r.positive("lambda", 1.0);
  const Point center = r.point("center", n, Point::Zero(n));
  const auto norm = r.get<std::string>("normalization", default_normalization);
  r.finish();
  if (norm == "standard") return Bubble(n, lambda, center);
  if (norm == "unit_q") return Bubble::unit_q(n, lambda, center);
  config_fail(r.where("normalization") + " must be \"standard\" or \"unit_q\"");
}

SchottkyGroup parse_group(ConfigReader& r, const Context& ctx) {
  json j;
  if (r.has("group") && r.has("group_file")) config_fail("give either group or group_file, not both");
  if (r.has("group")) {
    j = r.raw("group");
  } else {
    const auto file = ctx.base_dir / r.require<std::string>("group_file");
    std::ifstream in(file);
    if (!in) config_fail("cannot read group file " + file.string());
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      config_fail("group file " + file.string() + ": " + e.what());
    }
  }
  SchottkyGroup g = SchottkyGroup::from_json(j);
  if (g.dim() != ctx.n) config_fail("group dimension differs from n");
  return g;
}

struct Source {
  std::shared_ptr<const Field> field;
  std::vector<Sphere> singular;
  double coefficient = 1.0;  // c in (-Delta)^2 v = c v^q for the seed bubble
  json description;
};

Source parse_source(ConfigReader r, const Context& ctx, const std::string& default_normalization) {
  const auto type = r.require<std::string>("type");
  Source s;
  if (type == "bubble") {
    json desc = r.raw("bubble");
    const Bubble b = parse_bubble(r.child("bubble"), ctx.n, default_normalization);
    s.field = std::make_shared<Bubble>(b);
    s.coefficient = b.equation_constant() * std::pow(b.amplitude(), 1.0 - exponents(ctx.n).nonlinearity);
    s.description = {{"type", type}, {"bubble", desc}};
  } else if (type == "automorphic") {
    json desc = r.raw("bubble");
    const Bubble b = parse_bubble(r.child("bubble"), ctx.n, default_normalization);
    const SchottkyGroup g = parse_group(r, ctx);
    const int length = r.at_least("length", 3, 0);
    s.field = std::make_shared<BubbleSum>(b, g, length);
    s.singular = g.spheres();
    s.coefficient = b.equation_constant() * std::pow(b.amplitude(), 1.0 - exponents(ctx.n).nonlinearity);
    s.description = {{"type", type}, {"bubble", desc}, {"length", length}};
  } else {
    config_fail(r.where("type") + " must be \"bubble\" or \"automorphic\"");
  }
  r.finish();
  return s;
}

// ---------------------------------------------------------------- bubble-check

Job bubble_check(ConfigReader& r, const Context& ctx) {
  const int n = ctx.n;
  const double lambda = r.positive("lambda", 1.0);
  const double half_width = r.positive("half_width", 1.0);
  const int m = r.at_least("m", 17, 9);
  const int probes = r.at_least("probes", 256, 1);
  const int radial_nodes = r.at_least("radial_nodes", 1601, 16);
  const double radial_max = r.positive("radial_max", 8.0);
  const double grid_tol = r.positive("grid_tolerance", 1e-2);
  const double radial_tol = r.positive("radial_tolerance", 1e-6);
  const double min_order = r.positive("min_order", 2.0);
  const bool refine = r.get<bool>("refine", true);
  std::size_t nodes = 1;
  for (int i = 0; i < n; ++i) nodes *= static_cast<std::size_t>(m);
  if (nodes > GridField::kMaxNodes) config_fail("m^n exceeds the grid size limit");

  return [=] {
    const auto exp = exponents(n);
    const double k = bubble_constant(n);
    const Bubble u(n, lambda, Point::Zero(n));
    ExperimentResult res;

    const RadialField v = RadialField::sample(RadialField::uniform_radii(radial_max, static_cast<std::size_t>(radial_nodes)),
                                              [&](double s) { return u.radial_value(s); });
    const RadialField b = radial_bilaplacian(v, n);
    const RadialField q = radial_q_curvature(v, exp);
    const double exact0 = k * std::pow(u.radial_value(0.0), exp.nonlinearity);
    const double err_b = std::abs(b.value(0) - exact0) / exact0;
    const double err_q = std::abs(q.value(0) - k) / k;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i + b.invalid_tail() < b.size(); ++i)
      rows.push_back({v.radius(i), v.value(i), b.value(i), k * std::pow(v.value(i), exp.nonlinearity), q.value(i)});
    res.artifacts.push_back({"radial.csv", csv({"r", "u", "bilaplacian", "exact", "q_curvature"}, rows)});
    res.groups.push_back(check("radial", err_b <= radial_tol && err_q <= radial_tol,
                               "bilaplacian(0) = " + format_number(b.value(0)) + " vs " + format_number(exact0) +
                                   ", Q(0) = " + format_number(q.value(0)) + " vs " + format_number(k)));

    const ValueFn f = [&](const Point& x) { return u.value(x); };
    const GridField g = GridField::sample(n, -half_width, half_width, m, f);
    const GridField bl = bilaplacian(g);
    const auto valid = bl.valid_indices();
    double num = 0, den = 0;
    for (auto i : valid) {
      const double rhs = k * std::pow(g[i], exp.nonlinearity);
      num = std::max(num, std::abs(bl[i] - rhs));
      den = std::max(den, rhs);
    }
    const double rel = num / den;
    res.groups.push_back(check("grid", rel <= grid_tol,
                               "m = " + std::to_string(m) + " relative residual " + format_number(rel)));

    json order_report;
    if (refine) {
      // Coarse nodes are fine nodes of the refined grid, so stencils at h and
      // h/2 at the same points give the refined residual without building it.
      const double h = g.spacing();
      const std::size_t stride = std::max<std::size_t>(1, valid.size() / static_cast<std::size_t>(probes));
      double err_c = 0, err_f = 0, consistency = 0;
      for (std::size_t j = 0; j < valid.size(); j += stride) {
        const Point x = g.coordinate(valid[j]);
        const double rhs = k * std::pow(u.value(x), exp.nonlinearity);
        const double coarse = stencil_bilaplacian(f, x, h);
        err_c = std::max(err_c, std::abs(coarse - rhs));
        err_f = std::max(err_f, std::abs(stencil_bilaplacian(f, x, h / 2) - rhs));
        consistency = std::max(consistency, std::abs(coarse - bl[valid[j]]) / den);
      }
      const double order = std::log2(err_c / err_f);
      order_report = {{"m_fine", 2 * m - 1},
                      {"coarse_error", err_c / den},
                      {"fine_error", err_f / den},
                      {"order", order},
                      {"probe_grid_consistency", consistency}};
      res.groups.push_back(check("order", order >= min_order,
                                 "m " + std::to_string(m) + " -> " + std::to_string(2 * m - 1) + " order " +
                                     format_number(order)));
    }
    res.report = {{"n", n},
                  {"lambda", lambda},
                  {"bubble_constant", k},
                  {"radial", {{"bilaplacian_origin", b.value(0)}, {"exact_origin", exact0}, {"relative_error", err_b},
                              {"q_origin", q.value(0)}, {"q_relative_error", err_q}}},
                  {"grid", {{"m", m}, {"half_width", half_width}, {"relative_residual", rel}}},
                  {"refinement", order_report}};
    return res;
  };
}

// ---------------------------------------------------------------- q-audit

Job q_audit(ConfigReader&, const Context& ctx) {
  const int n = ctx.n;
  return [=] {
    const auto sphere = round_sphere_curvature(n);
    const Rational printed = q_curvature_tensorial(sphere, n, QFormulaMode::as_printed);
    const Rational consistent = q_curvature_tensorial(sphere, n, QFormulaMode::covariance_consistent);
    const Rational target = Rational(n * (n - 4) * (n * n - 4)) / 16;
    ExperimentResult res;
    res.groups.push_back(check("covariance-consistent", consistent == target,
                               "Q = " + consistent.str() + " vs bubble constant " + target.str()));
    res.groups.push_back({"as-printed", printed == target ? Outcome::unexpected_pass : Outcome::expected_fail,
                          "Q = " + printed.str() + " vs bubble constant " + target.str()});
    res.report = {{"n", n},
                  {"as_printed", {{"exact", printed.str()}, {"value", static_cast<double>(printed)}}},
                  {"covariance_consistent", {{"exact", consistent.str()}, {"value", static_cast<double>(consistent)}}},
                  {"bubble_constant", {{"exact", target.str()}, {"value", static_cast<double>(target)}}}};
    return res;
  };
}

// ---------------------------------------------------------------- radial-blowup

Job radial_blowup(ConfigReader& r, const Context& ctx) {
  const int n = ctx.n;
  const double u0 = r.get<double>("u0", -1.0);
  if (!(u0 < 0.0)) config_fail("u0 must be negative");
  const double w0 = r.get<double>("w0", 0.0);
  if (w0 < 0.0) config_fail("w0 must be nonnegative");
  const double r_max = r.positive("r_max", 3.0);
  const int nodes = r.at_least("nodes", 601, 8);
  const int k_max = r.at_least("k_max", 3, 1);

  return [=] {
    const auto radii = RadialField::uniform_radii(r_max, static_cast<std::size_t>(nodes));
    const auto chain = simulate_lower_bound_chain(n, u0, w0, radii, k_max);
    const auto cert = iterate_lower_bounds(n, u0, k_max, radii);
    const double quad = -u0 / (2.0 * n);
    bool quad_ok = true, mono_ok = true, cert_ok = true;
    double worst_cert = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= k_max; ++k) {
      const auto& st = chain[static_cast<std::size_t>(k)];
      for (std::size_t i = 1; i < radii.size(); ++i) {
        const double w = st.w_bar.value(i);
        quad_ok = quad_ok && w >= quad * radii[i] * radii[i] * (1 - 1e-12);
        mono_ok = mono_ok && st.u_bar.value(i) <= st.u_bar.value(i - 1);
        const double slack = std::log(w) - cert.log_bound(k, radii[i]);
        worst_cert = std::min(worst_cert, slack);
        cert_ok = cert_ok && slack >= -1e-12;
      }
    }
    ExperimentResult res;
    res.groups.push_back(check("quadratic-lower-bound", quad_ok, "w_bar >= " + format_number(quad) + " r^2"));
    res.groups.push_back(check("u-nonincreasing", mono_ok, "u_bar nonincreasing on every chain state"));
    res.groups.push_back(check("certificate", cert_ok, "smallest log slack " + format_number(worst_cert)));
    res.groups.push_back(check("divergence-radius", std::isfinite(cert.divergence_radius) && cert.divergence_radius > 0,
                               "1/c2 = " + format_number(cert.divergence_radius)));

    const auto& last = chain.back();
    std::vector<std::string> header{"r", "w_bar", "u_bar"};
    for (int k = 1; k <= k_max; ++k) header.push_back("bound_k" + std::to_string(k));
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < radii.size(); ++i) {
      std::vector<double> row{radii[i], last.w_bar.value(i), last.u_bar.value(i)};
      for (int k = 1; k <= k_max; ++k) row.push_back(i == 0 ? 0.0 : std::exp(cert.log_bound(k, radii[i])));
      rows.push_back(row);
    }
    res.artifacts.push_back({"radial_blowup.csv", csv(header, rows)});

    json entries = json::array();
    for (const auto& e : cert.entries)
      entries.push_back({{"k", e.k}, {"sigma", e.sigma.str()}, {"log_coefficient", e.log_coefficient},
                         {"log_chain_coefficient", e.log_chain_coefficient}});
    json certificate = {{"n", n}, {"u0", u0}, {"entries", entries}, {"log_c1", cert.log_c1},
                        {"log_c2", cert.log_c2}, {"divergence_radius", cert.divergence_radius}};
    certificate["divergence_grid_radius"] = cert.divergence_grid_radius ? json(*cert.divergence_grid_radius) : json();
    res.artifacts.push_back({"certificate.json", certificate.dump(2) + "\n"});
    res.report = {{"n", n}, {"u0", u0}, {"w0", w0}, {"r_max", r_max}, {"nodes", nodes}, {"certificate", certificate}};
    return res;
  };
}

// ---------------------------------------------------------------- poincare

Job poincare(ConfigReader& r, const Context& ctx) {
  const SchottkyGroup g = parse_group(r, ctx);
  const int length = r.at_least("max_length", 10, 3);
  const double tol = r.positive("tolerance", 1e-6);
  const double delta = r.positive("delta", (ctx.n - 4) / 2.0);
  if (g.rank() == 0) config_fail("the exponent of the trivial group is undefined");

  return [=] {
    const auto est = estimate_poincare_exponent(g, length, tol);
    const auto sums = poincare_partial_sum(g, delta, length, g.base_point());
    std::vector<std::vector<double>> rows;
    double cumulative = 0;
    for (std::size_t k = 0; k < sums.shells.size(); ++k) {
      cumulative += sums.shells[k];
      rows.push_back({static_cast<double>(k), sums.shells[k], cumulative});
    }
    const auto last = sums.shells.size() - 1;
    const double ratio = std::sqrt(sums.shells[last] / sums.shells[last - 2]);
    const double threshold = (ctx.n - 4) / 2.0;
    ExperimentResult res;
    res.groups.push_back(check("exponent-gate", est.gate,
                               "delta_hat = " + format_number(est.delta) + " vs " + format_number(threshold)));
    res.groups.push_back(check("shell-decay", ratio < 1.0, "deep shell ratio at delta " + format_number(delta) + " = " +
                                                              format_number(ratio)));
    res.artifacts.push_back({"shells.csv", csv({"word_length", "shell_sum", "cumulative"}, rows)});
    res.report = {{"n", ctx.n},     {"max_length", length}, {"delta_hat", est.delta}, {"gate", est.gate},
                  {"threshold", threshold}, {"delta", delta}, {"deep_shell_ratio", ratio},
                  {"shell_sums_at_estimate", est.shell_sums}};
    return res;
  };
}

// ---------------------------------------------------------------- orbit-integral

Job orbit(ConfigReader& r, const Context& ctx) {
  const SchottkyGroup g = parse_group(r, ctx);
  OrbitIntegralOptions o;
  o.two_sided_depth = r.at_least("two_sided_depth", o.two_sided_depth, 0);
  o.partial_sum_depth = r.at_least("partial_sum_depth", o.partial_sum_depth, 2);
  o.samples = static_cast<std::size_t>(r.at_least("samples", static_cast<int>(o.samples), 100));
  o.partial_sum_samples =
      static_cast<std::size_t>(r.at_least("partial_sum_samples", static_cast<int>(o.partial_sum_samples), 10));
  o.seed = ctx.need_seed();
  double base = 1.0, bump = 0.0;
  if (r.has("density")) {
    ConfigReader d = r.child("density");
    base = d.positive("base", 1.0);
    bump = d.get<double>("bump", 0.0);
    if (bump < 0.0) config_fail("density.bump must be nonnegative");
    d.finish();
  }

  return [=] {
    const ValueFn v = [=](const Point& x) { return base + bump * std::exp(-x.squaredNorm()); };
    const auto rep = orbit_integral(v, g, exponents(ctx.n), o);
    ExperimentResult res;
    bool agree = true;
    double worst = 0;
    std::vector<std::vector<double>> rows;
    json words = json::array();
    for (std::size_t i = 0; i < rep.words.size(); ++i) {
      const auto& w = rep.words[i];
      const double se = std::hypot(w.direct_se, w.pulled_back_se);
      const double z = std::abs(w.direct - w.pulled_back) / se;
      worst = std::max(worst, z);
      agree = agree && z <= 3.0;
      rows.push_back({static_cast<double>(i), static_cast<double>(w.word.length()), w.direct, w.direct_se,
                      w.pulled_back, w.pulled_back_se, z});
      words.push_back({{"word", w.word.to_string()}, {"direct", w.direct}, {"direct_se", w.direct_se},
                       {"pulled_back", w.pulled_back}, {"pulled_back_se", w.pulled_back_se}, {"z", z}});
    }
    const auto& s = rep.partial_sums;
    bool increasing = true, shrinking = true;
    for (std::size_t l = 1; l < s.size(); ++l) increasing = increasing && s[l] > s[l - 1];
    for (std::size_t l = 3; l < s.size(); ++l) shrinking = shrinking && s[l] - s[l - 1] < 0.9 * (s[l - 1] - s[l - 2]);
    res.groups.push_back(check("two-sided", agree, std::to_string(rep.words.size()) + " words, largest |z| " +
                                                       format_number(worst)));
    res.groups.push_back(check("partial-sums", increasing && shrinking, "increasing with shrinking increments"));
    std::vector<std::vector<double>> srows;
    for (std::size_t l = 0; l < s.size(); ++l) srows.push_back({static_cast<double>(l), s[l]});
    res.artifacts.push_back({"words.csv", csv({"index", "length", "direct", "direct_se", "pulled_back",
                                               "pulled_back_se", "z"}, rows)});
    res.artifacts.push_back({"partial_sums.csv", csv({"word_length", "partial_sum"}, srows)});
    res.report = {{"n", ctx.n}, {"seed", o.seed}, {"words", words}, {"partial_sums", s}};
    return res;
  };
}

// ---------------------------------------------------------------- moving-plane

Job moving_plane(ConfigReader& r, const Context& ctx) {
  const int n = ctx.n;
  const Source src = parse_source(r.child("source"), ctx, "standard");
  MovingPlaneOptions o;
  o.axis = r.get<int>("axis", n - 1);
  if (o.axis < 0 || o.axis >= n) config_fail("axis out of range");
  if (r.has("lambda_range")) {
    const auto range = r.get<std::vector<double>>("lambda_range", {});
    if (range.size() != 2 || !(range[0] < range[1])) config_fail("lambda_range must be [bottom, top] with bottom < top");
    o.lambda_bottom = range[0];
    o.lambda_top = range[1];
  }
  o.step = r.positive("step", o.step);
  o.epsilon = r.positive("epsilon", o.epsilon);
  o.check_radius = r.positive("check_radius", o.check_radius);
  o.samples = static_cast<std::size_t>(r.at_least("samples", static_cast<int>(o.samples), 16));
  o.plane_samples = static_cast<std::size_t>(r.at_least("plane_samples", static_cast<int>(o.plane_samples), 1));

  std::optional<double> expect, expect_tol, expect_max;
  if (r.has("expect")) {
    ConfigReader e = r.child("expect");
    if (e.has("lambda_star")) expect = e.get<double>("lambda_star", 0.0);
    expect_tol = e.positive("tolerance", 1e-3);
    if (e.has("lambda_star_max")) expect_max = e.get<double>("lambda_star_max", 0.0);
    e.finish();
  }
  std::optional<std::array<double, 3>> far;
  std::uint64_t seed = 0;
  if (r.has("far_field")) {
    ConfigReader f = r.child("far_field");
    const double inner = f.positive("inner", 1e2), outer = f.positive("outer", 1e3);
    if (!(outer > inner)) config_fail("far_field.outer must exceed far_field.inner");
    far = {inner, outer, static_cast<double>(f.at_least("samples", 4000, 100))};
    f.finish();
    seed = ctx.need_seed();
  }
  struct Ball {
    Sphere sphere;
    std::string expect;
  };
  std::vector<Ball> balls;
  if (r.has("balls")) {
    const json& list = r.raw("balls");
    if (!list.is_array()) config_fail("balls must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      ConfigReader b(list[i], "balls[" + std::to_string(i) + "]");
      Ball ball{{b.point("center", n), b.positive("radius", 1.0)}, b.get<std::string>("expect", "")};
      if (!ball.expect.empty() && ball.expect != "convex" && ball.expect != "concave" && ball.expect != "mixed")
        config_fail(b.where("expect") + " must be convex, concave or mixed");
      b.finish();
      balls.push_back(ball);
    }
  }

  return [=] {
    const Field& v = *src.field;
    const ValueFn w = [&v](const Point& x) { return -v.laplacian(x); };
    const auto rep = find_lambda_star(v, w, src.singular, o);
    ExperimentResult res;
    res.report = {{"n", n}, {"source", src.description}, {"moving_plane", rep.to_json()}};
    res.groups.push_back(check("derivative-sign", rep.derivative_sign_ok,
                               "dv/dx_n < 0 on every sampled plane above lambda* = " + format_number(rep.lambda_star)));
    if (expect)
      res.groups.push_back(check("lambda-star", std::abs(rep.lambda_star - *expect) <= *expect_tol,
                                 format_number(rep.lambda_star) + " vs " + format_number(*expect)));
    if (expect_max)
      res.groups.push_back(check("lambda-star-bound", rep.lambda_star <= *expect_max + 1e-12,
                                 format_number(rep.lambda_star) + " <= " + format_number(*expect_max)));
    if (far) {
      const auto fit = fit_far_field([&v](const Point& x) { return v.value(x); }, n, (*far)[0], (*far)[1],
                                     static_cast<std::size_t>((*far)[2]), seed);
      const auto region = asymptotic_sign_region(v, fit, 2000, false);
      res.report["far_field"] = fit.to_json();
      res.report["asymptotic_region"] = region.to_json();
      res.groups.push_back(check("asymptotic-region", region.violations == 0,
                                 std::to_string(region.violations) + " of " + std::to_string(region.checked) +
                                     " samples with the wrong sign"));
    }
    json conv = json::array();
    for (const auto& b : balls) {
      const auto c = ball_convexity(v, b.sphere, exponents(n));
      conv.push_back({{"center", point_json(b.sphere.center)}, {"radius", b.sphere.radius},
                      {"verdict", to_string(c.verdict)}, {"diagnostics_agree", c.diagnostics_agree},
                      {"marginal", c.marginal}});
      if (!b.expect.empty())
        res.groups.push_back(check("convexity", to_string(c.verdict) == b.expect && c.diagnostics_agree,
                                   "radius " + format_number(b.sphere.radius) + ": " + to_string(c.verdict)));
    }
    if (!balls.empty()) res.report["convexity"] = conv;
    std::vector<std::vector<double>> rows;
    for (const auto& t : rep.trace) rows.push_back({t.lambda, t.holds ? 1.0 : 0.0, t.max_normal_derivative});
    res.artifacts.push_back({"trace.csv", csv({"lambda", "holds", "max_normal_derivative"}, rows)});
    return res;
  };
}

// ---------------------------------------------------------------- blowup

Job blowup(ConfigReader& r, const Context& ctx) {
  const int n = ctx.n;
  const Source src = parse_source(r.child("source"), ctx, "unit_q");
  ConfigReader s = r.child("search");
  const double lo = s.get<double>("lo", -1.0), hi = s.get<double>("hi", 1.0);
  if (!(hi > lo)) config_fail("search.hi must exceed search.lo");
  const int m = s.at_least("m", 9, 3);
  s.finish();
  const double window = r.positive("window", 3.0);
  const double ball = r.positive("ball_radius", 50.0);
  const double check_half_width = r.positive("check_half_width", 1.0);
  const int check_m = r.at_least("check_m", 13, 9);
  const double residual_tol = r.positive("residual_threshold", 1e-2);
  const double match_tol = r.positive("match_threshold", 1e-6);
  const bool expect_bubble = r.get<bool>("expect_bubble", true);

  return [=] {
    const auto exp = exponents(n);
    const Field& f = *src.field;
    const GridField grid = GridField::sample(n, lo, hi, m, [&f](const Point& x) { return f.value(x); });
    const Peak coarse = find_peak(grid);
    const Point peak = polish_peak(f, coarse.point);
    const RescaleJob job = make_rescale_job(src.field, peak, exp, grid.spacing());
    auto rescaled = std::make_shared<RescaledField>(job);
    const GridField vg = GridField::sample(n, -check_half_width, check_half_width, check_m,
                                           [&](const Point& x) { return rescaled->value(x); });
    const auto residual = equation_invariance_check(vg, exp, src.coefficient);
    const auto match = bubble_match([&](const Point& x) { return rescaled->value(x); }, n, Point::Zero(n), window);
    const Sphere big{Point::Zero(n), ball};
    const auto conv = ball_convexity(*rescaled, big, exp);

    ExperimentResult res;
    res.groups.push_back(check("equation-residual", residual.relative <= residual_tol,
                               "relative residual " + format_number(residual.relative)));
    if (expect_bubble) {
      res.groups.push_back(check("bubble-match", match.match_error <= match_tol,
                                 "match error " + format_number(match.match_error)));
      res.groups.push_back(check("concavity", conv.verdict == Convexity::concave,
                                 "B_" + format_number(ball) + "(0) is " + to_string(conv.verdict)));
    } else {
      res.groups.push_back(check("bubble-rejected", match.match_error > kBubbleRejection,
                                 "match error " + format_number(match.match_error)));
    }
    res.report = {{"n", n},
                  {"source", src.description},
                  {"peak", point_json(peak)},
                  {"peak_value", job.peak_value},
                  {"length_scale", job.length_scale()},
                  {"equation_residual", residual.relative},
                  {"match", match.to_json()},
                  {"ball_radius", ball},
                  {"convexity", to_string(conv.verdict)},
                  {"convexity_diagnostics_agree", conv.diagnostics_agree}};
    return res;
  };
}

// ---------------------------------------------------------------- paneitz-functional

Job paneitz(ConfigReader& r, const Context& ctx) {
  const int n = ctx.n;
  const double half_width = r.positive("half_width", 50.0);
  const int nodes = r.at_least("nodes", 20001, 16);
  const double r_max = r.positive("r_max", half_width * std::sqrt(static_cast<double>(n)) * 1.01);
  if (r_max < half_width * std::sqrt(static_cast<double>(n))) config_fail("r_max must cover the cube corners");
  const double tol = r.positive("tolerance", 1e-2);

  return [=] {
    const auto exp = exponents(n);
    const Bubble u = Bubble::unit_q(n, 1.0, Point::Zero(n));
    const RadialField v = RadialField::sample(RadialField::uniform_radii(r_max, static_cast<std::size_t>(nodes)),
                                              [&](double s) { return u.radial_value(s); });
    const double value = paneitz_functional(v, exp, half_width);
    const double target = bubble_constant(n) * std::pow(unit_sphere_area(n), 4.0 / n);
    const double rel = std::abs(value - target) / target;
    ExperimentResult res;
    res.groups.push_back(check("functional-identity", rel <= tol,
                               format_number(value) + " vs " + format_number(target)));
    res.report = {{"n", n}, {"half_width", half_width}, {"nodes", nodes}, {"r_max", r_max},
                  {"value", value}, {"target", target}, {"relative_error", rel}};
    return res;
  };
}

using Parser = Job (*)(ConfigReader&, const Context&);

const std::vector<std::pair<std::string, Parser>>& registry() {
  static const std::vector<std::pair<std::string, Parser>> r{
      {"bubble-check", bubble_check}, {"q-audit", q_audit},     {"radial-blowup", radial_blowup},
      {"poincare", poincare},         {"orbit-integral", orbit}, {"moving-plane", moving_plane},
      {"blowup", blowup},             {"paneitz-functional", paneitz}};
  return r;
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, parser] : registry()) out.push_back(name);
    return out;
  }();
  return names;
}

ExperimentResult run_experiment(const std::string& name, const json& config,
                                std::optional<std::uint64_t> seed_override, const std::filesystem::path& base_dir) {
  Parser parser = nullptr;
  for (const auto& [key, p] : registry())
    if (key == name) parser = p;
  if (!parser) config_fail("unknown experiment '" + name + "'");

  Job job;
  try {
    ConfigReader r(config, "config");
    if (r.has("experiment") && r.get<std::string>("experiment", "") != name)
      config_fail("config is for experiment '" + config.at("experiment").get<std::string>() + "'");
    Context ctx;
    ctx.n = r.require<int>("n");
    if (ctx.n < 5) config_fail("n must be at least 5");
    ctx.seed = seed_override;
    if (r.has("seed")) {
      const auto s = r.get<std::uint64_t>("seed", 0);
      if (!ctx.seed) ctx.seed = s;
    }
    ctx.base_dir = base_dir;
    job = parser(r, ctx);
    r.finish();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config_error) throw;
    throw Error(ErrorCode::config_error, e.what());
  }
  return job();
}

void write_outputs(const std::filesystem::path& out_dir, const std::string& name, const json& config,
                   const ExperimentResult& result) {
  std::filesystem::create_directories(out_dir);
  json groups = json::array();
  for (const auto& g : result.groups)
    groups.push_back({{"name", g.name}, {"outcome", to_string(g.outcome)}, {"detail", g.detail}});
  const json report = {{"experiment", name}, {"config", config}, {"passed", result.passed()},
                       {"assertions", groups}, {"results", result.report}};
  std::ofstream(out_dir / "report.json") << report.dump(2) << '\n';
  for (const auto& a : result.artifacts) std::ofstream(out_dir / a.filename) << a.content;
}

}  // namespace qlab
