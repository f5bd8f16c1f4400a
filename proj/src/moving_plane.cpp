#include "qlab/moving_plane.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qlab/error.hpp"
#include "qlab/parallel.hpp"

namespace qlab {

Point reflect(const Point& x, double lambda, int axis) {
  Point y = x;
  y[axis] = 2.0 * lambda - x[axis];
  return y;
}

ReflectedField::ReflectedField(FieldPtr base, double lambda, int axis)
    : Field(base->dim(), base->fd_step()), base_(std::move(base)), lambda_(lambda), axis_(axis) {
  if (axis < 0 || axis >= dim()) throw Error(ErrorCode::invalid_argument, "reflection axis out of range");
}

double ReflectedField::value(const Point& x) const { return base_->value(reflect(x, lambda_, axis_)); }

Point ReflectedField::gradient(const Point& x) const {
  Point g = base_->gradient(reflect(x, lambda_, axis_));
  g[axis_] = -g[axis_];
  return g;
}

double ReflectedField::laplacian(const Point& x) const { return base_->laplacian(reflect(x, lambda_, axis_)); }

Point ReflectedField::laplacian_gradient(const Point& x) const {
  Point g = base_->laplacian_gradient(reflect(x, lambda_, axis_));
  g[axis_] = -g[axis_];
  return g;
}

double ReflectedField::bilaplacian(const Point& x) const { return base_->bilaplacian(reflect(x, lambda_, axis_)); }

FieldPtr reflect_field(FieldPtr v, double lambda, int axis) {
  return std::make_shared<ReflectedField>(std::move(v), lambda, axis);
}

GridField reflect_field(const GridField& v, int axis) {
  if (axis < 0 || axis >= v.dim()) throw Error(ErrorCode::invalid_argument, "reflection axis out of range");
  GridField out = v.like(v.boundary_margin());
  const int m = v.nodes_per_axis();
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::vector<int> idx = v.multi_index(i);
    idx[static_cast<std::size_t>(axis)] = m - 1 - idx[static_cast<std::size_t>(axis)];
    out[i] = v[v.flat_index(idx)];
  }
  return out;
}

double FarFieldExpansion::value(const Point& x) const {
  const double r2 = x.squaredNorm();
  const double r = std::sqrt(r2);
  return std::pow(r, 4.0 - n) * (a0 + a.dot(x) / r2 + x.dot(a2 * x) / (r2 * r2));
}

nlohmann::json FarFieldExpansion::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["a0"] = a0;
  j["a"] = std::vector<double>(a.data(), a.data() + a.size());
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < a2.rows(); ++i) {
    rows.emplace_back();
    for (int k = 0; k < a2.cols(); ++k) rows.back().push_back(a2(i, k));
  }
  j["a2"] = rows;
  j["inner_radius"] = inner_radius;
  j["outer_radius"] = outer_radius;
  j["residual"] = residual;
  j["condition"] = condition;
  return j;
}

FarFieldExpansion bubble_expansion(int n, double lambda, const Point& center) {
  const double k = (n - 4) / 2.0;
  FarFieldExpansion e;
  e.n = n;
  e.a0 = std::pow(2.0 / lambda, k);
  e.a = 2.0 * k * e.a0 * center;
  e.a2 = e.a0 * (2.0 * k * (k + 1.0) * center * center.transpose() -
                 k * (1.0 / (lambda * lambda) + center.squaredNorm()) * Eigen::MatrixXd::Identity(n, n));
  return e;
}

FarFieldExpansion fit_far_field(const ValueFn& v, int n, double inner_radius, double outer_radius,
                                std::size_t samples, std::uint64_t seed) {
  if (n <= 4) throw Error(ErrorCode::dimension_too_small, "far-field expansion needs n >= 5");
  if (!(inner_radius > 0.0) || !(outer_radius > inner_radius))
    throw Error(ErrorCode::invalid_argument, "need 0 < inner radius < outer radius");
  const int pairs = n * (n + 1) / 2;
  const int cols = 1 + n + pairs;
  if (samples < static_cast<std::size_t>(4 * cols))
    throw Error(ErrorCode::invalid_argument, "too few samples for the far-field fit");

  Eigen::MatrixXd basis(static_cast<Eigen::Index>(samples), cols);
  Eigen::VectorXd target(static_cast<Eigen::Index>(samples));
  const CounterRng rng(seed, 0xfa7);
  const double log_ratio = std::log(outer_radius / inner_radius);
  parallel_for(0, samples, [&](std::size_t s) {
    const double r = inner_radius * std::exp(log_ratio * rng.uniform(s, 100));
    const Point x = r * rng.on_sphere(s, n);
    const auto row = static_cast<Eigen::Index>(s);
    const double r2 = r * r;
    basis(row, 0) = 1.0;
    for (int i = 0; i < n; ++i) basis(row, 1 + i) = x[i] / r2;
    int c = 1 + n;
    for (int i = 0; i < n; ++i)
      for (int k = i; k < n; ++k) basis(row, c++) = x[i] * x[k] / (r2 * r2);
    target(row) = std::pow(r, n - 4.0) * v(x);
  });

  const Eigen::VectorXd norms = basis.colwise().norm().transpose();
  for (int c = 0; c < cols; ++c) basis.col(c) /= norms(c);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double condition = sv(0) / sv(sv.size() - 1);
  if (!std::isfinite(condition) || condition > 1e10)
    throw Error(ErrorCode::ill_conditioned_fit, "far-field design matrix condition " + std::to_string(condition));
  Eigen::VectorXd coef = svd.solve(target);
  const Eigen::VectorXd misfit = basis * coef - target;
  coef = coef.cwiseQuotient(norms);

  FarFieldExpansion e;
  e.n = n;
  e.a0 = coef(0);
  if (!(e.a0 > 0.0))
    throw Error(ErrorCode::nonpositive_leading_coefficient, "fitted a0 = " + std::to_string(e.a0));
  e.a = coef.segment(1, n);
  e.a2 = Eigen::MatrixXd::Zero(n, n);
  int c = 1 + n;
  for (int i = 0; i < n; ++i)
    for (int k = i; k < n; ++k) {
      const double b = coef(c++);
      if (i == k) {
        e.a2(i, i) = b;
      } else {
        e.a2(i, k) = e.a2(k, i) = b / 2.0;
      }
    }
  e.inner_radius = inner_radius;
  e.outer_radius = outer_radius;
  e.residual = std::sqrt(misfit.squaredNorm() / static_cast<double>(samples)) / e.a0;
  e.condition = condition;
  return e;
}

bool AsymptoticRegion::contains(const Point& x) const {
  const double r = x.norm();
  return r >= c1 && x[x.size() - 1] - offset >= c0 / r;
}

nlohmann::json AsymptoticRegion::to_json() const {
  return {{"c0", c0}, {"c1", c1}, {"offset", offset}, {"checked", checked}, {"violations", violations}};
}

AsymptoticRegion asymptotic_sign_region(const Field& v, const FarFieldExpansion& e, std::size_t samples,
                                        bool strict) {
  const int n = e.n;
  if (v.dim() != n) throw Error(ErrorCode::invalid_argument, "field and expansion dimensions differ");
  if (!(e.a0 > 0.0)) throw Error(ErrorCode::nonpositive_leading_coefficient, "a0 must be positive");
  const double lead = (n - 4) * e.a0;
  const double t = e.a[n - 1] / lead;
  const double na = e.a.norm();
  const double nA = e.a2.size() ? e.a2.jacobiSvd().singularValues()(0) : 0.0;
  const double trA = std::abs(e.a2.trace());
  constexpr double kSafety = 2.0;

  // Radius beyond which the terms proportional to x_n - t are at most a
  // quarter of the leading one each, for both v and w.
  double c1 = std::max({4.0 * (n - 2) * na / lead, 4.0 * n * na / lead, std::sqrt(4.0 * n * nA / lead),
                        std::sqrt(4.0 * (n * trA + n * (n + 2) * nA) / ((n - 2) * lead)), e.inner_radius});
  c1 = std::max(kSafety * c1, 1.0);
  const double kv = (n - 2) * na * std::abs(t) + 2.0 * nA + n * nA * std::abs(t) / c1;
  const double kw = n * na * std::abs(t) + 2.0 * n * nA / (n - 2) +
                    (n * trA + n * (n + 2) * nA) * std::abs(t) / ((n - 2) * c1);
  const double c0 = std::max(kSafety * 2.0 * std::max(kv, kw) / lead, 1.0);

  AsymptoticRegion region{c0, c1, t, 0, 0};
  const CounterRng rng(0x5167, 0);
  std::vector<char> bad(samples, 0);
  parallel_for(0, samples, [&](std::size_t s) {
    const double rho = c1 * std::exp(std::log(10.0) * rng.uniform(s, 200));
    Point x(n);
    if (s % 2 == 0) {
      // Hugging the lower boundary of the region.
      Point h = rng.on_sphere(s, n - 1);
      x.head(n - 1) = rho * h;
      x[n - 1] = t + (c0 / rho) * (1.0 + rng.uniform(s, 201));
    } else {
      x = rho * rng.on_sphere(s, n);
      x[n - 1] = std::abs(x[n - 1]) + t + c0 / rho;
    }
    const double dv = v.gradient(x)[n - 1];
    const double dw = -v.laplacian_gradient(x)[n - 1];
    if (!(dv < 0.0) || !(dw < 0.0)) bad[s] = 1;
  });
  region.checked = samples;
  region.violations = static_cast<std::size_t>(std::count(bad.begin(), bad.end(), 1));
  if (strict && region.violations > 0)
    throw Error(ErrorCode::verification_failure,
                std::to_string(region.violations) + " samples with non-negative normal derivative");
  return region;
}

nlohmann::json MovingPlaneReport::to_json() const {
  nlohmann::json j;
  j["lambda_start"] = lambda_start;
  j["lambda_star"] = lambda_star;
  j["reached_bottom"] = reached_bottom;
  j["symmetric"] = symmetric;
  j["symmetric_defect"] = symmetric_defect;
  j["derivative_sign_ok"] = derivative_sign_ok;
  j["epsilon"] = epsilon;
  j["trace"] = nlohmann::json::array();
  for (const auto& t : trace)
    j["trace"].push_back({{"lambda", t.lambda}, {"holds", t.holds}, {"max_normal_derivative", t.max_normal_derivative}});
  return j;
}

namespace {

bool near_singular(const Point& x, const std::vector<Sphere>& singular, double eps) {
  for (const auto& s : singular)
    if ((x - s.center).norm() < s.radius + eps) return true;
  return false;
}

struct PlaneCheck {
  bool holds = true;
  double defect = 0;  // max |v^lambda - v| relative to the v scale
};

class PlaneTester {
 public:
  PlaneTester(const Field& v, const ValueFn& w, const std::vector<Sphere>& singular, const MovingPlaneOptions& o,
              int axis)
      : v_(v), w_(w), singular_(singular), o_(o), axis_(axis) {
    const int n = v.dim();
    unit_.reserve(o.samples);
    for (std::size_t i = 0; i < o.samples; ++i) unit_.push_back(halton(i, n));
    for (std::size_t i = 0; i < o.plane_samples; ++i) plane_.push_back(halton(i, n - 1));
  }

  Point place(const Point& h, double lambda) const {
    Point x(h.size());
    for (int i = 0; i < h.size(); ++i)
      x[i] = (i == axis_) ? lambda + o_.check_radius * h[i] : o_.check_radius * (2.0 * h[i] - 1.0);
    return x;
  }

  PlaneCheck check(double lambda) const {
    const std::size_t count = unit_.size();
    std::vector<double> dv(count, 0.0), dw(count, 0.0), sv(count, 0.0), sw(count, 0.0);
    std::vector<char> used(count, 0);
    parallel_for(0, count, [&](std::size_t i) {
      if (unit_[i][axis_] < 1e-9) return;
      const Point x = place(unit_[i], lambda);
      const Point xr = reflect(x, lambda, axis_);
      if (near_singular(x, singular_, o_.epsilon) || near_singular(xr, singular_, o_.epsilon)) return;
      const double v = v_.value(x), vr = v_.value(xr);
      const double w = w_(x), wr = w_(xr);
      dv[i] = vr - v;
      dw[i] = wr - w;
      sv[i] = std::max(std::abs(v), std::abs(vr));
      sw[i] = std::max(std::abs(w), std::abs(wr));
      used[i] = 1;
    });
    const double vscale = *std::max_element(sv.begin(), sv.end());
    const double wscale = *std::max_element(sw.begin(), sw.end());
    PlaneCheck c;
    for (std::size_t i = 0; i < count; ++i) {
      if (!used[i]) continue;
      if (!std::isfinite(dv[i]) || !std::isfinite(dw[i]))
        throw Error(ErrorCode::invalid_argument, "non-finite field value in the moving-plane check");
      if (dv[i] < -o_.eta * vscale || dw[i] < -o_.eta * wscale) c.holds = false;
      if (vscale > 0.0) c.defect = std::max(c.defect, std::abs(dv[i]) / vscale);
    }
    return c;
  }

  double max_normal_derivative(double lambda) const {
    std::vector<double> d(plane_.size(), -std::numeric_limits<double>::infinity());
    parallel_for(0, plane_.size(), [&](std::size_t i) {
      Point x(v_.dim());
      int c = 0;
      for (int k = 0; k < v_.dim(); ++k)
        x[k] = (k == axis_) ? lambda : o_.check_radius * (2.0 * plane_[i][c++] - 1.0);
      if (near_singular(x, singular_, o_.epsilon)) return;
      d[i] = v_.gradient(x)[axis_];
    });
    return *std::max_element(d.begin(), d.end());
  }

 private:
  const Field& v_;
  const ValueFn& w_;
  const std::vector<Sphere>& singular_;
  const MovingPlaneOptions& o_;
  int axis_;
  std::vector<Point> unit_;
  std::vector<Point> plane_;
};

}  // namespace

MovingPlaneReport find_lambda_star(const Field& v, const ValueFn& w, const std::vector<Sphere>& singular,
                                   const MovingPlaneOptions& o) {
  const int n = v.dim();
  const int axis = o.axis < 0 ? n - 1 : o.axis;
  if (axis >= n) throw Error(ErrorCode::invalid_argument, "moving-plane axis out of range");
  if (!(o.lambda_top > o.lambda_bottom) || !(o.step > 0.0) || !(o.check_radius > 0.0) || o.samples == 0)
    throw Error(ErrorCode::invalid_argument, "invalid moving-plane scan parameters");

  const PlaneTester tester(v, w, singular, o, axis);
  MovingPlaneReport report;
  report.epsilon = o.epsilon;
  report.lambda_start = o.lambda_top;

  auto record = [&](double lambda, bool holds) {
    report.trace.push_back({lambda, holds, tester.max_normal_derivative(lambda)});
  };

  if (!tester.check(o.lambda_top).holds)
    throw Error(ErrorCode::scan_exhausted, "reflection inequality fails already at the top plane");
  record(o.lambda_top, true);

  double pass = o.lambda_top;
  std::optional<double> fail;
  for (int k = 1;; ++k) {
    const double lambda = o.lambda_top - k * o.step;
    if (lambda < o.lambda_bottom) break;
    if (tester.check(lambda).holds) {
      pass = lambda;
      record(lambda, true);
    } else {
      fail = lambda;
      break;
    }
  }

  if (fail) {
    double lo = *fail, hi = pass;
    const double tol = o.bisection_fraction * (o.lambda_top - o.lambda_bottom);
    while (hi - lo > tol) {
      const double mid = 0.5 * (lo + hi);
      if (tester.check(mid).holds) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    report.lambda_star = hi;
  } else {
    report.lambda_star = pass;
    report.reached_bottom = true;
  }

  report.symmetric_defect = tester.check(report.lambda_star).defect;
  report.symmetric = report.symmetric_defect < o.symmetric_tolerance;
  for (const auto& t : report.trace)
    if (t.lambda > report.lambda_star && !(t.max_normal_derivative < 0.0)) report.derivative_sign_ok = false;
  return report;
}

std::string to_string(Convexity c) {
  switch (c) {
    case Convexity::convex: return "convex";
    case Convexity::concave: return "concave";
    case Convexity::mixed: return "mixed";
  }
  return "mixed";
}

ConvexityReport ball_convexity(const Field& v, const Sphere& ball, const ConformalExponents& exp,
                               std::size_t samples) {
  const int n = v.dim();
  if (exp.n != n) throw Error(ErrorCode::invalid_argument, "exponents and field dimensions differ");
  if (!(ball.radius > 0.0)) throw Error(ErrorCode::invalid_argument, "ball radius must be positive");
  const double rho = ball.radius;
  const double k = (n - 4) / 2.0;

  auto eval = [&](const Point& x) {
    double val;
    try {
      val = v.value(x);
    } catch (const Error& e) {
      throw Error(ErrorCode::boundary_outside_domain, e.what());
    }
    if (!std::isfinite(val) || !(val > 0.0))
      throw Error(ErrorCode::boundary_outside_domain, "field is not positive and finite on the boundary");
    return val;
  };

  // Chart: invert about the top boundary point with radius rho sqrt 2, which
  // sends the sphere to the plane at distance rho; flipping the last axis
  // puts the ball's image in {z_n > 0}.
  Point top = ball.center;
  top[n - 1] += rho;
  const double r2 = 2.0 * rho * rho;
  auto to_chart = [&](const Point& x) {
    const Point d = x - top;
    Point z = (r2 / d.squaredNorm()) * d;
    z[n - 1] = -z[n - 1] - rho;
    return z;
  };
  auto chart_value = [&](const Point& z) {
    Point d = z;
    d[n - 1] = -(z[n - 1] + rho);
    const double s = d.squaredNorm();
    return eval(top + (r2 / s) * d) * std::pow(r2 / s, k);
  };

  ConvexityReport report;
  const CounterRng rng(0xba11, 0);
  bool positive = true, negative = true;
  for (std::size_t i = 0; i < samples; ++i) {
    const Point u = rng.on_sphere(i, n);
    const Point p = ball.center + rho * u;
    const double val = eval(p);
    Point g;
    try {
      g = v.gradient(p);
    } catch (const Error& e) {
      throw Error(ErrorCode::boundary_outside_domain, e.what());
    }
    const double dn = g.dot(u) / val;
    report.max_normal_derivative = std::max(report.max_normal_derivative, std::abs(dn) * rho);
    const double h = std::pow(val, -exp.metric / 2.0) * (n - 1) * (1.0 / rho + 2.0 / (n - 4) * dn);
    report.mean_curvature.push_back(h);
    positive = positive && h > 0.0;
    negative = negative && h < 0.0;

    if ((p - top).norm() < 0.3 * rho) continue;
    const Point z = to_chart(p);
    const double step = 1e-4 * std::max(rho, z.norm());
    auto at = [&](double dz) {
      Point y = z;
      y[n - 1] += dz;
      return chart_value(y);
    };
    const double d = (-at(2 * step) + 8 * at(step) - 8 * at(-step) + at(-2 * step)) / (12 * step);
    report.chart_derivative.push_back(d);
    if ((h > 0.0) != (d < 0.0)) report.diagnostics_agree = false;
  }
  report.verdict = positive ? Convexity::convex : negative ? Convexity::concave : Convexity::mixed;
  report.marginal = report.max_normal_derivative < 1e-9;
  return report;
}

}  // namespace qlab
