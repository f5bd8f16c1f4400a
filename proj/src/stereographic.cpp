#include <limits>
#include "qlab/stereographic.hpp"

#include <cassert>
#include <cmath>
#include <vector>

#include "qlab/error.hpp"

namespace qlab {

StereoChart::StereoChart(int n) : n_(n), base_(Point::Zero(n + 1)) {
  if (n < 1) throw Error(ErrorCode::invalid_argument, "chart dimension must be positive");
  base_[n] = 1.0;
}

StereoChart::StereoChart(int n, const Point& base_point) : StereoChart(n) {
  if (base_point.size() != n + 1 || std::abs(base_point.norm() - 1.0) > 1e-12) {
    throw Error(ErrorCode::invalid_argument, "base point must be a unit vector in R^{n+1}");
  }
  base_ = base_point;
  Point north = Point::Zero(n + 1);
  north[n] = 1.0;
  const Point w = base_ - north;
  if (w.norm() < 1e-14) return;
  north_ = false;
  const Point u = w / w.norm();
  to_north_ = Eigen::MatrixXd::Identity(n + 1, n + 1) - 2.0 * u * u.transpose();
}

Point StereoChart::project(const Point& x) const {
  const double r2 = x.squaredNorm();
  Point y(n_ + 1);
  y.head(n_) = 2.0 * x / (1.0 + r2);
  y[n_] = (r2 - 1.0) / (r2 + 1.0);
  if (!north_) return to_north_ * y;  // the reflection is its own inverse
  return y;
}

Point StereoChart::unproject(const Point& y_in) const {
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  const Point y = north_ ? y_in : Point(to_north_ * y_in);
  const double last = y[n_];
  const auto equator = y.head(n_);
  if (last > 0.0) {
    // 1 - y_{n+1} = |y'|^2 / (1 + y_{n+1}) avoids cancellation near the base
    const double e2 = equator.squaredNorm();
    if (e2 <= 4 * kEps * kEps) throw Error(ErrorCode::point_at_infinity, "unproject at the base point");
    return equator * ((1.0 + last) / e2);
  }
  return equator / (1.0 - last);
}

PulledBackField::PulledBackField(StereoChart chart, SphereFn on_sphere, const ConformalExponents& exp)
    : Field(chart.dim()), chart_(std::move(chart)), on_sphere_(std::move(on_sphere)),
      weight_power_((exp.n - 4) / 2.0) {}

double PulledBackField::value(const Point& x) const {
  return on_sphere_(chart_.project(x)) * std::pow(StereoChart::metric_factor(x), weight_power_);
}

GridField pull_back_function(const StereoChart& chart, const SphereFn& on_sphere,
                             const ConformalExponents& exp, double lo, double hi, int m) {
  const PulledBackField f(chart, on_sphere, exp);
  return GridField::sample(chart.dim(), lo, hi, m, [&](const Point& x) { return f.value(x); });
}

namespace {

// c * s^j * (1+s)^{-m}
struct RadialTerm {
  double coef;
  int s_power;
  double decay;
};

using TermSum = std::vector<RadialTerm>;

TermSum derive(const TermSum& f) {
  TermSum out;
  for (const auto& t : f) {
    if (t.s_power > 0) out.push_back({t.coef * t.s_power, t.s_power - 1, t.decay});
    out.push_back({-t.coef * t.decay, t.s_power, t.decay + 1.0});
  }
  return out;
}

TermSum radial_laplacian_terms(const TermSum& f, int n) {
  TermSum out;
  for (auto t : derive(derive(f))) out.push_back({4.0 * t.coef, t.s_power + 1, t.decay});
  for (auto t : derive(f)) out.push_back({2.0 * n * t.coef, t.s_power, t.decay});
  return out;
}

double at_origin(const TermSum& f) {
  double v = 0.0;
  for (const auto& t : f) {
    if (t.s_power == 0) v += t.coef;
  }
  return v;
}

}  // namespace

double bubble_constant_from_radial_calculus(int n) {
  const double k = (n - 4) / 2.0;
  const double c = std::pow(2.0, k);
  const TermSum u = {{c, 0, k}};
  const double bilap0 = at_origin(radial_laplacian_terms(radial_laplacian_terms(u, n), n));
  const double q = static_cast<double>(n + 4) / (n - 4);
  return bilap0 / std::pow(c, q);
}

Bubble::Bubble(int n, double lambda, Point center, double amplitude)
    : Field(n), n_(n), lambda_(lambda), center_(std::move(center)), amplitude_(amplitude),
      half_exponent_((n - 4) / 2.0), equation_constant_(bubble_constant(n)) {
  if (n <= 4) throw Error(ErrorCode::dimension_too_small, "bubble needs n >= 5");
  if (!(lambda > 0.0)) throw Error(ErrorCode::nonpositive_scale, "lambda must be positive");
  if (!(amplitude > 0.0)) throw Error(ErrorCode::nonpositive_scale, "amplitude must be positive");
  if (center_.size() != n) throw Error(ErrorCode::invalid_argument, "bubble center has wrong dimension");
  set_fd_step(1e-2 / lambda);
#ifndef NDEBUG
  assert(std::abs(bubble_constant_from_radial_calculus(n) - equation_constant_) <=
         1e-12 * equation_constant_);
#endif
}

Bubble Bubble::standard(int n, double lambda) { return Bubble(n, lambda, Point::Zero(n)); }

Bubble Bubble::unit_q(int n, double lambda, Point center) {
  return Bubble(n, lambda, std::move(center), std::pow(bubble_constant(n), (n - 4) / 8.0));
}

double Bubble::radial_value(double r) const {
  return amplitude_ * std::pow(2.0 * lambda_ / (1.0 + lambda_ * lambda_ * r * r), half_exponent_);
}

double Bubble::radial_laplacian(double r) const {
  const double a = lambda_ * lambda_;
  const double s = r * r;
  const double d = 1.0 + a * s;
  return -2.0 * half_exponent_ * a * radial_value(r) * (2.0 * a * s + n_) / (d * d);
}

double Bubble::value(const Point& x) const { return radial_value((x - center_).norm()); }

Point Bubble::gradient(const Point& x) const {
  const Point y = x - center_;
  const double a = lambda_ * lambda_;
  const double s = y.squaredNorm();
  return (-2.0 * half_exponent_ * a * radial_value(std::sqrt(s)) / (1.0 + a * s)) * y;
}

double Bubble::laplacian(const Point& x) const { return radial_laplacian((x - center_).norm()); }

Point Bubble::laplacian_gradient(const Point& x) const {
  const Point y = x - center_;
  const double a = lambda_ * lambda_;
  const double s = y.squaredNorm();
  const double d = 1.0 + a * s;
  const double k = half_exponent_;
  const double bracket = 2.0 * d - (k + 2.0) * (2.0 * a * s + n_);
  return (-4.0 * k * a * a * radial_value(std::sqrt(s)) * bracket / (d * d * d)) * y;
}

double Bubble::bilaplacian(const Point& x) const {
  const double q = static_cast<double>(n_ + 4) / (n_ - 4);
  const double u = value(x) / amplitude_;
  return amplitude_ * equation_constant_ * std::pow(u, q);
}

nlohmann::json Bubble::to_json() const {
  return {{"n", n_}, {"lambda", lambda_}, {"center", std::vector<double>(center_.begin(), center_.end())}};
}

Bubble Bubble::from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("n").get<int>();
    Point c = Point::Zero(n);
    if (j.contains("center")) {
      const auto v = j.at("center").get<std::vector<double>>();
      if (static_cast<int>(v.size()) != n) throw Error(ErrorCode::config_error, "bubble center has wrong length");
      for (int i = 0; i < n; ++i) c[i] = v[static_cast<std::size_t>(i)];
    }
    return Bubble(n, j.at("lambda").get<double>(), c);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config_error, std::string("bubble: ") + e.what());
  }
}

}  // namespace qlab
