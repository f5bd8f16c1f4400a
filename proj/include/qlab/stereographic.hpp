#pragma once

#include <optional>

#include "json.hpp"
#include "qlab/conformal_ops.hpp"
#include "qlab/field.hpp"

namespace qlab {

/// Stereographic chart psi: R^n -> S^n \ {base} in R^{n+1}. The default
/// chart uses the north pole e_{n+1} as base, so psi(0) is the south pole.
class StereoChart {
 public:
  explicit StereoChart(int n);
  StereoChart(int n, const Point& base_point);

  int dim() const { return n_; }
  const Point& base_point() const { return base_; }

  Point project(const Point& x) const;
  /// Inverse of project; throws point-at-infinity at the base point.
  Point unproject(const Point& y) const;

  /// Conformal factor of the round metric in the chart: psi^* g_1 = rho^2 g_0.
  static double metric_factor(const Point& x) { return 2.0 / (1.0 + x.squaredNorm()); }

 private:
  int n_;
  Point base_;
  bool north_ = true;
  Eigen::MatrixXd to_north_;  // Householder reflection sending base to e_{n+1}
};

using SphereFn = std::function<double(const Point& /*y in S^n*/)>;

/// v_hat(x) = v_tilde(psi(x)) (2/(1+|x|^2))^{(n-4)/2}.
class PulledBackField final : public Field {
 public:
  PulledBackField(StereoChart chart, SphereFn on_sphere, const ConformalExponents& exp);
  double value(const Point& x) const override;

 private:
  StereoChart chart_;
  SphereFn on_sphere_;
  double weight_power_;
};

GridField pull_back_function(const StereoChart& chart, const SphereFn& on_sphere,
                             const ConformalExponents& exp, double lo, double hi, int m);

/// A * (2 lambda / (1 + lambda^2 |x - x0|^2))^{(n-4)/2}, with amplitude A = 1
/// for the standard bubble and A = K_n^{(n-4)/8} for the unit-Q bubble.
/// Derivatives are closed form.
class Bubble final : public Field {
 public:
  Bubble(int n, double lambda, Point center, double amplitude = 1.0);
  static Bubble standard(int n, double lambda = 1.0);
  static Bubble unit_q(int n, double lambda, Point center);

  double lambda() const { return lambda_; }
  const Point& center() const { return center_; }
  double amplitude() const { return amplitude_; }
  /// K_n = n(n-4)(n^2-4)/16.
  double equation_constant() const { return equation_constant_; }

  double value(const Point& x) const override;
  Point gradient(const Point& x) const override;
  double laplacian(const Point& x) const override;
  Point laplacian_gradient(const Point& x) const override;
  /// A K_n U^{(n+4)/(n-4)}, i.e. A^{1-q} K_n (value)^q.
  double bilaplacian(const Point& x) const override;

  /// Profile as a function of the distance to the center.
  double radial_value(double r) const;
  double radial_laplacian(double r) const;

  nlohmann::json to_json() const;
  static Bubble from_json(const nlohmann::json& j);

 private:
  int n_;
  double lambda_;
  Point center_;
  double amplitude_;
  double half_exponent_;  // (n-4)/2
  double equation_constant_;
};

/// K_n obtained by applying the radial Laplacian (Delta = 4 s d^2/ds^2 +
/// 2n d/ds in s = r^2) twice, symbolically, to (2/(1+s))^{(n-4)/2} at s = 0.
double bubble_constant_from_radial_calculus(int n);

}  // namespace qlab
