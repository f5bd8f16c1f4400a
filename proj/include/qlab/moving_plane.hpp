#pragma once

#include <optional>
#include <vector>

#include "json.hpp"
#include "qlab/conformal_ops.hpp"
#include "qlab/field.hpp"
#include "qlab/grid.hpp"
#include "qlab/mobius.hpp"

namespace qlab {

/// x with x[axis] replaced by 2 lambda - x[axis].
Point reflect(const Point& x, double lambda, int axis);

/// v^lambda(x) = v(x^lambda), derivatives mapped through the reflection.
class ReflectedField final : public Field {
 public:
  ReflectedField(FieldPtr base, double lambda, int axis);
  double value(const Point& x) const override;
  Point gradient(const Point& x) const override;
  double laplacian(const Point& x) const override;
  Point laplacian_gradient(const Point& x) const override;
  double bilaplacian(const Point& x) const override;

 private:
  FieldPtr base_;
  double lambda_;
  int axis_;
};

FieldPtr reflect_field(FieldPtr v, double lambda, int axis);
/// Node-for-node reflection of a grid about its own centre plane along axis.
GridField reflect_field(const GridField& v, int axis);

/// v ~ |x|^{4-n} (a0 + a.x/|x|^2 + x^T A x/|x|^4).
struct FarFieldExpansion {
  int n = 0;
  double a0 = 0;
  Point a;
  Eigen::MatrixXd a2;
  double inner_radius = 0;
  double outer_radius = 0;
  /// RMS misfit of |x|^{n-4} v relative to |a0|.
  double residual = 0;
  double condition = 0;

  double value(const Point& x) const;
  nlohmann::json to_json() const;
};

/// The coefficients of a bubble's expansion, used as an oracle and for
/// sanity checks: a0 = (2/lambda)^k, a = 2k a0 x0, with k = (n-4)/2.
FarFieldExpansion bubble_expansion(int n, double lambda, const Point& center);

FarFieldExpansion fit_far_field(const ValueFn& v, int n, double inner_radius, double outer_radius,
                                std::size_t samples = 4000, std::uint64_t seed = 1);

/// {x : x_n - t >= c0 / |x|, |x| >= c1} with t = a_n / ((n-4) a0): the
/// leading terms of both dv/dx_n and dw/dx_n are (n-4) a0 (x_n - t) times a
/// negative factor, so the region is centred at t.
struct AsymptoticRegion {
  double c0 = 0;
  double c1 = 0;
  double offset = 0;
  std::size_t checked = 0;
  std::size_t violations = 0;

  bool contains(const Point& x) const;
  nlohmann::json to_json() const;
};

/// Region constants from the fitted coefficients, then a deterministic sample
/// of the region where dv/dx_n < 0 and dw/dx_n < 0 (w = -Delta v) are checked.
/// Violations are counted; with strict set they raise verification-failure.
AsymptoticRegion asymptotic_sign_region(const Field& v, const FarFieldExpansion& expansion,
                                        std::size_t samples = 2000, bool strict = true);

struct MovingPlaneOptions {
  int axis = -1;  // default: last coordinate
  double lambda_top = 4.0;
  double lambda_bottom = -4.0;
  double step = 0.25;
  /// Half-width of the checked box around the plane.
  double check_radius = 4.0;
  std::size_t samples = 4096;
  std::size_t plane_samples = 256;
  /// Margin around singular balls and their reflections.
  double epsilon = 1e-3;
  /// Allowed negative defect relative to max |v| (roundoff).
  double eta = 1e-12;
  double symmetric_tolerance = 1e-2;
  /// Bisection stops at this fraction of the range width.
  double bisection_fraction = 1e-4;
};

struct PlaneTrace {
  double lambda = 0;
  bool holds = false;
  /// Largest dv/dx_n over the plane samples.
  double max_normal_derivative = 0;
};

struct MovingPlaneReport {
  double lambda_start = 0;
  double lambda_star = 0;
  bool reached_bottom = false;
  bool symmetric = false;
  double symmetric_defect = 0;
  bool derivative_sign_ok = true;
  double epsilon = 0;
  std::vector<PlaneTrace> trace;

  nlohmann::json to_json() const;
};

/// Scan lambda downward until (v^lambda > v and w^lambda > w on the sampled
/// half-box) first fails, then bisect.
MovingPlaneReport find_lambda_star(const Field& v, const ValueFn& w, const std::vector<Sphere>& singular,
                                   const MovingPlaneOptions& options = {});

enum class Convexity { convex, concave, mixed };

struct ConvexityReport {
  Convexity verdict = Convexity::mixed;
  /// Mean curvature of the boundary in g_v at the samples.
  std::vector<double> mean_curvature;
  /// dv~/dz_n on {z_n = 0} in the chart where the ball is {z_n > 0}.
  std::vector<double> chart_derivative;
  /// Largest |dv/dN| relative to v over the samples.
  double max_normal_derivative = 0;
  bool diagnostics_agree = true;
  /// Zero normal derivative: the g_v ball is a scaled Euclidean ball.
  bool marginal = false;
};

ConvexityReport ball_convexity(const Field& v, const Sphere& ball, const ConformalExponents& exp,
                               std::size_t samples = 64);

std::string to_string(Convexity c);

}  // namespace qlab
