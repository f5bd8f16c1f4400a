#pragma once

#include <vector>

#include "json.hpp"
#include "qlab/conformal_ops.hpp"
#include "qlab/field.hpp"
#include "qlab/grid.hpp"

namespace qlab {

/// A peak of a positive source field: the rescaling zooms into `peak` so that
/// the peak value becomes 1.
struct RescaleJob {
  FieldPtr source;
  Point peak;
  double peak_value = 0;
  ConformalExponents exp;

  /// m^{-2/(n-4)}, the length scale of the zoom.
  double length_scale() const;
};

/// Builds the job and asserts the peak property on `samples` points of the
/// ball of radius `check_radius` around the peak (verification-failure).
RescaleJob make_rescale_job(FieldPtr source, const Point& peak, const ConformalExponents& exp,
                            double check_radius = 1.0, std::size_t samples = 512);

/// v(x) = m^{-1} u(peak + x m^{-2/(n-4)}).
double blowup_rescale(const RescaleJob& job, const Point& x);

/// The rescaled field with derivatives chained through the zoom.
class RescaledField final : public Field {
 public:
  explicit RescaledField(RescaleJob job);
  const RescaleJob& job() const { return job_; }

  double value(const Point& x) const override;
  Point gradient(const Point& x) const override;
  double laplacian(const Point& x) const override;
  Point laplacian_gradient(const Point& x) const override;
  double bilaplacian(const Point& x) const override;

  /// Source coordinates of a rescaled point.
  Point source_point(const Point& x) const;

 private:
  RescaleJob job_;
  double scale_;
};

/// Rescaling v with its own peak data composes with the first zoom.
RescaleJob compose(const RescaleJob& outer_of_inner, const RescaleJob& inner);

struct EquationResidual {
  /// Interior sup of |(-Delta)^2 v - c v^q| over sup |c v^q|.
  double relative = 0;
  GridField pointwise;
};

EquationResidual equation_invariance_check(const GridField& v, const ConformalExponents& exp,
                                           double coefficient = 1.0);

struct BubbleMatch {
  double lambda = 0;
  Point center;
  /// Sup-norm misfit over the samples relative to the largest sample.
  double match_error = 0;
  int evaluations = 0;

  nlohmann::json to_json() const;
};

/// Misfit above which a field is reported as not a bubble.
inline constexpr double kBubbleRejection = 1e-2;

/// Levenberg-Marquardt fit of the unit-Q bubble family K^{(n-4)/8} U_{lambda,x0}
/// to v sampled in the ball of radius `window` around `guess`.
BubbleMatch bubble_match(const ValueFn& v, int n, const Point& guess, double window,
                         std::size_t samples = 2000, std::uint64_t seed = 7);

struct Peak {
  std::size_t node = 0;
  Point point;
  double value = 0;
};

/// Grid argmax (lowest flat index wins ties) refined by a per-axis parabola.
Peak find_peak(const GridField& v);

/// Newton iterations on the gradient of f from x, with a difference-quotient
/// Hessian; returns x once the step falls below tol.
Point polish_peak(const Field& f, Point x, double tol = 1e-13, int max_iter = 30);

}  // namespace qlab
