#include "qlab/rescale.hpp"

#include <cmath>

#include <unsupported/Eigen/NonLinearOptimization>

#include "qlab/error.hpp"
#include "qlab/parallel.hpp"

namespace qlab {

double RescaleJob::length_scale() const { return std::pow(peak_value, -2.0 / (exp.n - 4)); }

RescaleJob make_rescale_job(FieldPtr source, const Point& peak, const ConformalExponents& exp,
                            double check_radius, std::size_t samples) {
  if (!source) throw Error(ErrorCode::invalid_argument, "rescale job needs a source field");
  if (source->dim() != exp.n || peak.size() != exp.n)
    throw Error(ErrorCode::invalid_argument, "rescale job dimensions differ");
  RescaleJob job{source, peak, source->value(peak), exp};
  if (!(job.peak_value > 0.0)) throw Error(ErrorCode::nonpositive_conformal_factor, "peak value must be positive");
  const CounterRng rng(0x9ea4, 0);
  for (std::size_t i = 0; i < samples; ++i) {
    const double u = source->value(peak + rng.in_ball(i, exp.n, check_radius));
    if (u > job.peak_value * (1.0 + 1e-12))
      throw Error(ErrorCode::verification_failure, "source exceeds the peak value near the peak");
  }
  return job;
}

RescaledField::RescaledField(RescaleJob job)
    : Field(job.exp.n), job_(std::move(job)), scale_(job_.length_scale()) {
  set_fd_step(job_.source->fd_step() / scale_);
}

Point RescaledField::source_point(const Point& x) const { return job_.peak + scale_ * x; }

double RescaledField::value(const Point& x) const { return job_.source->value(source_point(x)) / job_.peak_value; }

Point RescaledField::gradient(const Point& x) const {
  return (scale_ / job_.peak_value) * job_.source->gradient(source_point(x));
}

double RescaledField::laplacian(const Point& x) const {
  return scale_ * scale_ / job_.peak_value * job_.source->laplacian(source_point(x));
}

Point RescaledField::laplacian_gradient(const Point& x) const {
  return std::pow(scale_, 3) / job_.peak_value * job_.source->laplacian_gradient(source_point(x));
}

double RescaledField::bilaplacian(const Point& x) const {
  return std::pow(scale_, 4) / job_.peak_value * job_.source->bilaplacian(source_point(x));
}

double blowup_rescale(const RescaleJob& job, const Point& x) {
  return job.source->value(job.peak + job.length_scale() * x) / job.peak_value;
}

RescaleJob compose(const RescaleJob& second, const RescaleJob& first) {
  RescaleJob out = first;
  out.peak = first.peak + first.length_scale() * second.peak;
  out.peak_value = first.peak_value * second.peak_value;
  return out;
}

EquationResidual equation_invariance_check(const GridField& v, const ConformalExponents& exp,
                                           double coefficient) {
  if (v.dim() != exp.n) throw Error(ErrorCode::invalid_argument, "grid and exponents dimensions differ");
  GridField res = bilaplacian(v);
  double num = 0, den = 0;
  for (auto i : res.valid_indices()) {
    const double rhs = coefficient * std::pow(v[i], exp.nonlinearity);
    res[i] -= rhs;
    num = std::max(num, std::abs(res[i]));
    den = std::max(den, std::abs(rhs));
  }
  return {den > 0.0 ? num / den : num, std::move(res)};
}

nlohmann::json BubbleMatch::to_json() const {
  return {{"lambda", lambda},
          {"center", std::vector<double>(center.data(), center.data() + center.size())},
          {"match_error", match_error},
          {"evaluations", evaluations}};
}

namespace {

// Residuals (model - v) / scale in the parameters (log lambda, x0).
struct BubbleFit {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const std::vector<Point>& points;
  const std::vector<double>& data;
  double amplitude;
  double k;
  double scale;

  int inputs() const { return static_cast<int>(points.front().size()) + 1; }
  int values() const { return static_cast<int>(points.size()); }

  double model(const Eigen::VectorXd& p, const Point& x, double* lam2, double* denom) const {
    const double lambda = std::exp(p[0]);
    const Point y = x - p.tail(p.size() - 1);
    *lam2 = lambda * lambda;
    *denom = 1.0 + *lam2 * y.squaredNorm();
    return amplitude * std::pow(2.0 * lambda / *denom, k);
  }

  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& f) const {
    double l2, d;
    for (std::size_t i = 0; i < points.size(); ++i)
      f[static_cast<Eigen::Index>(i)] = (model(p, points[i], &l2, &d) - data[i]) / scale;
    return 0;
  }

  int df(const Eigen::VectorXd& p, Eigen::MatrixXd& jac) const {
    double l2, d;
    const Point x0 = p.tail(p.size() - 1);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double m = model(p, points[i], &l2, &d) / scale;
      const Point y = points[i] - x0;
      jac(row, 0) = m * k * (1.0 - 2.0 * l2 * y.squaredNorm() / d);
      jac.row(row).tail(p.size() - 1) = (m * 2.0 * k * l2 / d) * y.transpose();
    }
    return 0;
  }
};

}  // namespace

BubbleMatch bubble_match(const ValueFn& v, int n, const Point& guess, double window, std::size_t samples,
                         std::uint64_t seed) {
  if (n <= 4) throw Error(ErrorCode::dimension_too_small, "bubble match needs n >= 5");
  if (guess.size() != n || !(window > 0.0) || samples < static_cast<std::size_t>(2 * (n + 1)))
    throw Error(ErrorCode::invalid_argument, "invalid bubble-match window");
  std::vector<Point> points(samples);
  std::vector<double> values(samples);
  const CounterRng rng(seed, 0xb0b);
  parallel_for(0, samples, [&](std::size_t i) {
    points[i] = i == 0 ? guess : Point(guess + rng.in_ball(i, n, window));
    values[i] = v(points[i]);
  });
  std::size_t top = 0;
  for (std::size_t i = 1; i < samples; ++i) {
    if (!(values[i] > 0.0)) throw Error(ErrorCode::nonpositive_conformal_factor, "bubble match needs v > 0");
    if (values[i] > values[top]) top = i;
  }
  if (!(values[0] > 0.0)) throw Error(ErrorCode::nonpositive_conformal_factor, "bubble match needs v > 0");

  const double k = (n - 4) / 2.0;
  const double amplitude = std::pow(bubble_constant(n), (n - 4) / 8.0);
  BubbleFit fit{points, values, amplitude, k, values[top]};
  Eigen::VectorXd p(n + 1);
  p[0] = std::log(0.5 * std::pow(values[top] / amplitude, 1.0 / k));
  p.tail(n) = points[top];

  Eigen::LevenbergMarquardt<BubbleFit> lm(fit);
  lm.parameters.ftol = 1e-15;
  lm.parameters.xtol = 1e-15;
  lm.parameters.maxfev = 4000;
  const auto status = lm.minimize(p);
  using Status = Eigen::LevenbergMarquardtSpace::Status;
  if (status == Status::ImproperInputParameters || status == Status::TooManyFunctionEvaluation ||
      !p.allFinite())
    throw Error(ErrorCode::fit_nonconvergent, "Levenberg-Marquardt status " + std::to_string(int(status)));

  BubbleMatch out;
  out.lambda = std::exp(p[0]);
  out.center = p.tail(n);
  out.evaluations = static_cast<int>(lm.nfev);
  Eigen::VectorXd f(static_cast<Eigen::Index>(samples));
  fit(p, f);
  out.match_error = f.cwiseAbs().maxCoeff();
  return out;
}

Peak find_peak(const GridField& v) {
  const auto idx = v.valid_indices();
  if (idx.empty()) throw Error(ErrorCode::grid_too_small, "no valid nodes");
  std::size_t best = idx.front();
  for (auto i : idx)
    if (v[i] > v[best]) best = i;
  Peak p{best, v.coordinate(best), v[best]};
  const auto mi = v.multi_index(best);
  const int lo = v.boundary_margin(), hi = v.nodes_per_axis() - 1 - v.boundary_margin();
  double correction = 0;
  for (int a = 0; a < v.dim(); ++a) {
    const int j = mi[static_cast<std::size_t>(a)];
    if (j <= lo || j >= hi) continue;
    const double fm = v[best - v.stride(a)], f0 = v[best], fp = v[best + v.stride(a)];
    const double curv = fm - 2.0 * f0 + fp;
    if (!(curv < 0.0)) continue;
    const double t = 0.5 * (fm - fp) / curv;
    p.point[a] += t * v.spacing();
    correction += 0.25 * (fp - fm) * t;  // parabola peak lift
  }
  p.value = v[best] + correction;
  return p;
}

Point polish_peak(const Field& f, Point x, double tol, int max_iter) {
  const int n = f.dim();
  for (int it = 0; it < max_iter; ++it) {
    const Point g = f.gradient(x);
    const double h = 1e-4 * f.fd_step() / 1e-2;
    Eigen::MatrixXd hess(n, n);
    for (int j = 0; j < n; ++j) {
      Point a = x, b = x;
      a[j] += h;
      b[j] -= h;
      hess.col(j) = (f.gradient(a) - f.gradient(b)) / (2 * h);
    }
    hess = 0.5 * (hess + hess.transpose()).eval();
    const Point step = hess.ldlt().solve(-g);
    if (!step.allFinite() || f.value(x + step) < f.value(x) * (1.0 - 1e-14)) break;
    x += step;
    if (step.norm() < tol * (1.0 + x.norm())) break;
  }
  return x;
}

}  // namespace qlab
