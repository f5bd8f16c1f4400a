#include "qlab/conformal_ops.hpp"

#include <algorithm>
#include <cmath>

#include "qlab/error.hpp"
#include "qlab/parallel.hpp"

namespace qlab {

namespace {

constexpr double kD2[5] = {-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0};
constexpr double kD1[5] = {1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0};
constexpr int kHalfWidth = 2;

void require_dim(const GridField& v, const ConformalExponents& exp) {
  if (v.dim() != exp.n) {
    throw Error(ErrorCode::invalid_argument, "grid dimension differs from exponent dimension");
  }
}

void require_stencil(const GridField& f, int margin_out) {
  if (f.nodes_per_axis() - 2 * margin_out < 1) {
    throw Error(ErrorCode::grid_too_small,
                "m = " + std::to_string(f.nodes_per_axis()) + " leaves no interior at margin " +
                    std::to_string(margin_out));
  }
}

void require_positive(const GridField& v) {
  for (std::size_t i : v.valid_indices()) {
    if (!(v[i] > 0.0)) {
      throw Error(ErrorCode::nonpositive_conformal_factor, "v <= 0 at node " + std::to_string(i));
    }
  }
}

template <typename Fn>
GridField pointwise(const GridField& like, const Fn& fn) {
  GridField out = like.like(like.boundary_margin());
  const auto idx = like.valid_indices();
  parallel_for(0, idx.size(), [&](std::size_t k) { out[idx[k]] = fn(idx[k]); });
  return out;
}

double radial_sample(const std::vector<double>& v, long j) {
  return v[static_cast<std::size_t>(j < 0 ? -j : j)];
}

}  // namespace

ConformalExponents exponents(int n) {
  if (n <= 4) throw Error(ErrorCode::dimension_too_small, "need n >= 5, got " + std::to_string(n));
  ConformalExponents e;
  e.n = n;
  e.metric_exact = Rational(4, n - 4);
  e.nonlinearity_exact = Rational(n + 4, n - 4);
  e.volume_exact = Rational(2 * n, n - 4);
  e.yamabe_exact = Rational(n - 2, n - 4);
  e.metric = e.metric_exact.convert_to<double>();
  e.nonlinearity = e.nonlinearity_exact.convert_to<double>();
  e.volume = e.volume_exact.convert_to<double>();
  e.yamabe = e.yamabe_exact.convert_to<double>();
  return e;
}

double bubble_constant(int n) {
  const double d = n;
  return d * (d - 4.0) * (d * d - 4.0) / 16.0;
}

GridField laplacian(const GridField& f) {
  const int margin = f.boundary_margin() + kHalfWidth;
  require_stencil(f, margin);
  GridField out = f.like(margin);
  const double inv_h2 = 1.0 / (f.spacing() * f.spacing());
  const auto idx = f.interior_indices(margin);
  const int n = f.dim();
  parallel_for(0, idx.size(), [&](std::size_t k) {
    const std::size_t c = idx[k];
    double acc = 0.0;
    for (int axis = 0; axis < n; ++axis) {
      const std::size_t s = f.stride(axis);
      acc += kD2[0] * f[c - 2 * s] + kD2[1] * f[c - s] + kD2[2] * f[c] + kD2[3] * f[c + s] +
             kD2[4] * f[c + 2 * s];
    }
    out[c] = acc * inv_h2;
  });
  return out;
}

GridField bilaplacian(const GridField& f) { return laplacian(laplacian(f)); }

GridField gradient_norm_sq(const GridField& f) {
  const int margin = f.boundary_margin() + kHalfWidth;
  require_stencil(f, margin);
  GridField out = f.like(margin);
  const double inv_h = 1.0 / f.spacing();
  const auto idx = f.interior_indices(margin);
  const int n = f.dim();
  parallel_for(0, idx.size(), [&](std::size_t k) {
    const std::size_t c = idx[k];
    double acc = 0.0;
    for (int axis = 0; axis < n; ++axis) {
      const std::size_t s = f.stride(axis);
      const double d = (kD1[0] * f[c - 2 * s] + kD1[1] * f[c - s] + kD1[3] * f[c + s] +
                        kD1[4] * f[c + 2 * s]) * inv_h;
      acc += d * d;
    }
    out[c] = acc;
  });
  return out;
}

GridField q_curvature_flatbg(const GridField& v, const ConformalExponents& exp) {
  require_dim(v, exp);
  require_positive(v);
  const GridField b = bilaplacian(v);
  return pointwise(b, [&](std::size_t i) { return b[i] * std::pow(v[i], -exp.nonlinearity); });
}

GridField scalar_curvature_flatbg(const GridField& v, const ConformalExponents& exp) {
  require_dim(v, exp);
  require_positive(v);
  const int n = exp.n;
  GridField u = v;
  for (std::size_t i : v.valid_indices()) u[i] = std::pow(v[i], exp.yamabe);
  const GridField lap = laplacian(u);
  const double c = 4.0 * (n - 1) / (n - 2);
  const double power = -static_cast<double>(n + 2) / (n - 2);
  return pointwise(lap, [&](std::size_t i) { return c * std::pow(u[i], power) * (-lap[i]); });
}

double normalized_scalar_curvature(double scalar_curvature, int n) {
  return scalar_curvature * (n - 2) / (4.0 * (n - 1));
}

GridField yamabe_bridge_residual(const GridField& v, const ConformalExponents& exp) {
  const int n = exp.n;
  const GridField r = scalar_curvature_flatbg(v, exp);
  const GridField lap = laplacian(v);
  const GridField grad2 = gradient_norm_sq(v);
  const double bridge = static_cast<double>(n) / (n - 4);
  return pointwise(r, [&](std::size_t i) {
    const double r_hat = normalized_scalar_curvature(r[i], n);
    return -lap[i] - (static_cast<double>(n - 4) / (n - 2) * r_hat * std::pow(v[i], bridge) +
                      2.0 / (n - 4) * grad2[i] / v[i]);
  });
}

GridField conformal_laplacian_flat(const GridField& u, int n) {
  if (n <= 2) throw Error(ErrorCode::dimension_too_small, "conformal Laplacian needs n >= 3");
  const GridField lap = laplacian(u);
  const double c = -4.0 * (n - 1) / (n - 2);
  return pointwise(lap, [&](std::size_t i) { return c * lap[i]; });
}

double paneitz_quotient(std::span<const double> q_curvature, std::span<const double> volume_density,
                        std::span<const double> weights, int n) {
  double total_q = 0.0;
  double volume = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    total_q += weights[i] * q_curvature[i] * volume_density[i];
    volume += weights[i] * volume_density[i];
  }
  if (!(volume > 0.0)) throw Error(ErrorCode::zero_volume, "conformal volume vanishes");
  return total_q / std::pow(volume, static_cast<double>(n - 4) / n);
}

double paneitz_functional(const GridField& v, const ConformalExponents& exp) {
  const GridField q = q_curvature_flatbg(v, exp);
  const auto idx = q.valid_indices();
  std::vector<double> qs, dens, w;
  qs.reserve(idx.size());
  dens.reserve(idx.size());
  const double cell = std::pow(v.spacing(), v.dim());
  for (std::size_t i : idx) {
    qs.push_back(q[i]);
    dens.push_back(std::pow(v[i], exp.volume));
  }
  w.assign(idx.size(), cell);
  return paneitz_quotient(qs, dens, w, exp.n);
}

RadialField radial_laplacian(const RadialField& f, int n) {
  const double h = f.uniform_spacing();
  if (h <= 0.0) throw Error(ErrorCode::invalid_argument, "radial stencils need a uniform grid");
  const std::size_t tail = f.invalid_tail() + kHalfWidth;
  if (f.size() <= tail + 1) throw Error(ErrorCode::grid_too_small, "radial grid too short for stencil");
  const auto& v = f.values();
  std::vector<double> out(f.size(), std::nan(""));
  const std::size_t last = f.size() - tail;
  for (std::size_t i = 0; i < last; ++i) {
    const long c = static_cast<long>(i);
    double d2 = 0.0;
    double d1 = 0.0;
    for (int k = -2; k <= 2; ++k) {
      const double s = radial_sample(v, c + k);
      d2 += kD2[k + 2] * s;
      d1 += kD1[k + 2] * s;
    }
    d2 /= h * h;
    d1 /= h;
    out[i] = i == 0 ? n * d2 : d2 + (n - 1) * d1 / f.radius(i);
  }
  // n f''(0) is accurate but its h^4 error differs from the limit of the
  // r > 0 error, and a second application would amplify the jump by 1/h^2.
  // Even extrapolation in r^2 from nodes 1..3 keeps the error smooth.
  if (last > 3) out[0] = 1.5 * out[1] - 0.6 * out[2] + 0.1 * out[3];
  return RadialField(f.radii(), std::move(out));
}

RadialField radial_bilaplacian(const RadialField& f, int n) {
  return radial_laplacian(radial_laplacian(f, n), n);
}

RadialField radial_q_curvature(const RadialField& v, const ConformalExponents& exp) {
  const RadialField b = radial_bilaplacian(v, exp.n);
  std::vector<double> q(v.size(), std::nan(""));
  for (std::size_t i = 0; i + b.invalid_tail() < v.size(); ++i) {
    if (!(v.value(i) > 0.0)) {
      throw Error(ErrorCode::nonpositive_conformal_factor, "v <= 0 at radius " + std::to_string(v.radius(i)));
    }
    q[i] = b.value(i) * std::pow(v.value(i), -exp.nonlinearity);
  }
  return RadialField(v.radii(), std::move(q));
}

CubeShellFraction::CubeShellFraction(int n, double half_width, std::size_t directions)
    : half_width_(half_width) {
  const CounterRng rng(0x5eed'c0be, static_cast<std::uint64_t>(n));
  sorted_max_abs_.resize(directions);
  for (std::size_t i = 0; i < directions; ++i) {
    sorted_max_abs_[i] = rng.on_sphere(i, n).cwiseAbs().maxCoeff();
  }
  std::sort(sorted_max_abs_.begin(), sorted_max_abs_.end());
}

double CubeShellFraction::operator()(double r) const {
  if (r <= half_width_) return 1.0;
  const double limit = half_width_ / r;
  const auto it = std::upper_bound(sorted_max_abs_.begin(), sorted_max_abs_.end(), limit);
  return static_cast<double>(it - sorted_max_abs_.begin()) / static_cast<double>(sorted_max_abs_.size());
}

double paneitz_functional(const RadialField& v, const ConformalExponents& exp,
                          std::optional<double> box_half_width) {
  const int n = exp.n;
  const RadialField q = radial_q_curvature(v, exp);
  const std::size_t count = q.size() - q.invalid_tail();
  const double h = v.uniform_spacing();
  std::optional<CubeShellFraction> fraction;
  if (box_half_width) fraction.emplace(n, *box_half_width);
  const double area = unit_sphere_area(n - 1);

  // composite Simpson on [0, count-1], trapezoid on a leftover odd cell
  std::vector<double> w(count, 0.0);
  const std::size_t simpson_end = (count - 1) % 2 == 0 ? count - 1 : count - 2;
  for (std::size_t i = 0; i + 2 <= simpson_end; i += 2) {
    w[i] += h / 3.0;
    w[i + 1] += 4.0 * h / 3.0;
    w[i + 2] += h / 3.0;
  }
  if (simpson_end != count - 1) {
    w[count - 2] += h / 2.0;
    w[count - 1] += h / 2.0;
  }
  std::vector<double> qs(count), dens(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double r = v.radius(i);
    const double shell = area * std::pow(r, n - 1) * (fraction ? (*fraction)(r) : 1.0);
    w[i] *= shell;
    qs[i] = q.value(i);
    dens[i] = std::pow(v.value(i), exp.volume);
  }
  return paneitz_quotient(qs, dens, w, n);
}

ExactCurvatureData round_sphere_curvature(int n) {
  return {Rational(n * (n - 1)), Rational(0), Rational(n * (n - 1) * (n - 1))};
}

namespace {

template <typename T>
T q_formula(const T& scalar, const T& lap, const T& ric2, int n, QFormulaMode mode) {
  const T nn(n);
  const T c_lap = -T(n - 4) / (T(4) * T(n - 1));
  const T c_r2 = T(n - 4) * (nn * nn * nn - T(4) * nn * nn + T(16) * nn - T(16)) /
                 (T(16) * T(n - 1) * T(n - 1) * T(n - 2) * T(n - 2));
  const T ricci_scale = mode == QFormulaMode::as_printed ? T(2) : T(1);
  const T c_ric = -ricci_scale * T(n - 4) / (T(n - 2) * T(n - 2));
  return c_lap * lap + c_r2 * scalar * scalar + c_ric * ric2;
}

}  // namespace

double q_curvature_tensorial(const CurvatureData& c, int n, QFormulaMode mode) {
  if (n <= 4) throw Error(ErrorCode::dimension_too_small, "need n >= 5");
  return q_formula<double>(c.scalar, c.scalar_laplacian, c.ricci_norm_sq, n, mode);
}

Rational q_curvature_tensorial(const ExactCurvatureData& c, int n, QFormulaMode mode) {
  if (n <= 4) throw Error(ErrorCode::dimension_too_small, "need n >= 5");
  return q_formula<Rational>(c.scalar, c.scalar_laplacian, c.ricci_norm_sq, n, mode);
}

}  // namespace qlab
