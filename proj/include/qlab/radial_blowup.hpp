#pragma once

#include <optional>
#include <span>
#include <vector>

#include "qlab/conformal_ops.hpp"
#include "qlab/field.hpp"
#include "qlab/grid.hpp"

namespace qlab {

/// Quadrature rule on the unit sphere S^{n-1} in R^n, weights summing to 1.
/// For n <= 6 it is a product rule: Gauss-Gegenbauer in the cosine of each
/// polar angle and the trapezoid rule in the last angle, exact for
/// polynomials of degree <= 2 * order - 1. Above that it is a fixed-seed
/// Monte Carlo rule built from antipodal pairs, so odd functions average to
/// zero exactly.
class SphericalRule {
 public:
  explicit SphericalRule(int n, int order = 8, std::size_t monte_carlo_pairs = 20000);

  int dim() const { return n_; }
  bool is_product_rule() const { return product_; }
  const std::vector<Point>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }

  double average(const ValueFn& f, const Point& center, double radius) const;

 private:
  int n_;
  bool product_;
  std::vector<Point> nodes_;
  std::vector<double> weights_;
};

/// Gauss rule for the weight (1 - t^2)^{lambda - 1/2} on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussRule gauss_gegenbauer(int points, double lambda);

/// f_bar(r) on the given radii about center.
RadialField spherical_average(const ValueFn& f, const Point& center, const std::vector<double>& radii,
                              const SphericalRule& rule);
/// Grid version: multilinear interpolation, sphere-exits-domain when a
/// sphere leaves the valid region.
RadialField spherical_average(const GridField& f, const Point& center, const std::vector<double>& radii,
                              const SphericalRule& rule);
/// Multilinear interpolation inside the valid nodes of f.
double interpolate(const GridField& f, const Point& x);

/// T[f](r) = int_0^r s^{1-n} int_0^s t^{n-1} f(t) dt ds. The inner integral
/// treats f as piecewise linear and integrates t^{n-1} exactly, so the outer
/// integrand s^{1-n} I(s) is regular (it vanishes like s at 0); the outer
/// integral is the trapezoid rule. Exact for constant f.
std::vector<double> nested_radial_integral(const std::vector<double>& radii, const std::vector<double>& f, int n);

struct RadialState {
  int n = 0;
  double q = 0;
  RadialField u_bar;
  RadialField w_bar;
};

/// u_bar = u0 - T[source], w_bar = w0 - T[u_bar].
RadialState integrate_radial_system(double w0, double u0, const RadialField& source, int n);

/// sigma_0 = 2, sigma_k = q sigma_{k-1} + 4, exact.
std::vector<Rational> sigma_sequence(int n, int k_max);
/// 2 q^k + 4 q^k / (q - 1) - 4 / (q - 1).
Rational sigma_closed_form(int n, int k);

struct CertificateEntry {
  int k = 0;
  Rational sigma;
  /// log of (-u0/(2n))^{q^k} prod_j (n + sigma_j)^{-4 q^{k-j}}.
  double log_coefficient = 0;
  /// log of the coefficient the iteration actually produces, dividing by
  /// (n + s - 4)(s - 2)(n + s - 2) s with s = sigma_j at each step; it is
  /// never smaller than the product form.
  double log_chain_coefficient = 0;
};

/// Lower bounds w_bar(r) >= c_k r^{sigma_k} and the k-independent collapse
/// w_bar(r) >= c1 (c2 r)^{sigma_k}.
struct IterationCertificate {
  int n = 0;
  double u0 = 0;
  std::vector<CertificateEntry> entries;
  double log_c1 = 0;
  double log_c2 = 0;
  /// 1 / c2: beyond it the collapsed bound grows without limit in k.
  double divergence_radius = 0;
  /// Smallest radius of the supplied grid with c2 r > 1, if any.
  std::optional<double> divergence_grid_radius;

  double log_bound(int k, double r) const;
  double log_collapsed_bound(int k, double r) const;
};

IterationCertificate iterate_lower_bounds(int n, double u0, int k_max,
                                          const std::vector<double>& radii = {});

struct JensenResult {
  bool holds = true;
  /// mean(w^q) - mean(w)^q, nonnegative up to roundoff.
  double slack = 0;
};

/// Checks mean(w)^q <= mean(w^q) allowing a relative roundoff of 1e-12.
JensenResult jensen_check(std::span<const double> samples, double q);

/// The self-reinforcing chain behind the certificate: state 0 has zero source,
/// state j uses source max(w_bar_{j-1}, 0)^q (the Jensen step).
std::vector<RadialState> simulate_lower_bound_chain(int n, double u0, double w0, const std::vector<double>& radii,
                                                    int k_max);

}  // namespace qlab
