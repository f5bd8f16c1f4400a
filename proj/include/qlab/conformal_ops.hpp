#pragma once

#include <optional>

#include <boost/multiprecision/cpp_int.hpp>

#include "qlab/grid.hpp"

namespace qlab {

using Rational = boost::multiprecision::cpp_rational;

/// Dimension-derived exponents of the fourth-order conformal calculus.
/// g_v = v^{metric} g_0, the equation nonlinearity is v^{nonlinearity},
/// the conformal volume element is v^{volume} dx and u = v^{yamabe} is the
/// second-order (Yamabe) conformal factor of the same metric.
struct ConformalExponents {
  int n = 0;
  Rational metric_exact;        // 4/(n-4)
  Rational nonlinearity_exact;  // (n+4)/(n-4)
  Rational volume_exact;        // 2n/(n-4)
  Rational yamabe_exact;        // (n-2)/(n-4)
  double metric = 0;
  double nonlinearity = 0;
  double volume = 0;
  double yamabe = 0;
};

/// Throws dimension-too-small for n <= 4.
ConformalExponents exponents(int n);

/// n(n-4)(n^2-4)/16: (-Delta)^2 U = K_n U^{(n+4)/(n-4)} for the standard bubble.
double bubble_constant(int n);

// Full-grid operators. Each output keeps the input geometry and raises the
// invalid margin by the stencil half-width (2 per Laplacian).
GridField laplacian(const GridField& f);
/// (-Delta)^2 f = laplacian(laplacian(f)).
GridField bilaplacian(const GridField& f);
GridField gradient_norm_sq(const GridField& f);

/// Q[g_v] = v^{-(n+4)/(n-4)} (-Delta)^2 v, the Q-curvature of v^{4/(n-4)} g_0.
GridField q_curvature_flatbg(const GridField& v, const ConformalExponents& exp);

/// True scalar curvature of g_v, computed through u = v^{(n-2)/(n-4)}:
/// R = 4(n-1)/(n-2) u^{-(n+2)/(n-2)} (-Delta u).
GridField scalar_curvature_flatbg(const GridField& v, const ConformalExponents& exp);

/// The normalisation in which -Delta v^{(n-2)/(n-4)} = R_hat v^{(n+2)/(n-4)}
/// holds verbatim: R_hat = (n-2)/(4(n-1)) R.
double normalized_scalar_curvature(double scalar_curvature, int n);

/// -Delta v - [(n-4)/(n-2) R_hat v^{n/(n-4)} + 2/(n-4) v^{-1} |grad v|^2],
/// identically zero for smooth positive v.
GridField yamabe_bridge_residual(const GridField& v, const ConformalExponents& exp);

/// L[g_0] u = -(4(n-1)/(n-2)) Delta u.
GridField conformal_laplacian_flat(const GridField& u, int n);

/// Total Q-curvature over conformal volume^{(n-4)/n}, integrated over the
/// valid nodes of Q with the Riemann weight h^n.
double paneitz_functional(const GridField& v, const ConformalExponents& exp);

/// The quotient once Q and the volume density v^{2n/(n-4)} are sampled with
/// common quadrature weights.
double paneitz_quotient(std::span<const double> q_curvature, std::span<const double> volume_density,
                        std::span<const double> weights, int n);

// Radial counterparts on uniform radius grids; the origin uses the even
// extension f(-r) = f(r), and the last 2 (Laplacian) or 4 (bilaplacian)
// nodes are invalid.
RadialField radial_laplacian(const RadialField& f, int n);
RadialField radial_bilaplacian(const RadialField& f, int n);
RadialField radial_q_curvature(const RadialField& v, const ConformalExponents& exp);

/// Fraction of the sphere |x| = r lying inside the cube [-L, L]^n,
/// tabulated once from a fixed-seed direction sample.
class CubeShellFraction {
 public:
  CubeShellFraction(int n, double half_width, std::size_t directions = 200000);
  double operator()(double r) const;

 private:
  double half_width_;
  std::vector<double> sorted_max_abs_;
};

/// Radial Paneitz quotient. Without a box the domain is the ball of radius
/// r_max; with one, the integrand is weighted by CubeShellFraction so the
/// domain is the cube [-L, L]^n (requires r_max >= L sqrt(n) for full cover).
double paneitz_functional(const RadialField& v, const ConformalExponents& exp,
                          std::optional<double> box_half_width = std::nullopt);

/// Curvature scalars of a Riemannian metric at a point.
struct CurvatureData {
  double scalar = 0;        // R
  double scalar_laplacian = 0;  // Delta R
  double ricci_norm_sq = 0;     // |Ric|^2
};

struct ExactCurvatureData {
  Rational scalar;
  Rational scalar_laplacian;
  Rational ricci_norm_sq;
};

/// The unit round sphere S^n: R = n(n-1), Ric = (n-1) g.
ExactCurvatureData round_sphere_curvature(int n);

enum class QFormulaMode {
  /// The classical tensorial formula with Ricci coefficient 2(n-4)/(n-2)^2.
  as_printed,
  /// Ricci coefficient (n-4)/(n-2)^2, which matches (-Delta)^2 under
  /// conformal change.
  covariance_consistent,
};

double q_curvature_tensorial(const CurvatureData& c, int n, QFormulaMode mode);
Rational q_curvature_tensorial(const ExactCurvatureData& c, int n, QFormulaMode mode);

}  // namespace qlab
