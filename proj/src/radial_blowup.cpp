#include "qlab/radial_blowup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qlab/error.hpp"
#include "qlab/parallel.hpp"
#include "qlab/sampling.hpp"

namespace qlab {

GaussRule gauss_gegenbauer(int points, double lambda) {
  if (points < 1) throw Error(ErrorCode::invalid_argument, "Gauss rule needs at least one point");
  if (!(lambda > 0.0)) throw Error(ErrorCode::invalid_argument, "Gegenbauer parameter must be positive");
  // Golub-Welsch on the symmetric Jacobi matrix of the monic recurrence.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(points, points);
  for (int j = 1; j < points; ++j) {
    const double b = j * (j + 2 * lambda - 1) / (4.0 * (j + lambda) * (j + lambda - 1));
    jacobi(j, j - 1) = jacobi(j - 1, j) = std::sqrt(b);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  const double mass = std::sqrt(std::numbers::pi) * std::tgamma(lambda + 0.5) / std::tgamma(lambda + 1.0);
  GaussRule rule;
  for (int i = 0; i < points; ++i) {
    rule.nodes.push_back(eig.eigenvalues()[i]);
    const double v0 = eig.eigenvectors()(0, i);
    rule.weights.push_back(mass * v0 * v0);
  }
  return rule;
}

namespace {

// Nodes and normalised weights of the product rule on S^m in R^{m+1}.
void product_rule(int m, int order, std::vector<Point>& nodes, std::vector<double>& weights) {
  if (m == 1) {
    const int count = 2 * order;
    for (int i = 0; i < count; ++i) {
      const double phi = 2.0 * std::numbers::pi * i / count;
      Point p(2);
      p << std::cos(phi), std::sin(phi);
      nodes.push_back(p);
      weights.push_back(1.0 / count);
    }
    return;
  }
  std::vector<Point> sub_nodes;
  std::vector<double> sub_weights;
  product_rule(m - 1, order, sub_nodes, sub_weights);
  const GaussRule g = gauss_gegenbauer(order, (m - 1) / 2.0);
  double total = 0.0;
  for (double w : g.weights) total += w;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const double t = g.nodes[i];
    const double s = std::sqrt(std::max(0.0, 1.0 - t * t));
    for (std::size_t k = 0; k < sub_nodes.size(); ++k) {
      Point p(m + 1);
      p[0] = t;
      p.tail(m) = s * sub_nodes[k];
      nodes.push_back(std::move(p));
      weights.push_back(g.weights[i] / total * sub_weights[k]);
    }
  }
}

}  // namespace

SphericalRule::SphericalRule(int n, int order, std::size_t monte_carlo_pairs) : n_(n), product_(n <= 6) {
  if (n < 2) throw Error(ErrorCode::invalid_argument, "spherical averages need n >= 2");
  if (product_) {
    product_rule(n - 1, order, nodes_, weights_);
    return;
  }
  const CounterRng rng(0x5a11, static_cast<std::uint64_t>(n));
  for (std::size_t i = 0; i < monte_carlo_pairs; ++i) {
    const Point p = rng.on_sphere(i, n);
    nodes_.push_back(p);
    nodes_.push_back(-p);
  }
  weights_.assign(nodes_.size(), 1.0 / static_cast<double>(nodes_.size()));
}

double SphericalRule::average(const ValueFn& f, const Point& center, double radius) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) acc += weights_[i] * f(center + radius * nodes_[i]);
  return acc;
}

RadialField spherical_average(const ValueFn& f, const Point& center, const std::vector<double>& radii,
                              const SphericalRule& rule) {
  if (center.size() != rule.dim()) throw Error(ErrorCode::invalid_argument, "center dimension differs from rule");
  std::vector<double> out(radii.size());
  parallel_for(0, radii.size(), [&](std::size_t i) { out[i] = rule.average(f, center, radii[i]); });
  return RadialField(radii, std::move(out));
}

double interpolate(const GridField& f, const Point& x) {
  const int n = f.dim();
  const int margin = f.boundary_margin();
  const double h = f.spacing();
  std::vector<int> base(static_cast<std::size_t>(n));
  std::vector<double> frac(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    const double s = (x[a] - f.lo()) / h;
    const double lo = margin, hi = f.nodes_per_axis() - 1 - margin;
    if (!(s >= lo - 1e-12 && s <= hi + 1e-12)) {
      throw Error(ErrorCode::point_outside_domain, "interpolation point outside the valid grid");
    }
    int i = static_cast<int>(std::floor(s));
    i = std::clamp(i, static_cast<int>(lo), std::max(static_cast<int>(lo), static_cast<int>(hi) - 1));
    base[static_cast<std::size_t>(a)] = i;
    frac[static_cast<std::size_t>(a)] = std::clamp(s - i, 0.0, 1.0);
  }
  double acc = 0.0;
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (unsigned corner = 0; corner < (1u << n); ++corner) {
    double w = 1.0;
    for (int a = 0; a < n; ++a) {
      const bool up = corner & (1u << a);
      const auto ua = static_cast<std::size_t>(a);
      idx[ua] = base[ua] + (up ? 1 : 0);
      w *= up ? frac[ua] : 1.0 - frac[ua];
    }
    if (w == 0.0) continue;
    acc += w * f[f.flat_index(idx)];
  }
  return acc;
}

RadialField spherical_average(const GridField& f, const Point& center, const std::vector<double>& radii,
                              const SphericalRule& rule) {
  const double lo = f.lo() + f.boundary_margin() * f.spacing();
  const double hi = f.hi() - f.boundary_margin() * f.spacing();
  for (double r : radii) {
    for (int a = 0; a < f.dim(); ++a) {
      if (center[a] - r < lo - 1e-12 || center[a] + r > hi + 1e-12) {
        throw Error(ErrorCode::sphere_exits_domain, "sphere of radius " + std::to_string(r) + " leaves the grid");
      }
    }
  }
  return spherical_average([&](const Point& x) { return interpolate(f, x); }, center, radii, rule);
}

std::vector<double> nested_radial_integral(const std::vector<double>& radii, const std::vector<double>& f, int n) {
  if (radii.size() != f.size()) throw Error(ErrorCode::invalid_argument, "radii and values differ in length");
  if (radii.empty() || radii.front() != 0.0) throw Error(ErrorCode::invalid_argument, "radii must start at 0");
  const std::size_t m = radii.size();
  std::vector<double> inner(m, 0.0), outer(m, 0.0), g(m, 0.0);
  const double dn = n;
  for (std::size_t i = 1; i < m; ++i) {
    const double a = radii[i - 1], b = radii[i];
    const double slope = (f[i] - f[i - 1]) / (b - a);
    const double pn = std::pow(b, n) - std::pow(a, n);
    const double pn1 = std::pow(b, n + 1) - std::pow(a, n + 1);
    // int_a^b t^{n-1} (f_a + slope (t - a)) dt
    inner[i] = inner[i - 1] + f[i - 1] * pn / dn + slope * (pn1 / (dn + 1) - a * pn / dn);
    g[i] = inner[i] * std::pow(b, 1 - n);
    outer[i] = outer[i - 1] + 0.5 * (b - a) * (g[i] + g[i - 1]);
  }
  return outer;
}

RadialState integrate_radial_system(double w0, double u0, const RadialField& source, int n) {
  const auto e = exponents(n);
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source.value(i) < 0.0) throw Error(ErrorCode::negative_source, "source negative at r = " + std::to_string(source.radius(i)));
  }
  const auto t_source = nested_radial_integral(source.radii(), source.values(), n);
  std::vector<double> u(source.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = u0 - t_source[i];
  const auto t_u = nested_radial_integral(source.radii(), u, n);
  std::vector<double> w(source.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = w0 - t_u[i];
  return {n, e.nonlinearity, RadialField(source.radii(), std::move(u)), RadialField(source.radii(), std::move(w))};
}

std::vector<Rational> sigma_sequence(int n, int k_max) {
  const Rational q = exponents(n).nonlinearity_exact;
  std::vector<Rational> s{Rational(2)};
  for (int k = 1; k <= k_max; ++k) s.push_back(q * s.back() + 4);
  return s;
}

Rational sigma_closed_form(int n, int k) {
  const Rational q = exponents(n).nonlinearity_exact;
  Rational qk = 1;
  for (int i = 0; i < k; ++i) qk *= q;
  return 2 * qk + 4 * qk / (q - 1) - Rational(4) / (q - 1);
}

double IterationCertificate::log_bound(int k, double r) const {
  const auto& e = entries.at(static_cast<std::size_t>(k));
  return e.log_coefficient + e.sigma.convert_to<double>() * std::log(r);
}

double IterationCertificate::log_collapsed_bound(int k, double r) const {
  return log_c1 + entries.at(static_cast<std::size_t>(k)).sigma.convert_to<double>() * (log_c2 + std::log(r));
}

IterationCertificate iterate_lower_bounds(int n, double u0, int k_max, const std::vector<double>& radii) {
  if (!(u0 < 0.0)) throw Error(ErrorCode::invalid_argument, "the certificate assumes u(0) < 0");
  const auto e = exponents(n);
  const double q = e.nonlinearity;
  const auto sigma = sigma_sequence(n, k_max);
  IterationCertificate cert;
  cert.n = n;
  cert.u0 = u0;
  const double log_c0 = std::log(-u0 / (2.0 * n));
  cert.entries.push_back({0, sigma[0], log_c0, log_c0});
  for (int k = 1; k <= k_max; ++k) {
    const double s = sigma[static_cast<std::size_t>(k)].convert_to<double>();
    const auto& prev = cert.entries.back();
    CertificateEntry entry{k, sigma[static_cast<std::size_t>(k)], 0, 0};
    entry.log_coefficient = q * prev.log_coefficient - 4.0 * std::log(n + s);
    entry.log_chain_coefficient =
        q * prev.log_chain_coefficient -
        (std::log(n + s - 4) + std::log(s - 2) + std::log(n + s - 2) + std::log(s));
    cert.entries.push_back(entry);
  }
  // n + sigma_j <= (n + A) q^j with A = 2 + 4/(q-1), and
  // sum_j j q^{-j} <= q / (q-1)^2, give c_k >= c1 c2^{sigma_k}.
  const double a = 2.0 + 4.0 / (q - 1.0);
  const double beta = log_c0 - 4.0 * std::log(n + a) / (q - 1.0) - 4.0 * q * std::log(q) / ((q - 1.0) * (q - 1.0));
  cert.log_c2 = beta / a;
  cert.log_c1 = 4.0 * beta / (a * (q - 1.0)) + 4.0 * std::log(n + a) / (q - 1.0);
  cert.divergence_radius = std::exp(-cert.log_c2);
  for (double r : radii) {
    if (r > 0.0 && cert.log_c2 + std::log(r) > 0.0) {
      cert.divergence_grid_radius = r;
      break;
    }
  }
  return cert;
}

JensenResult jensen_check(std::span<const double> samples, double q) {
  if (samples.empty()) throw Error(ErrorCode::invalid_argument, "no samples");
  if (!(q > 1.0)) throw Error(ErrorCode::invalid_argument, "q must exceed 1");
  double mean = 0.0, mean_q = 0.0;
  for (double w : samples) {
    if (w < 0.0) throw Error(ErrorCode::negative_sample, "sample below zero");
    mean += w;
    mean_q += std::pow(w, q);
  }
  mean /= static_cast<double>(samples.size());
  mean_q /= static_cast<double>(samples.size());
  JensenResult r;
  r.slack = mean_q - std::pow(mean, q);
  r.holds = r.slack >= -1e-12 * std::max(mean_q, std::numeric_limits<double>::min());
  return r;
}

std::vector<RadialState> simulate_lower_bound_chain(int n, double u0, double w0, const std::vector<double>& radii,
                                                    int k_max) {
  const double q = exponents(n).nonlinearity;
  std::vector<RadialState> states;
  std::vector<double> source(radii.size(), 0.0);
  for (int k = 0; k <= k_max; ++k) {
    states.push_back(integrate_radial_system(w0, u0, RadialField(radii, source), n));
    const auto& w = states.back().w_bar.values();
    for (std::size_t i = 0; i < w.size(); ++i) source[i] = std::pow(std::max(w[i], 0.0), q);
  }
  return states;
}

}  // namespace qlab
