#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "qlab/conformal_ops.hpp"
#include "qlab/error.hpp"
#include "qlab/sampling.hpp"
#include "qlab/stereographic.hpp"

using namespace qlab;

namespace {

double max_abs_error(const GridField& f, const std::function<double(const Point&)>& expected) {
  double worst = 0;
  for (std::size_t i : f.valid_indices()) worst = std::max(worst, std::abs(f[i] - expected(f.coordinate(i))));
  return worst;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST_CASE("exponents") {
  const auto e5 = exponents(5);
  CHECK(e5.metric_exact == Rational(4));
  CHECK(e5.nonlinearity_exact == Rational(9));
  CHECK(e5.volume_exact == Rational(10));
  CHECK(e5.yamabe_exact == Rational(3));
  const auto e6 = exponents(6);
  CHECK(e6.metric == 2.0);
  CHECK(e6.nonlinearity == 5.0);
  CHECK(e6.volume == 6.0);
  CHECK(e6.yamabe == 2.0);
  const auto e8 = exponents(8);
  CHECK(e8.metric_exact == Rational(1));
  CHECK(e8.nonlinearity_exact == Rational(3));
  CHECK(e8.volume_exact == Rational(4));
  CHECK(e8.yamabe_exact == Rational(3, 2));
  for (int n = 5; n <= 12; ++n) {
    const auto e = exponents(n);
    // q + 1 = p and the metric exponent ties the Yamabe factor to v.
    CHECK(e.nonlinearity_exact + 1 == e.volume_exact);
    CHECK(e.yamabe_exact * 4 / (n - 2) == e.metric_exact);
  }
  CHECK(code_of([] { exponents(4); }) == ErrorCode::dimension_too_small);
  CHECK(code_of([] { exponents(2); }) == ErrorCode::dimension_too_small);
}

TEST_CASE("bubble constant") {
  CHECK(bubble_constant(6) == doctest::Approx(24.0));
  CHECK(bubble_constant(5) == doctest::Approx(6.5625));
  for (int n = 5; n <= 10; ++n) CHECK(bubble_constant_from_radial_calculus(n) == doctest::Approx(bubble_constant(n)));
}

TEST_CASE("stencils are exact on low-degree polynomials") {
  const int n = 3;
  const GridField sq = GridField::sample(n, -1, 1, 11, [](const Point& x) { return x.squaredNorm(); });
  const GridField lap = laplacian(sq);
  CHECK(lap.boundary_margin() == 2);
  CHECK(max_abs_error(lap, [](const Point&) { return 6.0; }) < 1e-10);
  CHECK(std::isnan(lap[0]));

  // Random quartics: the 5-point stencil is exact through degree 5 per axis.
  CounterRng rng(7);
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    double c[6];
    for (int k = 0; k < 6; ++k) c[k] = 2 * rng.uniform(trial, k) - 1;
    auto poly = [&](const Point& x) {
      return c[0] * std::pow(x[0], 4) + c[1] * x[0] * x[0] * x[1] * x[1] + c[2] * std::pow(x[2], 3) +
             c[3] * x[0] * x[1] * x[2] + c[4] * x[1] + c[5];
    };
    auto exact_lap = [&](const Point& x) {
      return 12 * c[0] * x[0] * x[0] + 2 * c[1] * (x[1] * x[1] + x[0] * x[0]) + 6 * c[2] * x[2];
    };
    const GridField f = GridField::sample(n, -1, 1, 9, poly);
    CHECK(max_abs_error(laplacian(f), exact_lap) < 1e-9);
    CHECK(max_abs_error(bilaplacian(f), [&](const Point&) { return 24 * c[0] + 8 * c[1]; }) < 1e-7);
  }
}

TEST_CASE("bilaplacian of |x|^4") {
  for (int n : {5, 6}) {
    const GridField f = GridField::sample(n, -1, 1, 11, [](const Point& x) {
      const double s = x.squaredNorm();
      return s * s;
    });
    const GridField b = bilaplacian(f);
    CHECK(b.boundary_margin() == 4);
    CHECK(max_abs_error(b, [n](const Point&) { return 8.0 * n * (n + 2); }) < 1e-7);
    CHECK(max_abs_error(bilaplacian(GridField::sample(n, -1, 1, 11, [](const Point& x) { return x.squaredNorm(); })),
                        [](const Point&) { return 0.0; }) < 1e-9);
  }
}

TEST_CASE("bubble derivatives against the series oracle") {
  for (int n : {5, 6, 9}) {
    for (double lambda : {0.5, 1.0, 3.0}) {
      const Bubble u = Bubble::standard(n, lambda);
      auto profile = [&](long double r0) { return oracle::bubble_series(n, lambda, r0); };
      for (double r : {0.0, 0.3, 1.1, 2.5}) {
        const auto d = oracle::radial_derivatives(profile, n, r);
        Point x = Point::Zero(n);
        x[0] = r * 0.6;
        x[1] = r * 0.8;
        CHECK(u.laplacian(x) == doctest::Approx(static_cast<double>(d.laplacian)).epsilon(1e-10));
        CHECK(u.bilaplacian(x) == doctest::Approx(static_cast<double>(d.bilaplacian)).epsilon(1e-10));
        CHECK(u.radial_laplacian(r) == doctest::Approx(static_cast<double>(d.laplacian)).epsilon(1e-10));
      }
    }
  }
  const Bubble u6 = Bubble::standard(6);
  const Point origin = Point::Zero(6);
  CHECK(u6.value(origin) == doctest::Approx(2.0));
  CHECK(u6.laplacian(origin) == doctest::Approx(-24.0));
  CHECK(u6.bilaplacian(origin) == doctest::Approx(768.0));
}

TEST_CASE("pointwise stencil probes on the bubble") {
  const Bubble u = Bubble::standard(6);
  const ValueFn f = [&](const Point& x) { return u.value(x); };
  const Point origin = Point::Zero(6);
  CHECK(-stencil_laplacian(f, origin, 0.01) == doctest::Approx(24.0).epsilon(1e-6));
  CHECK(stencil_bilaplacian(f, origin, 0.02) == doctest::Approx(768.0).epsilon(1e-5));
  // Halving h should cut the error by about 16.
  const double e1 = std::abs(stencil_bilaplacian(f, origin, 0.2) - 768.0);
  const double e2 = std::abs(stencil_bilaplacian(f, origin, 0.1) - 768.0);
  CHECK(e1 / e2 > 12.0);
}

TEST_CASE("q curvature of bubbles on a grid") {
  const auto e5 = exponents(5);
  const Bubble u = Bubble::standard(5);
  const GridField v = GridField::sample(5, -1, 1, 17, [&](const Point& x) { return u.value(x); });
  const GridField q = q_curvature_flatbg(v, e5);
  CHECK(max_abs_error(q, [](const Point&) { return bubble_constant(5); }) < 2e-2 * bubble_constant(5));

  // Dilation leaves Q unchanged.
  const Bubble u2 = Bubble::standard(5, 2.0);
  const GridField v2 = GridField::sample(5, -0.5, 0.5, 17, [&](const Point& x) { return u2.value(x); });
  CHECK(max_abs_error(q_curvature_flatbg(v2, e5), [](const Point&) { return bubble_constant(5); }) <
        2e-2 * bubble_constant(5));

  const GridField one = GridField::sample(5, -1, 1, 9, [](const Point&) { return 1.0; });
  CHECK(max_abs_error(q_curvature_flatbg(one, e5), [](const Point&) { return 0.0; }) < 1e-12);

  GridField bad = one;
  bad[bad.size() / 2] = -1.0;
  CHECK(code_of([&] { q_curvature_flatbg(bad, e5); }) == ErrorCode::nonpositive_conformal_factor);
  CHECK(code_of([&] { q_curvature_flatbg(GridField::sample(5, -1, 1, 4, [](const Point&) { return 1.0; }), e5); }) ==
        ErrorCode::grid_too_small);
}

TEST_CASE("q curvature homogeneity") {
  const auto e = exponents(5);
  const Bubble u = Bubble::standard(5);
  const GridField v = GridField::sample(5, -1, 1, 13, [&](const Point& x) { return u.value(x) + 0.1 * x[0] * x[0]; });
  const GridField q = q_curvature_flatbg(v, e);
  for (double c : {0.5, 2.0, 3.0}) {
    GridField cv = v;
    for (double& x : cv.values()) x *= c;
    const GridField qc = q_curvature_flatbg(cv, e);
    const double factor = std::pow(c, -8.0 / (5 - 4));
    for (std::size_t i : q.valid_indices()) CHECK(qc[i] == doctest::Approx(factor * q[i]).epsilon(1e-10));
  }
}

TEST_CASE("scalar curvature and the Yamabe bridge") {
  const auto e6 = exponents(6);
  const Bubble u = Bubble::standard(6);
  const GridField v = GridField::sample(6, -0.6, 0.6, 11, [&](const Point& x) { return u.value(x); });
  CHECK(max_abs_error(scalar_curvature_flatbg(v, e6), [](const Point&) { return 30.0; }) < 0.05);
  CHECK(normalized_scalar_curvature(30.0, 6) == doctest::Approx(6.0));

  const GridField one = GridField::sample(6, -1, 1, 7, [](const Point&) { return 1.0; });
  CHECK(max_abs_error(scalar_curvature_flatbg(one, e6), [](const Point&) { return 0.0; }) < 1e-12);

  // The identity holds for any smooth positive v.
  const auto e5 = exponents(5);
  const GridField w = GridField::sample(5, -1, 1, 15, [](const Point& x) {
    return 1.0 + 0.5 * std::exp(-x.squaredNorm()) + 0.2 * x[1];
  });
  const GridField res = yamabe_bridge_residual(w, e5);
  double scale = 0;
  const GridField lw = laplacian(w);
  for (std::size_t i : lw.valid_indices()) scale = std::max(scale, std::abs(lw[i]));
  CHECK(max_abs_error(res, [](const Point&) { return 0.0; }) < 1e-3 * scale);
}

TEST_CASE("conformal laplacian") {
  const int n = 5;
  const GridField one = GridField::sample(n, -1, 1, 7, [](const Point&) { return 1.0; });
  CHECK(max_abs_error(conformal_laplacian_flat(one, n), [](const Point&) { return 0.0; }) < 1e-12);
  const GridField sq = GridField::sample(n, -1, 1, 7, [](const Point& x) { return x.squaredNorm(); });
  CHECK(max_abs_error(conformal_laplacian_flat(sq, n), [](const Point&) { return -8.0 * 5 * 4 / 3; }) < 1e-9);
  // The Yamabe bubble (2/(1+|x|^2))^{(n-2)/2} solves L u = n(n-1) u^{(n+2)/(n-2)}.
  auto yb = [](const Point& x) { return std::pow(2.0 / (1.0 + x.squaredNorm()), 1.5); };
  const GridField y = GridField::sample(n, -0.5, 0.5, 13, yb);
  CHECK(max_abs_error(conformal_laplacian_flat(y, n),
                      [&](const Point& x) { return 20.0 * std::pow(yb(x), 7.0 / 3.0); }) < 0.1);
}

TEST_CASE("tensorial Q on the round sphere") {
  const auto s6 = round_sphere_curvature(6);
  CHECK(s6.scalar == Rational(30));
  CHECK(s6.scalar_laplacian == Rational(0));
  CHECK(s6.ricci_norm_sq == Rational(150));
  CHECK(q_curvature_tensorial(s6, 6, QFormulaMode::as_printed) == Rational(21, 4));
  CHECK(q_curvature_tensorial(s6, 6, QFormulaMode::covariance_consistent) == Rational(24));
  for (int n = 5; n <= 10; ++n) {
    const Rational q = q_curvature_tensorial(round_sphere_curvature(n), n, QFormulaMode::covariance_consistent);
    CHECK(static_cast<double>(q) == doctest::Approx(bubble_constant(n)));
  }
  const CurvatureData flat{};
  CHECK(q_curvature_tensorial(flat, 6, QFormulaMode::as_printed) == 0.0);
  CHECK(q_curvature_tensorial(flat, 6, QFormulaMode::covariance_consistent) == 0.0);
}

TEST_CASE("tensorial Q matches the flat-background formula on a radial metric") {
  // A non-bubble radial factor; the oracle computes R, Delta R, |Ric|^2 from
  // the conformal-change formulas.
  for (int n : {5, 6, 7}) {
    auto profile = [](long double r0) {
      const auto r = oracle::Series::radius(r0);
      return oracle::Series::constant(1) +
             0.5L * (oracle::Series::constant(1) + r * r).reciprocal();
    };
    for (double r : {0.4, 1.0, 1.7}) {
      const auto cc = oracle::conformal_curvature(profile, n, r);
      const CurvatureData data{static_cast<double>(cc.scalar), static_cast<double>(cc.scalar_laplacian),
                               static_cast<double>(cc.ricci_norm_sq)};
      const double consistent = q_curvature_tensorial(data, n, QFormulaMode::covariance_consistent);
      const double printed = q_curvature_tensorial(data, n, QFormulaMode::as_printed);
      CHECK(consistent == doctest::Approx(static_cast<double>(cc.q_flat)).epsilon(1e-8));
      CHECK(std::abs(printed - static_cast<double>(cc.q_flat)) > 1e-6);
    }
  }
  // The oracle itself reproduces the round sphere through the bubble.
  auto bubble = [](long double r0) { return oracle::bubble_series(6, 1, r0); };
  const auto cc = oracle::conformal_curvature(bubble, 6, 0.7);
  CHECK(static_cast<double>(cc.scalar) == doctest::Approx(30.0));
  CHECK(static_cast<double>(cc.ricci_norm_sq) == doctest::Approx(150.0));
  CHECK(static_cast<double>(cc.q_flat) == doctest::Approx(24.0));
}

TEST_CASE("radial operators") {
  const int n = 6;
  const auto e = exponents(n);
  const Bubble u = Bubble::standard(n);
  // h = 0.01 keeps the h^4 truncation and the eps/h^4 roundoff both small.
  const RadialField v = RadialField::sample(RadialField::uniform_radii(8.0, 801), [&](double r) { return u.radial_value(r); });
  const RadialField b = radial_bilaplacian(v, n);
  CHECK(b.invalid_tail() == 4);
  for (std::size_t i = 0; i <= 300; i += 7) {
    const double exact = bubble_constant(n) * std::pow(v.value(i), e.nonlinearity);
    CHECK(b.value(i) == doctest::Approx(exact).epsilon(1e-5));
  }
  CHECK(b.value(0) == doctest::Approx(768.0).epsilon(1e-5));
  CHECK(radial_laplacian(v, n).value(0) == doctest::Approx(-24.0).epsilon(1e-6));
  const RadialField q = radial_q_curvature(v, e);
  CHECK(q.value(0) == doctest::Approx(24.0).epsilon(1e-6));
  CHECK(q.value(200) == doctest::Approx(24.0).epsilon(1e-4));
}

TEST_CASE("paneitz functional") {
  const int n = 6;
  const auto e = exponents(n);
  const double sphere_volume = 16 * std::pow(std::numbers::pi, 3) / 15;
  CHECK(unit_sphere_area(6) == doctest::Approx(sphere_volume));
  const double target = 24.0 * std::pow(sphere_volume, 2.0 / 3.0);

  const Bubble u = Bubble::unit_q(n, 1.0, Point::Zero(n));
  const RadialField v = RadialField::sample(RadialField::uniform_radii(2000.0, 40001), [&](double r) { return u.radial_value(r); });
  CHECK(paneitz_functional(v, e) == doctest::Approx(target).epsilon(1e-3));

  const RadialField one = RadialField::sample(RadialField::uniform_radii(3.0, 301), [](double) { return 1.0; });
  CHECK(paneitz_functional(one, e) == doctest::Approx(0.0).scale(1.0));

  // Q == 1 with weights summing to |Omega| gives |Omega|^{4/n}.
  std::vector<double> ones(10, 1.0), w(10, 0.3);
  CHECK(paneitz_quotient(ones, ones, w, n) == doctest::Approx(std::pow(3.0, 4.0 / 6.0)));
  std::vector<double> zeros(10, 0.0);
  CHECK(code_of([&] { paneitz_quotient(ones, zeros, w, n); }) == ErrorCode::zero_volume);
}

TEST_CASE("cube shell fraction") {
  const CubeShellFraction frac(6, 1.0, 50000);
  CHECK(frac(0.5) == 1.0);
  CHECK(frac(1.0) == doctest::Approx(1.0));
  CHECK(frac(std::sqrt(6.0) + 1e-9) == 0.0);
  CHECK(frac(1.5) < 1.0);
  CHECK(frac(1.5) > frac(2.0));
}

TEST_CASE("grid serialisation round trip") {
  const GridField f = GridField::sample(3, -1, 2, 5, [](const Point& x) { return std::sin(x[0]) + x[1] * x[2]; });
  const GridField lap = laplacian(f);
  std::stringstream csv, bin;
  lap.write_csv(csv);
  lap.write_binary(bin);
  const GridField a = GridField::read_csv(lap.header(), csv);
  const GridField b = GridField::read_binary(lap.header(), bin);
  for (std::size_t i = 0; i < lap.size(); ++i) {
    if (std::isnan(lap[i])) {
      CHECK(std::isnan(a[i]));
      CHECK(std::isnan(b[i]));
    } else {
      CHECK(a[i] == lap[i]);
      CHECK(b[i] == lap[i]);
    }
  }
  CHECK(a.boundary_margin() == 2);
  CHECK(code_of([] { GridField(6, -1, 1, 30); }) == ErrorCode::grid_too_large);
}
