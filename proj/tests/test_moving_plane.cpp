#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>

#include "oracles.hpp"
#include "qlab/conformal_ops.hpp"
#include "qlab/error.hpp"
#include "qlab/mobius.hpp"
#include "qlab/moving_plane.hpp"
#include "qlab/stereographic.hpp"

using namespace qlab;

namespace {

SchottkyGroup golden_group() {
  std::ifstream in(QLAB_TEST_DATA "/schottky_golden.json");
  return SchottkyGroup::from_json(nlohmann::json::parse(in));
}

Point axis_point(int n, double c) {
  Point x = Point::Zero(n);
  x[n - 1] = c;
  return x;
}

ValueFn minus_laplacian(const Field& v) {
  return [&v](const Point& x) { return -v.laplacian(x); };
}

double max_excursion(const std::vector<Point>& path, const Sphere& ball) {
  double m = 0;
  for (const auto& x : path) m = std::max(m, (x - ball.center).norm() / ball.radius);
  return m;
}

// Pairs no farther apart than max_gap on the unit sphere.
std::vector<std::pair<Point, Point>> boundary_pairs(const Sphere& ball, int count, double max_gap) {
  const CounterRng rng(77, 3);
  const int n = static_cast<int>(ball.center.size());
  std::vector<std::pair<Point, Point>> out;
  for (std::uint64_t i = 0; static_cast<int>(out.size()) < count; ++i) {
    const Point u = rng.on_sphere(2 * i, n), w = rng.on_sphere(2 * i + 1, n);
    if ((u + w).norm() < 0.3 || (u - w).norm() > max_gap) continue;
    out.emplace_back(ball.center + ball.radius * u, ball.center + ball.radius * w);
  }
  return out;
}

}  // namespace

TEST_CASE("reflection is an involution and maps derivatives") {
  const Point x = (Point(5) << 0.3, -1.0, 2.0, 0.5, 1.7).finished();
  CHECK((reflect(reflect(x, 0.4, 4), 0.4, 4) - x).norm() == doctest::Approx(0.0));
  CHECK(reflect(x, 0.4, 4)[4] == doctest::Approx(-0.9));

  auto b = std::make_shared<Bubble>(5, 1.3, axis_point(5, 0.2));
  const auto r = reflect_field(b, 0.7, 4);
  const Point xr = reflect(x, 0.7, 4);
  CHECK(r->value(x) == doctest::Approx(b->value(xr)).epsilon(1e-14));
  const Point g = r->gradient(x), fd = stencil_gradient([&](const Point& y) { return r->value(y); }, x, 1e-3);
  CHECK((g - fd).norm() < 1e-8 * g.norm());
  CHECK(r->bilaplacian(x) == doctest::Approx(b->bilaplacian(xr)).epsilon(1e-12));
}

TEST_CASE("reflected system residual equals the reflected residual node for node") {
  const int n = 5;
  const auto exp = exponents(n);
  const Bubble b(n, 1.0, (Point(n) << 0.2, -0.1, 0.0, 0.3, 0.4).finished());
  const GridField v = GridField::sample(n, -1.5, 1.5, 11, [&](const Point& x) { return b.value(x); });
  auto residual = [&](const GridField& f) {
    GridField res = bilaplacian(f);
    for (auto i : res.valid_indices()) res[i] -= b.equation_constant() * std::pow(f[i], exp.nonlinearity);
    return res;
  };
  for (int axis : {0, 4}) {
    const GridField lhs = residual(reflect_field(v, axis));
    const GridField rhs = reflect_field(residual(v), axis);
    double scale = 0;
    for (auto i : rhs.valid_indices()) scale = std::max(scale, std::abs(rhs[i]));
    for (auto i : lhs.valid_indices()) REQUIRE(std::abs(lhs[i] - rhs[i]) <= 1e-12 * scale);
  }
}

TEST_CASE("a bubble's moving plane stops at its centre") {
  const int n = 6;
  for (double c : {-1.0, 0.0, 2.0}) {
    const Bubble b(n, 1.0, axis_point(n, c));
    MovingPlaneOptions o;
    o.samples = 2048;
    const auto rep = find_lambda_star(b, minus_laplacian(b), {}, o);
    CHECK(std::abs(rep.lambda_star - c) < 1e-3);
    CHECK(rep.symmetric);
    CHECK(rep.derivative_sign_ok);
    CHECK_FALSE(rep.reached_bottom);
    CHECK(rep.lambda_star <= rep.lambda_start);
  }
}

TEST_CASE("lambda star is translation equivariant") {
  const int n = 5;
  Point c = (Point(n) << 0.4, -0.2, 0.1, 0.3, -0.6).finished();
  const Bubble b(n, 1.7, c);
  Point shift = (Point(n) << 1.0, 0.5, -0.3, 0.2, 0.7).finished();
  const Bubble bs(n, 1.7, c + shift);
  MovingPlaneOptions o;
  o.samples = 2048;
  const double l0 = find_lambda_star(b, minus_laplacian(b), {}, o).lambda_star;
  const double l1 = find_lambda_star(bs, minus_laplacian(bs), {}, o).lambda_star;
  CHECK(std::abs(l1 - l0 - 0.7) < 1e-3);
}

TEST_CASE("scan fails loudly when the top plane already fails") {
  const Bubble b(6, 1.0, axis_point(6, 2.0));
  MovingPlaneOptions o;
  o.lambda_top = 1.0;
  o.samples = 512;
  try {
    find_lambda_star(b, minus_laplacian(b), {}, o);
    FAIL("expected scan-exhausted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::scan_exhausted);
  }
}

TEST_CASE("far-field fit recovers translated bubbles") {
  for (int n : {5, 6, 7}) {
    Point c = Point::Zero(n);
    c[0] = 0.5;
    c[1] = -0.3;
    c[n - 1] = 0.4;
    const Bubble b(n, 0.8, c);
    const auto fit = fit_far_field([&](const Point& x) { return b.value(x); }, n, 1e2, 1e3);
    const auto exact = bubble_expansion(n, 0.8, c);
    CHECK(std::abs(fit.a0 - exact.a0) < 1e-2 * exact.a0);
    CHECK((fit.a - exact.a).norm() < 1e-2 * exact.a.norm());
    CHECK(fit.residual < 1e-6);
    CHECK(fit.condition < 1e6);
  }
}

TEST_CASE("bubble expansion matches the bubble at large radius") {
  const int n = 6;
  const Point c = (Point(n) << 0.3, 0.1, -0.4, 0.0, 0.2, 0.5).finished();
  const Bubble b(n, 1.2, c);
  const auto e = bubble_expansion(n, 1.2, c);
  const CounterRng rng(5);
  for (std::uint64_t i = 0; i < 20; ++i) {
    const Point x = 200.0 * rng.on_sphere(i, n);
    CHECK(std::abs(e.value(x) / b.value(x) - 1.0) < 1e-5);
  }
}

TEST_CASE("far-field fit errors") {
  const Bubble b(6, 1.0, Point::Zero(6));
  try {
    fit_far_field([&](const Point& x) { return -b.value(x); }, 6, 1e2, 1e3);
    FAIL("expected nonpositive-leading-coefficient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::nonpositive_leading_coefficient);
  }
  try {
    fit_far_field([&](const Point& x) { return b.value(x); }, 6, 1e2, 1e2 * (1 + 1e-14));
    FAIL("expected ill-conditioned-fit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ill_conditioned_fit);
  }
}

TEST_CASE("asymptotic sign region holds for bubbles and is centred at the bubble") {
  for (double c : {-1.0, 0.0, 1.5}) {
    const int n = 6;
    Point ctr = axis_point(n, c);
    ctr[0] = 0.7;
    const Bubble b(n, 0.9, ctr);
    const auto fit = fit_far_field([&](const Point& x) { return b.value(x); }, n, 1e2, 1e3);
    const auto region = asymptotic_sign_region(b, fit);
    CHECK(region.violations == 0);
    CHECK(std::abs(region.offset - c) < 1e-3);
    CHECK(region.c1 >= fit.inner_radius);
    Point inside = axis_point(n, std::abs(region.offset) + 2 * region.c0 / region.c1 + region.c1);
    CHECK(region.contains(inside));
    CHECK_FALSE(region.contains(axis_point(n, -region.c1)));
  }
}

TEST_CASE("automorphic bubble sum has lambda star at or below zero") {
  const SchottkyGroup g = golden_group();
  const BubbleSum v(Bubble::standard(6), g, 3);
  MovingPlaneOptions o;
  o.lambda_top = 3.0;
  o.lambda_bottom = -3.0;
  o.samples = 1024;
  o.plane_samples = 64;
  o.epsilon = 0.05;
  const auto rep = find_lambda_star(v, minus_laplacian(v), g.spheres(), o);
  CHECK(rep.lambda_star <= 1e-3);
  CHECK(rep.derivative_sign_ok);
}

TEST_CASE("small balls are convex and large bubble balls concave") {
  const int n = 6;
  const auto exp = exponents(n);
  const Bubble b = Bubble::standard(n);

  const Sphere small{(Point(n) << 0.3, 0.0, 0.1, 0.0, 0.0, 0.2).finished(), 0.2};
  const auto cs = ball_convexity(b, small, exp);
  CHECK(cs.verdict == Convexity::convex);
  CHECK(cs.diagnostics_agree);
  CHECK_FALSE(cs.marginal);

  for (double k : {10.0, 20.0}) {
    const auto cr = ball_convexity(b, Sphere{Point::Zero(n), k}, exp);
    CHECK(cr.verdict == Convexity::concave);
    CHECK(cr.diagnostics_agree);
    // Umbilic boundary with mean curvature proportional to 1 - K^2.
    const double h = std::pow(b.value(axis_point(n, k)), -exp.metric / 2) * (n - 1) * (1 - k * k) / (k * (1 + k * k));
    CHECK(cr.mean_curvature.front() == doctest::Approx(h).epsilon(1e-10));
  }

  const FunctionField one(n, [](const Point&) { return 1.0; });
  const auto cm = ball_convexity(one, Sphere{Point::Zero(n), 3.0}, exp);
  CHECK(cm.marginal);
  CHECK(cm.verdict == Convexity::convex);
  CHECK(cm.mean_curvature.front() == doctest::Approx((n - 1) / 3.0));
}

TEST_CASE("geodesic shooting agrees with the convexity verdict") {
  const int n = 6;
  const Bubble b = Bubble::standard(n);
  const oracle::Geodesic geo{b};

  const Sphere small{(Point(n) << 0.3, 0.0, 0.1, 0.0, 0.0, 0.2).finished(), 0.2};
  for (const auto& [p, q] : boundary_pairs(small, 20, 2.0)) CHECK(max_excursion(geo.connect(p, q), small) <= 1.0 + 1e-9);

  const Sphere large{Point::Zero(n), 10.0};
  for (const auto& [p, q] : boundary_pairs(large, 20, 0.8)) CHECK(max_excursion(geo.connect(p, q), large) > 1.0 + 1e-6);
}

TEST_CASE("boundary outside the field's domain") {
  const FunctionField f(5, [](const Point& x) {
    if (x.norm() > 1.0) throw Error(ErrorCode::point_outside_domain, "outside");
    return 1.0;
  });
  try {
    ball_convexity(f, Sphere{Point::Zero(5), 2.0}, exponents(5));
    FAIL("expected boundary-outside-domain");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::boundary_outside_domain);
  }
}
