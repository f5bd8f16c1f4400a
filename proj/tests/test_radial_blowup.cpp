#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "qlab/error.hpp"
#include "qlab/radial_blowup.hpp"
#include "qlab/sampling.hpp"
#include "qlab/stereographic.hpp"

using namespace qlab;

TEST_CASE("gauss gegenbauer moments") {
  // int t^{2j} (1-t^2)^{lambda-1/2} dt = B(j+1/2, lambda+1/2).
  for (double lambda : {0.5, 1.0, 1.5, 2.0}) {
    const GaussRule g = gauss_gegenbauer(6, lambda);
    for (int j = 0; j < 6; ++j) {
      double acc = 0.0, odd = 0.0;
      for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        acc += g.weights[i] * std::pow(g.nodes[i], 2 * j);
        odd += g.weights[i] * std::pow(g.nodes[i], 2 * j + 1);
      }
      const double beta = std::tgamma(j + 0.5) * std::tgamma(lambda + 0.5) / std::tgamma(j + lambda + 1.0);
      CHECK(acc == doctest::Approx(beta).epsilon(1e-12));
      CHECK(odd == doctest::Approx(0.0).scale(1.0));
    }
  }
}

TEST_CASE("spherical averages of polynomials") {
  for (int n : {3, 5, 6, 8}) {
    const SphericalRule rule(n);
    CHECK(rule.is_product_rule() == (n <= 6));
    Point c = Point::Zero(n);
    c[0] = 0.3;
    c[n - 1] = -0.7;
    const std::vector<double> radii{0.0, 0.5, 1.0, 2.5};
    const auto constant = spherical_average([](const Point&) { return 4.0; }, c, radii, rule);
    const auto linear = spherical_average([](const Point& x) { return 1.0 + 2.0 * x[0] - x[1]; }, c, radii, rule);
    const auto square = spherical_average([&](const Point& x) { return (x - c).squaredNorm(); }, c, radii, rule);
    for (std::size_t i = 0; i < radii.size(); ++i) {
      CHECK(constant.value(i) == doctest::Approx(4.0).epsilon(1e-11));
      CHECK(linear.value(i) == doctest::Approx(1.0 + 2.0 * c[0] - c[1]).epsilon(1e-12));
      CHECK(square.value(i) == doctest::Approx(radii[i] * radii[i]).epsilon(1e-11).scale(1e-12));
    }
    if (rule.is_product_rule()) {
      // Average of y_1^4 over the unit sphere is 3 / (n (n + 2)).
      const auto quartic = spherical_average([&](const Point& x) { return std::pow(x[1] - c[1], 4); }, c, {0.0, 2.0}, rule);
      CHECK(quartic.value(1) == doctest::Approx(16.0 * 3.0 / (n * (n + 2))).epsilon(1e-12));
    }
  }
}

TEST_CASE("spherical averages on grids") {
  const int n = 3;
  const GridField f = GridField::sample(n, -1, 1, 21, [](const Point& x) { return 2.0 - x[0] + 0.5 * x[2]; });
  const SphericalRule rule(n);
  const Point c = Point::Constant(n, 0.1);
  const auto avg = spherical_average(f, c, {0.0, 0.3, 0.8}, rule);
  for (std::size_t i = 0; i < 3; ++i) CHECK(avg.value(i) == doctest::Approx(2.0 - 0.1 + 0.05).epsilon(1e-12));
  try {
    spherical_average(f, c, {1.0}, rule);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::sphere_exits_domain);
  }
}

TEST_CASE("radial system with zero source") {
  for (int n : {5, 6, 9}) {
    const auto radii = RadialField::uniform_radii(3.0, 301);
    const auto st = integrate_radial_system(0.0, -1.0, RadialField(radii, std::vector<double>(radii.size(), 0.0)), n);
    for (std::size_t i = 0; i < radii.size(); ++i) {
      CHECK(st.u_bar.value(i) == -1.0);
      CHECK(st.w_bar.value(i) == doctest::Approx(radii[i] * radii[i] / (2.0 * n)).epsilon(1e-13).scale(1e-15));
    }
  }
  const auto radii = RadialField::uniform_radii(1.0, 11);
  std::vector<double> bad(radii.size(), 1.0);
  bad[3] = -0.5;
  CHECK_THROWS_AS(integrate_radial_system(0.0, -1.0, RadialField(radii, bad), 5), Error);
}

TEST_CASE("radial system reproduces the bubble") {
  const int n = 6;
  const Bubble u = Bubble::standard(n);
  const auto radii = RadialField::uniform_radii(5.0, 4001);
  const auto source = RadialField::sample(radii, [&](double r) { return bubble_constant(n) * std::pow(u.radial_value(r), 5.0); });
  const auto st = integrate_radial_system(u.radial_value(0), -u.radial_laplacian(0), source, n);
  double worst_w = 0, worst_u = 0;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    worst_w = std::max(worst_w, std::abs(st.w_bar.value(i) - u.radial_value(radii[i])));
    worst_u = std::max(worst_u, std::abs(st.u_bar.value(i) + u.radial_laplacian(radii[i])));
  }
  CHECK(worst_w < 3e-5);
  CHECK(worst_u < 1e-4);
}

TEST_CASE("one Jensen step against the closed form") {
  const int n = 5;
  const double q = 9.0, c0 = 0.1;
  auto run = [&](std::size_t m) {
    const auto radii = RadialField::uniform_radii(2.0, m);
    const auto source = RadialField::sample(radii, [&](double r) { return std::pow(c0 * r * r, q); });
    const auto st = integrate_radial_system(0.0, -1.0, source, n);
    double worst = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double r = radii[i];
      const double u = -1.0 - std::pow(c0, q) * std::pow(r, 2 * q + 2) / ((n + 2 * q) * (2 * q + 2));
      const double w = r * r / (2.0 * n) +
                       std::pow(c0, q) * std::pow(r, 2 * q + 4) / ((n + 2 * q) * (2 * q + 2) * (n + 2 * q + 2) * (2 * q + 4));
      worst = std::max(worst, std::abs(st.u_bar.value(i) - u) / std::abs(u) + std::abs(st.w_bar.value(i) - w) / std::max(w, 1e-300));
    }
    return worst;
  };
  const double coarse = run(201), fine = run(401);
  CHECK(fine < 1e-3);
  CHECK(coarse / fine > 3.5);  // second order
}

TEST_CASE("sigma sequence") {
  const auto s5 = sigma_sequence(5, 2);
  CHECK(s5[0] == Rational(2));
  CHECK(s5[1] == Rational(22));
  CHECK(s5[2] == Rational(202));
  const auto s8 = sigma_sequence(8, 2);
  CHECK(s8[1] == Rational(10));
  CHECK(s8[2] == Rational(34));
  for (int n = 5; n <= 10; ++n) {
    const auto s = sigma_sequence(n, 20);
    for (int k = 0; k <= 20; ++k) CHECK(s[static_cast<std::size_t>(k)] == sigma_closed_form(n, k));
  }
}

TEST_CASE("iteration certificate") {
  const int n = 5;
  const double u0 = -1.0, q = 9.0, c0 = 0.1;
  const auto cert = iterate_lower_bounds(n, u0, 20, RadialField::uniform_radii(10.0, 101));
  const auto& e1 = cert.entries[1];
  const double s1 = 2 * q + 4;
  CHECK(std::exp(e1.log_chain_coefficient) ==
        doctest::Approx(std::pow(c0, q) / ((n + 2 * q) * (2 * q + 2) * (n + 2 + 2 * q) * (2 * q + 4))).epsilon(1e-12));
  CHECK(std::exp(e1.log_coefficient) == doctest::Approx(std::pow(c0, q) / std::pow(n + s1, 4)).epsilon(1e-12));
  const double s2 = q * s1 + 4;
  const double direct2 = std::pow(c0, q * q) / (std::pow(n + s1, 4 * q) * std::pow(n + s2, 4));
  CHECK(std::exp(cert.entries[2].log_coefficient) == doctest::Approx(direct2).epsilon(1e-12));

  for (int k = 0; k <= 20; ++k) {
    const auto& e = cert.entries[static_cast<std::size_t>(k)];
    CHECK(e.log_chain_coefficient >= e.log_coefficient);
    for (double r : {0.5, 1.0, 7.0, 50.0}) CHECK(cert.log_collapsed_bound(k, r) <= cert.log_bound(k, r) + 1e-9 * std::abs(cert.log_bound(k, r)));
  }
  REQUIRE(cert.divergence_grid_radius.has_value());
  CHECK(*cert.divergence_grid_radius >= cert.divergence_radius);
  CHECK(*cert.divergence_grid_radius < cert.divergence_radius + 0.1 + 1e-12);
  const double r = *cert.divergence_grid_radius;
  for (int k = 1; k <= 20; ++k) CHECK(cert.log_collapsed_bound(k, r) > cert.log_collapsed_bound(k - 1, r));
  CHECK_THROWS_AS(iterate_lower_bounds(n, 0.5, 3), Error);
}

TEST_CASE("simulation respects the certificate") {
  const int n = 5;
  const auto radii = RadialField::uniform_radii(3.0, 601);
  const auto chain = simulate_lower_bound_chain(n, -1.0, 0.0, radii, 3);
  const auto cert = iterate_lower_bounds(n, -1.0, 3);
  for (int k = 0; k <= 3; ++k) {
    const auto& st = chain[static_cast<std::size_t>(k)];
    for (std::size_t i = 1; i < radii.size(); ++i) {
      CHECK(st.w_bar.value(i) >= radii[i] * radii[i] / 10.0 * (1 - 1e-12));
      CHECK(st.u_bar.value(i) <= st.u_bar.value(i - 1));
      CHECK(std::log(st.w_bar.value(i)) >= cert.log_bound(k, radii[i]) - 1e-12);
    }
  }
}

TEST_CASE("jensen") {
  const std::vector<double> constant(10, 3.0);
  const auto c = jensen_check(constant, 2.5);
  CHECK(c.holds);
  CHECK(c.slack == doctest::Approx(0.0).scale(1e-10));
  const std::vector<double> two{0.0, 2.0};
  const auto t = jensen_check(two, 2.0);
  CHECK(t.holds);
  CHECK(t.slack == doctest::Approx(1.0));
  const CounterRng rng(12);
  int violations = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const std::size_t count = 1 + (s % 50);
    std::vector<double> w(count);
    for (std::size_t i = 0; i < count; ++i) w[i] = std::pow(rng.uniform(s, static_cast<std::uint32_t>(i)), 3) * 10.0;
    const double q = 1.0 + 8.0 * rng.uniform(s, 999);
    if (!jensen_check(w, q).holds) ++violations;
  }
  CHECK(violations == 0);
  const std::vector<double> neg{1.0, -1.0};
  CHECK_THROWS_AS(jensen_check(neg, 2.0), Error);
}
