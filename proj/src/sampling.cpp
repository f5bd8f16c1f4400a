#include "qlab/sampling.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "qlab/error.hpp"

namespace qlab {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::array<int, 16> kPrimes = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

}  // namespace

std::uint64_t CounterRng::bits(std::uint64_t index, std::uint32_t lane) const {
  std::uint64_t h = mix64(seed_);
  h = mix64(h ^ stream_);
  h = mix64(h ^ index);
  return mix64(h ^ lane);
}

double CounterRng::uniform(std::uint64_t index, std::uint32_t lane) const {
  return (static_cast<double>(bits(index, lane) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t index, std::uint32_t lane) const {
  const double u1 = uniform(index, 2 * lane);
  const double u2 = uniform(index, 2 * lane + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Point CounterRng::on_sphere(std::uint64_t index, int dim) const {
  Point p(dim);
  for (;;) {
    for (int i = 0; i < dim; ++i) p[i] = normal(index, static_cast<std::uint32_t>(i));
    const double norm = p.norm();
    if (norm > 1e-300) return p / norm;
    index ^= 0x5bd1e995ULL;
  }
}

Point CounterRng::in_ball(std::uint64_t index, int dim, double radius) const {
  const double u = uniform(index, 1000);
  return on_sphere(index, dim) * (radius * std::pow(u, 1.0 / dim));
}

Point halton(std::uint64_t index, int dim) {
  if (dim > static_cast<int>(kPrimes.size())) {
    throw Error(ErrorCode::invalid_argument, "halton: dimension above 16");
  }
  Point p(dim);
  for (int d = 0; d < dim; ++d) {
    const int base = kPrimes[static_cast<std::size_t>(d)];
    double f = 1.0;
    double r = 0.0;
    std::uint64_t i = index + 1;
    while (i > 0) {
      f /= base;
      r += f * static_cast<double>(i % base);
      i /= base;
    }
    p[d] = r;
  }
  return p;
}

double unit_sphere_area(int k) {
  const double m = (k + 1) / 2.0;
  return 2.0 * std::pow(std::numbers::pi, m) / std::tgamma(m);
}

}  // namespace qlab
