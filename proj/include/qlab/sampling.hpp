#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace qlab {

using Point = Eigen::VectorXd;

/// Counter-based random numbers: every draw is a pure function of
/// (seed, stream, index, lane), so a sample can be regenerated in any order
/// and on any thread.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t bits(std::uint64_t index, std::uint32_t lane) const;
  /// Uniform in the open interval (0, 1).
  double uniform(std::uint64_t index, std::uint32_t lane) const;
  double normal(std::uint64_t index, std::uint32_t lane) const;

  /// Uniform on the unit sphere S^{dim-1} in R^dim.
  Point on_sphere(std::uint64_t index, int dim) const;
  /// Uniform in the ball of the given radius in R^dim.
  Point in_ball(std::uint64_t index, int dim, double radius) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// Radical-inverse (Halton) point with coordinates in [0,1)^dim; index 0 is
/// skipped internally so the origin never appears.
Point halton(std::uint64_t index, int dim);

/// |S^{k}|, the area of the unit k-sphere in R^{k+1}.
double unit_sphere_area(int k);

}  // namespace qlab
