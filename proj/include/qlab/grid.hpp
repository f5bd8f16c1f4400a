#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "qlab/field.hpp"

namespace qlab {

/// Scalar values on the uniform Cartesian grid [lo, hi]^n with m nodes per
/// axis. Nodes closer than boundary_margin() to any face are invalid: the
/// operators that produced them had no full stencil there and store NaN.
class GridField {
 public:
  /// Upper bound on m^n; larger grids are rejected with grid-too-large.
  static constexpr std::size_t kMaxNodes = std::size_t{1} << 26;

  GridField(int n, double lo, double hi, int m, int boundary_margin = 0);

  static GridField sample(int n, double lo, double hi, int m, const ValueFn& fn);

  int dim() const { return n_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  int nodes_per_axis() const { return m_; }
  double spacing() const { return h_; }
  int boundary_margin() const { return margin_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t flat) { return values_[flat]; }
  double operator[](std::size_t flat) const { return values_[flat]; }

  /// Stride of one step along `axis` in the row-major flat index.
  std::size_t stride(int axis) const { return strides_[static_cast<std::size_t>(axis)]; }
  std::vector<int> multi_index(std::size_t flat) const;
  std::size_t flat_index(std::span<const int> idx) const;
  Point coordinate(std::size_t flat) const;
  /// True when every index lies in [margin, m - 1 - margin].
  bool is_interior(std::size_t flat, int margin) const;
  bool is_valid(std::size_t flat) const { return is_interior(flat, margin_); }
  std::vector<std::size_t> interior_indices(int margin) const;
  std::vector<std::size_t> valid_indices() const { return interior_indices(margin_); }

  /// Same geometry, values replaced by NaN and margin raised to `margin`.
  GridField like(int margin) const;

  nlohmann::json header() const;
  void write_csv(std::ostream& out) const;
  void write_binary(std::ostream& out) const;
  static GridField read_csv(const nlohmann::json& header, std::istream& in);
  static GridField read_binary(const nlohmann::json& header, std::istream& in);

 private:
  int n_;
  double lo_;
  double hi_;
  int m_;
  double h_;
  int margin_;
  std::vector<std::size_t> strides_;
  std::vector<double> values_;
};

/// Values on a strictly increasing radius grid starting at r = 0.
class RadialField {
 public:
  RadialField(std::vector<double> radii, std::vector<double> values);

  /// m equally spaced radii on [0, r_max].
  static std::vector<double> uniform_radii(double r_max, std::size_t m);
  static RadialField sample(std::vector<double> radii, const std::function<double(double)>& fn);

  std::size_t size() const { return radii_.size(); }
  const std::vector<double>& radii() const { return radii_; }
  const std::vector<double>& values() const { return values_; }
  double radius(std::size_t i) const { return radii_[i]; }
  double value(std::size_t i) const { return values_[i]; }
  /// Spacing when the grid is uniform, 0 otherwise.
  double uniform_spacing() const;
  /// Number of trailing nodes holding NaN (no full stencil).
  std::size_t invalid_tail() const;

  nlohmann::json header() const;
  void write_csv(std::ostream& out) const;
  static RadialField read_csv(std::istream& in);

 private:
  std::vector<double> radii_;
  std::vector<double> values_;
};

}  // namespace qlab
