#pragma once

#include <functional>
#include <memory>

#include "qlab/sampling.hpp"

namespace qlab {

/// A smooth scalar field on (a region of) R^n. Closed-form fields override
/// the derivative hooks; everything else falls back to 4th-order central
/// differences with step fd_step().
class Field {
 public:
  explicit Field(int dim, double fd_step = 1e-2) : dim_(dim), fd_step_(fd_step) {}
  virtual ~Field() = default;

  int dim() const { return dim_; }
  double fd_step() const { return fd_step_; }

  virtual double value(const Point& x) const = 0;
  virtual Point gradient(const Point& x) const;
  virtual double laplacian(const Point& x) const;
  /// Gradient of the Laplacian.
  virtual Point laplacian_gradient(const Point& x) const;
  /// (-Delta)^2 at x.
  virtual double bilaplacian(const Point& x) const;

 protected:
  void set_fd_step(double h) { fd_step_ = h; }

 private:
  int dim_;
  double fd_step_;
};

using FieldPtr = std::shared_ptr<const Field>;
using ValueFn = std::function<double(const Point&)>;

/// Wraps a value callback; all derivatives by finite differences.
class FunctionField final : public Field {
 public:
  FunctionField(int dim, ValueFn fn, double fd_step = 1e-2)
      : Field(dim, fd_step), fn_(std::move(fn)) {}
  double value(const Point& x) const override { return fn_(x); }

 private:
  ValueFn fn_;
};

/// 4th-order central-difference stencils evaluated pointwise. These are the
/// same coefficients GridField operators use, so probing a closed-form field
/// at a grid node reproduces the grid result without materialising the grid.
double stencil_laplacian(const ValueFn& f, const Point& x, double h);
double stencil_bilaplacian(const ValueFn& f, const Point& x, double h);
Point stencil_gradient(const ValueFn& f, const Point& x, double h);

}  // namespace qlab
