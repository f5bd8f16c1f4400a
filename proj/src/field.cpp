#include "qlab/field.hpp"

namespace qlab {

namespace {

// f'' ~ (-f(-2) + 16 f(-1) - 30 f(0) + 16 f(1) - f(2)) / (12 h^2)
constexpr double kD2[5] = {-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0};
// f' ~ (f(-2) - 8 f(-1) + 8 f(1) - f(2)) / (12 h)
constexpr double kD1[5] = {1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0};

}  // namespace

double stencil_laplacian(const ValueFn& f, const Point& x, double h) {
  const double center = f(x);
  double acc = 0.0;
  Point y = x;
  for (int axis = 0; axis < x.size(); ++axis) {
    double s = kD2[2] * center;
    for (int k = -2; k <= 2; ++k) {
      if (k == 0) continue;
      y[axis] = x[axis] + k * h;
      s += kD2[k + 2] * f(y);
    }
    y[axis] = x[axis];
    acc += s;
  }
  return acc / (h * h);
}

double stencil_bilaplacian(const ValueFn& f, const Point& x, double h) {
  const ValueFn lap = [&](const Point& p) { return stencil_laplacian(f, p, h); };
  return stencil_laplacian(lap, x, h);
}

Point stencil_gradient(const ValueFn& f, const Point& x, double h) {
  Point g(x.size());
  Point y = x;
  for (int axis = 0; axis < x.size(); ++axis) {
    double s = 0.0;
    for (int k = -2; k <= 2; ++k) {
      if (k == 0) continue;
      y[axis] = x[axis] + k * h;
      s += kD1[k + 2] * f(y);
    }
    y[axis] = x[axis];
    g[axis] = s / h;
  }
  return g;
}

Point Field::gradient(const Point& x) const {
  return stencil_gradient([this](const Point& p) { return value(p); }, x, fd_step_);
}

double Field::laplacian(const Point& x) const {
  return stencil_laplacian([this](const Point& p) { return value(p); }, x, fd_step_);
}

Point Field::laplacian_gradient(const Point& x) const {
  return stencil_gradient([this](const Point& p) { return laplacian(p); }, x, fd_step_);
}

double Field::bilaplacian(const Point& x) const {
  return stencil_laplacian([this](const Point& p) { return laplacian(p); }, x, fd_step_);
}

}  // namespace qlab
