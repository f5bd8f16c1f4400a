#include "qlab/grid.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "qlab/error.hpp"
#include "qlab/parallel.hpp"

namespace qlab {

GridField::GridField(int n, double lo, double hi, int m, int boundary_margin)
    : n_(n), lo_(lo), hi_(hi), m_(m), h_(0.0), margin_(boundary_margin) {
  if (n < 1) throw Error(ErrorCode::invalid_argument, "grid dimension must be positive");
  if (m < 2 || !(hi > lo)) throw Error(ErrorCode::grid_too_small, "need m >= 2 and hi > lo");
  h_ = (hi - lo) / (m - 1);
  strides_.assign(static_cast<std::size_t>(n), 1);
  std::size_t total = 1;
  for (int axis = n - 1; axis >= 0; --axis) {
    strides_[static_cast<std::size_t>(axis)] = total;
    if (total > kMaxNodes / static_cast<std::size_t>(m)) {
      throw Error(ErrorCode::grid_too_large, std::to_string(m) + "^" + std::to_string(n) + " nodes");
    }
    total *= static_cast<std::size_t>(m);
  }
  values_.assign(total, 0.0);
}

GridField GridField::sample(int n, double lo, double hi, int m, const ValueFn& fn) {
  GridField g(n, lo, hi, m);
  parallel_for(0, g.size(), [&](std::size_t i) { g.values_[i] = fn(g.coordinate(i)); });
  return g;
}

std::vector<int> GridField::multi_index(std::size_t flat) const {
  std::vector<int> idx(static_cast<std::size_t>(n_));
  for (int axis = 0; axis < n_; ++axis) {
    const std::size_t s = strides_[static_cast<std::size_t>(axis)];
    idx[static_cast<std::size_t>(axis)] = static_cast<int>(flat / s);
    flat %= s;
  }
  return idx;
}

std::size_t GridField::flat_index(std::span<const int> idx) const {
  std::size_t flat = 0;
  for (int axis = 0; axis < n_; ++axis) {
    flat += static_cast<std::size_t>(idx[static_cast<std::size_t>(axis)]) * strides_[static_cast<std::size_t>(axis)];
  }
  return flat;
}

Point GridField::coordinate(std::size_t flat) const {
  Point x(n_);
  for (int axis = 0; axis < n_; ++axis) {
    const std::size_t s = strides_[static_cast<std::size_t>(axis)];
    x[axis] = lo_ + h_ * static_cast<double>(flat / s);
    flat %= s;
  }
  return x;
}

bool GridField::is_interior(std::size_t flat, int margin) const {
  for (int axis = 0; axis < n_; ++axis) {
    const std::size_t s = strides_[static_cast<std::size_t>(axis)];
    const int i = static_cast<int>(flat / s);
    if (i < margin || i > m_ - 1 - margin) return false;
    flat %= s;
  }
  return true;
}

std::vector<std::size_t> GridField::interior_indices(int margin) const {
  std::vector<std::size_t> out;
  const int inner = m_ - 2 * margin;
  if (inner <= 0) return out;
  std::size_t count = 1;
  for (int axis = 0; axis < n_; ++axis) count *= static_cast<std::size_t>(inner);
  out.reserve(count);
  std::vector<int> idx(static_cast<std::size_t>(n_), margin);
  for (std::size_t c = 0; c < count; ++c) {
    out.push_back(flat_index(idx));
    for (int axis = n_ - 1; axis >= 0; --axis) {
      auto& k = idx[static_cast<std::size_t>(axis)];
      if (++k < m_ - margin) break;
      k = margin;
    }
  }
  return out;
}

GridField GridField::like(int margin) const {
  GridField g(n_, lo_, hi_, m_, margin);
  std::fill(g.values_.begin(), g.values_.end(), std::numeric_limits<double>::quiet_NaN());
  return g;
}

nlohmann::json GridField::header() const {
  return {{"kind", "grid"},     {"n", n_},          {"box", {lo_, hi_}},
          {"m", m_},            {"spacing", h_},    {"boundary_margin", margin_},
          {"order", "row-major"}};
}

void GridField::write_csv(std::ostream& out) const {
  out << "index,value\n";
  out.precision(17);
  for (std::size_t i = 0; i < values_.size(); ++i) out << i << ',' << values_[i] << '\n';
}

void GridField::write_binary(std::ostream& out) const {
  out.write(reinterpret_cast<const char*>(values_.data()),
            static_cast<std::streamsize>(values_.size() * sizeof(double)));
}

namespace {

GridField from_header(const nlohmann::json& header) {
  try {
    return GridField(header.at("n").get<int>(), header.at("box").at(0).get<double>(),
                     header.at("box").at(1).get<double>(), header.at("m").get<int>(),
                     header.value("boundary_margin", 0));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config_error, std::string("grid header: ") + e.what());
  }
}

double parse_value(const std::string& s) {
  if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

}  // namespace

GridField GridField::read_csv(const nlohmann::json& header, std::istream& in) {
  GridField g = from_header(header);
  std::string line;
  std::getline(in, line);
  std::size_t count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::config_error, "grid csv: missing comma");
    const std::size_t idx = std::stoull(line.substr(0, comma));
    if (idx >= g.size()) throw Error(ErrorCode::config_error, "grid csv: index out of range");
    g.values_[idx] = parse_value(line.substr(comma + 1));
    ++count;
  }
  if (count != g.size()) throw Error(ErrorCode::config_error, "grid csv: wrong row count");
  return g;
}

GridField GridField::read_binary(const nlohmann::json& header, std::istream& in) {
  GridField g = from_header(header);
  in.read(reinterpret_cast<char*>(g.values_.data()),
          static_cast<std::streamsize>(g.size() * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != g.size() * sizeof(double)) {
    throw Error(ErrorCode::config_error, "grid binary: truncated");
  }
  return g;
}

RadialField::RadialField(std::vector<double> radii, std::vector<double> values)
    : radii_(std::move(radii)), values_(std::move(values)) {
  if (radii_.size() != values_.size() || radii_.size() < 2) {
    throw Error(ErrorCode::invalid_argument, "radial field needs >= 2 matching radii/values");
  }
  if (radii_.front() != 0.0) throw Error(ErrorCode::invalid_argument, "radii must start at 0");
  for (std::size_t i = 1; i < radii_.size(); ++i) {
    if (!(radii_[i] > radii_[i - 1])) throw Error(ErrorCode::invalid_argument, "radii must increase strictly");
  }
}

std::vector<double> RadialField::uniform_radii(double r_max, std::size_t m) {
  if (m < 2 || !(r_max > 0)) throw Error(ErrorCode::grid_too_small, "uniform radii need m >= 2, r_max > 0");
  std::vector<double> r(m);
  for (std::size_t i = 0; i < m; ++i) r[i] = r_max * static_cast<double>(i) / static_cast<double>(m - 1);
  return r;
}

RadialField RadialField::sample(std::vector<double> radii, const std::function<double(double)>& fn) {
  std::vector<double> v(radii.size());
  for (std::size_t i = 0; i < radii.size(); ++i) v[i] = fn(radii[i]);
  return RadialField(std::move(radii), std::move(v));
}

double RadialField::uniform_spacing() const {
  const double h = radii_[1] - radii_[0];
  for (std::size_t i = 1; i < radii_.size(); ++i) {
    const double expected = h * static_cast<double>(i);
    if (std::abs(radii_[i] - expected) > 1e-9 * std::max(1.0, expected)) return 0.0;
  }
  return h;
}

std::size_t RadialField::invalid_tail() const {
  std::size_t k = 0;
  for (auto it = values_.rbegin(); it != values_.rend() && std::isnan(*it); ++it) ++k;
  return k;
}

nlohmann::json RadialField::header() const {
  return {{"kind", "radial"}, {"m", radii_.size()}, {"r_max", radii_.back()},
          {"spacing", uniform_spacing()}};
}

void RadialField::write_csv(std::ostream& out) const {
  out << "r,value\n";
  out.precision(17);
  for (std::size_t i = 0; i < radii_.size(); ++i) out << radii_[i] << ',' << values_[i] << '\n';
}

RadialField RadialField::read_csv(std::istream& in) {
  std::string line;
  std::getline(in, line);
  std::vector<double> r, v;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::config_error, "radial csv: missing comma");
    r.push_back(std::stod(line.substr(0, comma)));
    v.push_back(parse_value(line.substr(comma + 1)));
  }
  return RadialField(std::move(r), std::move(v));
}

}  // namespace qlab
