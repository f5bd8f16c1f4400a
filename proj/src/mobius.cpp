#include "qlab/mobius.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <tuple>

#include "qlab/error.hpp"
#include "qlab/parallel.hpp"
#include "qlab/sampling.hpp"

namespace qlab {

namespace {

Point read_point(const nlohmann::json& j, int n, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != n) {
    throw Error(ErrorCode::config_error, std::string(what) + " must be an array of " + std::to_string(n) + " numbers");
  }
  Point p(n);
  for (int i = 0; i < n; ++i) p[i] = j[static_cast<std::size_t>(i)].get<double>();
  return p;
}

nlohmann::json write_point(const Point& p) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < p.size(); ++i) a.push_back(p[i]);
  return a;
}

}  // namespace

std::pair<Point, double> apply_primitive(const Primitive& p, const Point& x) {
  if (const auto* s = std::get_if<Similarity>(&p)) {
    Point y = s->rotation.size() == 0 ? Point(x) : Point(s->rotation * x);
    return {s->scale * y + s->shift, s->scale};
  }
  const auto& inv = std::get<Inversion>(p);
  const Point d = x - inv.center;
  const double d2 = d.squaredNorm();
  if (!(d2 > 0.0) || !std::isfinite(d2)) throw Error(ErrorCode::pole_hit, "point at an inversion center");
  const double r2 = inv.radius * inv.radius;
  return {inv.center + (r2 / d2) * d, r2 / d2};
}

MobiusMap MobiusMap::similarity(Eigen::MatrixXd rotation, double scale, Point shift) {
  if (!(scale > 0.0)) throw Error(ErrorCode::nonpositive_scale, "similarity scale must be positive");
  const int n = static_cast<int>(shift.size());
  if (rotation.size() != 0) {
    if (rotation.rows() != n || rotation.cols() != n) {
      throw Error(ErrorCode::invalid_argument, "rotation has the wrong shape");
    }
    if ((rotation.transpose() * rotation - Eigen::MatrixXd::Identity(n, n)).norm() > 1e-10) {
      throw Error(ErrorCode::invalid_argument, "rotation is not orthogonal");
    }
  }
  MobiusMap m(n);
  m.chain_.emplace_back(Similarity{std::move(rotation), scale, std::move(shift)});
  return m;
}

MobiusMap MobiusMap::dilation(int n, double scale) { return similarity({}, scale, Point::Zero(n)); }

MobiusMap MobiusMap::translation(Point shift) { return similarity({}, 1.0, std::move(shift)); }

MobiusMap MobiusMap::inversion(Point center, double radius) {
  if (!(radius > 0.0)) throw Error(ErrorCode::nonpositive_scale, "inversion radius must be positive");
  MobiusMap m(static_cast<int>(center.size()));
  m.chain_.emplace_back(Inversion{std::move(center), radius});
  return m;
}

Point MobiusMap::apply(const Point& x) const { return apply_with_derivative(x).first; }

double MobiusMap::conformal_derivative(const Point& x) const { return apply_with_derivative(x).second; }

std::pair<Point, double> MobiusMap::apply_with_derivative(const Point& x) const {
  Point y = x;
  double d = 1.0;
  for (const auto& p : chain_) {
    auto [next, s] = apply_primitive(p, y);
    y = std::move(next);
    d *= s;
  }
  return {y, d};
}

double MobiusMap::sphere_conformal_derivative(const Point& x) const {
  const auto [y, d] = apply_with_derivative(x);
  return d * (1.0 + x.squaredNorm()) / (1.0 + y.squaredNorm());
}

MobiusMap MobiusMap::inverse() const {
  MobiusMap m(n_);
  for (auto it = chain_.rbegin(); it != chain_.rend(); ++it) {
    if (const auto* s = std::get_if<Similarity>(&*it)) {
      // y = a R x + b  =>  x = (1/a) R^T y - (1/a) R^T b
      Eigen::MatrixXd rt = s->rotation.size() == 0 ? Eigen::MatrixXd() : Eigen::MatrixXd(s->rotation.transpose());
      Point shift = rt.size() == 0 ? Point(-s->shift / s->scale) : Point(-(rt * s->shift) / s->scale);
      m.chain_.emplace_back(Similarity{std::move(rt), 1.0 / s->scale, std::move(shift)});
    } else {
      m.chain_.push_back(*it);
    }
  }
  return m;
}

MobiusMap MobiusMap::after(const MobiusMap& other) const {
  MobiusMap m(n_);
  m.chain_ = other.chain_;
  m.chain_.insert(m.chain_.end(), chain_.begin(), chain_.end());
  return m;
}

Sphere MobiusMap::image_ball(const Sphere& s) const {
  Sphere out = s;
  for (const auto& p : chain_) {
    if (const auto* sim = std::get_if<Similarity>(&p)) {
      out.center = apply_primitive(p, out.center).first;
      out.radius *= sim->scale;
      continue;
    }
    const auto& inv = std::get<Inversion>(p);
    const Point off = out.center - inv.center;
    const double d2 = off.squaredNorm();
    const double gap = d2 - out.radius * out.radius;
    if (!(gap > 0.0)) throw Error(ErrorCode::pole_hit, "inversion center inside the ball");
    const double r2 = inv.radius * inv.radius;
    out.center = inv.center + (r2 / gap) * off;
    out.radius = r2 * out.radius / gap;
  }
  return out;
}

std::string GroupWord::to_string() const {
  if (letters.empty()) return "e";
  std::ostringstream s;
  for (std::size_t i = 0; i < letters.size(); ++i) s << (i ? "." : "") << letters[i];
  return s.str();
}

SchottkyGroup::SchottkyGroup(int n, std::vector<Sphere> spheres, std::vector<std::pair<int, int>> pairings,
                             std::vector<Eigen::MatrixXd> rotations)
    : n_(n), spheres_(std::move(spheres)), pairings_(std::move(pairings)), rotations_(std::move(rotations)) {
  if (n < 1) throw Error(ErrorCode::invalid_argument, "dimension must be positive");
  const int g = rank();
  if (static_cast<int>(spheres_.size()) != 2 * g) {
    throw Error(ErrorCode::invalid_argument, "need exactly two spheres per pairing");
  }
  if (!rotations_.empty() && static_cast<int>(rotations_.size()) != g) {
    throw Error(ErrorCode::invalid_argument, "one rotation per pairing");
  }
  std::vector<int> used(spheres_.size(), 0);
  for (const auto& [i, j] : pairings_) {
    if (i < 0 || j < 0 || i >= 2 * g || j >= 2 * g || i == j) {
      throw Error(ErrorCode::invalid_argument, "pairing indices out of range");
    }
    ++used[static_cast<std::size_t>(i)];
    ++used[static_cast<std::size_t>(j)];
  }
  if (std::any_of(used.begin(), used.end(), [](int u) { return u != 1; })) {
    throw Error(ErrorCode::invalid_argument, "every sphere must be paired exactly once");
  }
  for (const auto& s : spheres_) {
    if (s.center.size() != n) throw Error(ErrorCode::invalid_argument, "sphere center has the wrong dimension");
    if (!(s.radius > 0.0)) throw Error(ErrorCode::nonpositive_scale, "sphere radius must be positive");
  }
  for (std::size_t a = 0; a < spheres_.size(); ++a) {
    for (std::size_t b = a + 1; b < spheres_.size(); ++b) {
      const double gap = (spheres_[a].center - spheres_[b].center).norm() - spheres_[a].radius - spheres_[b].radius;
      if (!(gap > 0.0)) throw Error(ErrorCode::invalid_argument, "pairing spheres overlap");
    }
  }
  maps_.resize(static_cast<std::size_t>(2 * g));
  for (int k = 0; k < g; ++k) {
    const Sphere& from = spheres_[static_cast<std::size_t>(pairings_[static_cast<std::size_t>(k)].first)];
    const Sphere& to = spheres_[static_cast<std::size_t>(pairings_[static_cast<std::size_t>(k)].second)];
    Eigen::MatrixXd rot = rotations_.empty() ? Eigen::MatrixXd() : rotations_[static_cast<std::size_t>(k)];
    const double scale = to.radius / from.radius;
    const Point rotated_center = rot.size() == 0 ? Point(from.center) : Point(rot * from.center);
    const MobiusMap sim = MobiusMap::similarity(rot, scale, to.center - scale * rotated_center);
    const MobiusMap gen = sim.after(MobiusMap::inversion(from.center, from.radius));
    maps_[static_cast<std::size_t>(k + g)] = gen.inverse();
    maps_[static_cast<std::size_t>(k)] = gen;
  }
  verify();
}

const Sphere& SchottkyGroup::source_sphere(int a) const {
  const auto& p = pairings_[static_cast<std::size_t>(a % rank())];
  return spheres_[static_cast<std::size_t>(a < rank() ? p.first : p.second)];
}

const Sphere& SchottkyGroup::target_sphere(int a) const {
  const auto& p = pairings_[static_cast<std::size_t>(a % rank())];
  return spheres_[static_cast<std::size_t>(a < rank() ? p.second : p.first)];
}

void SchottkyGroup::verify() const {
  const CounterRng rng(0x5c407, static_cast<std::uint64_t>(n_));
  for (int a = 0; a < letters(); ++a) {
    const Sphere& src = source_sphere(a);
    const Sphere& dst = target_sphere(a);
    for (std::uint64_t i = 0; i < 64; ++i) {
      const double stretch = 1.0 + 1e-3 + 4.0 * rng.uniform(i, 0);
      const Point y = src.center + stretch * src.radius * rng.on_sphere(i, n_);
      if (!dst.contains(letter(a).apply(y))) {
        throw Error(ErrorCode::verification_failure, "generator does not map the exterior into its partner ball");
      }
    }
  }
}

bool SchottkyGroup::in_fundamental_domain(const Point& x) const {
  return std::none_of(spheres_.begin(), spheres_.end(),
                      [&](const Sphere& s) { return (x - s.center).norm() <= s.radius; });
}

Point SchottkyGroup::base_point() const {
  if (in_fundamental_domain(Point::Zero(n_))) return Point::Zero(n_);
  double reach = 1.0;
  for (const auto& s : spheres_) reach = std::max(reach, s.center.norm() + s.radius);
  for (std::uint64_t i = 0; i < 100000; ++i) {
    const Point x = 2.0 * reach * (halton(i, n_).array() - 0.5).matrix();
    if (in_fundamental_domain(x)) return x;
  }
  throw Error(ErrorCode::sampling_failure, "no point of the fundamental domain found");
}

MobiusMap SchottkyGroup::word_map(const GroupWord& w) const {
  MobiusMap m = MobiusMap::identity(n_);
  for (int a : w.letters) m = m.after(letter(a));
  return m;
}

std::optional<Sphere> SchottkyGroup::word_ball(const GroupWord& w) const {
  if (w.letters.empty()) return std::nullopt;
  Sphere ball = target_sphere(w.letters.back());
  for (auto it = std::next(w.letters.rbegin()); it != w.letters.rend(); ++it) ball = letter(*it).image_ball(ball);
  return ball;
}

std::pair<GroupWord, Point> SchottkyGroup::locate(const Point& y, int max_depth) const {
  GroupWord w;
  Point x = y;
  for (;;) {
    int hit = -1;
    for (int a = 0; a < letters(); ++a) {
      if ((x - target_sphere(a).center).norm() <= target_sphere(a).radius) {
        hit = a;
        break;
      }
    }
    if (hit < 0) return {w, x};
    if (static_cast<int>(w.length()) >= max_depth) {
      throw Error(ErrorCode::point_not_in_tile, "point lies deeper than the covered tiles");
    }
    w.letters.push_back(hit);
    x = letter(inverse_letter(hit)).apply(x);
  }
}

nlohmann::json SchottkyGroup::to_json() const {
  nlohmann::json j;
  j["n"] = n_;
  j["spheres"] = nlohmann::json::array();
  for (const auto& s : spheres_) j["spheres"].push_back({{"center", write_point(s.center)}, {"radius", s.radius}});
  j["pairings"] = nlohmann::json::array();
  for (const auto& [a, b] : pairings_) j["pairings"].push_back({a, b});
  if (!rotations_.empty()) {
    j["rotations"] = nlohmann::json::array();
    for (const auto& r : rotations_) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index i = 0; i < r.rows(); ++i) rows.push_back(write_point(r.row(i).transpose()));
      j["rotations"].push_back(rows);
    }
  }
  return j;
}

SchottkyGroup SchottkyGroup::from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("n").get<int>();
    std::vector<Sphere> spheres;
    for (const auto& s : j.at("spheres")) spheres.push_back({read_point(s.at("center"), n, "center"), s.at("radius").get<double>()});
    std::vector<std::pair<int, int>> pairings;
    for (const auto& p : j.at("pairings")) {
      if (!p.is_array() || p.size() != 2) throw Error(ErrorCode::config_error, "pairing must be [i, j]");
      pairings.emplace_back(p[0].get<int>(), p[1].get<int>());
    }
    std::vector<Eigen::MatrixXd> rotations;
    if (j.contains("rotations")) {
      for (const auto& r : j.at("rotations")) {
        if (!r.is_array() || static_cast<int>(r.size()) != n) throw Error(ErrorCode::config_error, "rotation must be n x n");
        Eigen::MatrixXd m(n, n);
        for (int i = 0; i < n; ++i) m.row(i) = read_point(r[static_cast<std::size_t>(i)], n, "rotation row").transpose();
        rotations.push_back(m);
      }
    }
    return SchottkyGroup(n, std::move(spheres), std::move(pairings), std::move(rotations));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config_error, e.what());
  }
}

std::size_t word_count(int rank, int max_length) {
  if (max_length < 0) throw Error(ErrorCode::invalid_argument, "negative word length");
  if (rank == 0) return 1;
  std::size_t total = 1;
  std::size_t shell = static_cast<std::size_t>(2 * rank);
  for (int k = 1; k <= max_length; ++k) {
    total += shell;
    shell *= static_cast<std::size_t>(2 * rank - 1);
  }
  return total;
}

namespace {

void require_budget(const SchottkyGroup& group, int max_length, std::size_t budget) {
  if (max_length < 0) throw Error(ErrorCode::invalid_argument, "negative word length");
  // Guard against overflow of the count itself before comparing.
  const double estimate = group.rank() == 0 ? 1.0
                                            : 1.0 + 2.0 * group.rank() *
                                                        (group.rank() == 1 ? max_length
                                                                           : (std::pow(2.0 * group.rank() - 1, max_length) - 1) /
                                                                                 (2.0 * group.rank() - 2));
  if (estimate > static_cast<double>(budget)) {
    throw Error(ErrorCode::depth_overflow, "word count " + std::to_string(estimate) + " exceeds budget");
  }
}

struct WordState {
  GroupWord word;
  Point image;
  double derivative;
};

// Depth-first extension on the left: (a o w)(x) = a(w x), |(a o w)'| = |a'(w x)| |w'(x)|.
void extend(const SchottkyGroup& group, int max_length, WordState& state, const WordVisitor& visit) {
  visit(state.word, state.image, state.derivative);
  if (static_cast<int>(state.word.length()) == max_length) return;
  const int forbidden = state.word.letters.empty() ? -1 : group.inverse_letter(state.word.letters.front());
  for (int a = 0; a < group.letters(); ++a) {
    if (a == forbidden) continue;
    auto [img, d] = group.letter(a).apply_with_derivative(state.image);
    WordState next{GroupWord{}, std::move(img), d * state.derivative};
    next.word.letters.reserve(state.word.length() + 1);
    next.word.letters.push_back(a);
    next.word.letters.insert(next.word.letters.end(), state.word.letters.begin(), state.word.letters.end());
    extend(group, max_length, next, visit);
  }
}

}  // namespace

void for_each_word(const SchottkyGroup& group, int max_length, const Point& x, const WordVisitor& visit,
                   std::size_t budget) {
  require_budget(group, max_length, budget);
  WordState root{GroupWord{}, x, 1.0};
  extend(group, max_length, root, visit);
}

std::vector<WordMap> enumerate_words(const SchottkyGroup& group, int max_length, std::size_t budget) {
  require_budget(group, max_length, budget);
  std::vector<WordMap> out;
  out.push_back({GroupWord{}, MobiusMap::identity(group.dim())});
  std::size_t shell_begin = 0;
  for (int k = 1; k <= max_length; ++k) {
    const std::size_t shell_end = out.size();
    for (std::size_t i = shell_begin; i < shell_end; ++i) {
      const int forbidden = out[i].word.letters.empty() ? -1 : group.inverse_letter(out[i].word.letters.front());
      for (int a = 0; a < group.letters(); ++a) {
        if (a == forbidden) continue;
        WordMap next;
        next.word.letters.push_back(a);
        next.word.letters.insert(next.word.letters.end(), out[i].word.letters.begin(), out[i].word.letters.end());
        next.map = group.letter(a).after(out[i].map);
        out.push_back(std::move(next));
      }
    }
    shell_begin = shell_end;
  }
  return out;
}

std::vector<std::vector<double>> shell_log_derivatives(const SchottkyGroup& group, int max_length, const Point& x) {
  const double base = 1.0 + x.squaredNorm();
  std::vector<std::vector<double>> logs(static_cast<std::size_t>(max_length) + 1);
  for_each_word(group, max_length, x, [&](const GroupWord& w, const Point& y, double d) {
    logs[w.length()].push_back(std::log(d * base / (1.0 + y.squaredNorm())));
  });
  return logs;
}

PoincareSum poincare_sum_from_logs(const std::vector<std::vector<double>>& logs, double delta) {
  PoincareSum s;
  for (const auto& shell : logs) {
    double acc = 0.0;
    for (double l : shell) acc += std::exp(delta * l);
    s.shells.push_back(acc);
    s.total += acc;
  }
  return s;
}

PoincareSum poincare_partial_sum(const SchottkyGroup& group, double delta, int max_length, const Point& x) {
  if (delta < 0.0) throw Error(ErrorCode::invalid_argument, "delta must be nonnegative");
  return poincare_sum_from_logs(shell_log_derivatives(group, max_length, x), delta);
}

ExponentEstimate estimate_poincare_exponent(const SchottkyGroup& group, int max_length, double tol,
                                            std::optional<Point> x) {
  if (group.rank() == 0) throw Error(ErrorCode::invalid_argument, "trivial group has no exponent");
  if (max_length < 3) throw Error(ErrorCode::nonconvergent_ratio, "need at least three shells");
  const Point base = x ? *x : group.base_point();
  const auto logs = shell_log_derivatives(group, max_length, base);
  const auto L = static_cast<std::size_t>(max_length);
  auto ratio = [&](double delta) {
    double deep = 0.0, shallow = 0.0;
    for (double l : logs[L]) deep += std::exp(delta * l);
    for (double l : logs[L - 2]) shallow += std::exp(delta * l);
    return std::sqrt(deep / shallow);
  };
  const int n = group.dim();
  ExponentEstimate est;
  est.max_length = max_length;
  double lo = 0.0, hi = n;
  if (ratio(lo) <= 1.0) {
    est.delta = 0.0;
  } else {
    if (ratio(hi) > 1.0) throw Error(ErrorCode::nonconvergent_ratio, "shell ratio exceeds one on the whole bracket");
    while (hi - lo > tol) {
      const double mid = 0.5 * (lo + hi);
      (ratio(mid) > 1.0 ? lo : hi) = mid;
    }
    est.delta = 0.5 * (lo + hi);
  }
  est.shell_sums = poincare_sum_from_logs(logs, est.delta).shells;
  est.gate = est.delta < (n - 4) / 2.0;
  return est;
}

AutomorphicField::AutomorphicField(ValueFn on_domain, SchottkyGroup group, int max_depth, int n_exponent_dim,
                                   DerivativeMetric metric)
    : Field(group.dim()), on_domain_(std::move(on_domain)), group_(std::move(group)), max_depth_(max_depth),
      weight_(-(n_exponent_dim - 4) / 2.0), metric_(metric) {}

double AutomorphicField::value(const Point& y) const {
  const auto [w, x] = group_.locate(y, max_depth_);
  if (w.letters.empty()) return on_domain_(x);
  const MobiusMap m = group_.word_map(w);
  const double d = metric_ == DerivativeMetric::sphere ? m.sphere_conformal_derivative(x) : m.conformal_derivative(x);
  return on_domain_(x) * std::pow(d, weight_);
}

namespace {

constexpr int kLocateDepth = 64;

double ball_volume(int n, double radius) {
  return std::pow(radius, n) * std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0);
}

// Point of F where the round-metric stretch of the word is smallest; the
// automorphic density on the tile peaks at its image.
Point least_stretched_point(const SchottkyGroup& group, const MobiusMap& map, std::uint64_t seed, std::size_t word) {
  const int n = group.dim();
  const StereoChart chart(n);
  const CounterRng rng(seed ^ 0xa11ce, word);
  Point best = group.base_point();
  double best_d = map.sphere_conformal_derivative(best);
  for (std::uint64_t i = 0; i < 4096; ++i) {
    const Point z = rng.on_sphere(i, n + 1);
    if (z[n] > 1.0 - 1e-9) continue;
    const Point x = chart.unproject(z);
    if (!group.in_fundamental_domain(x)) continue;
    const double d = map.sphere_conformal_derivative(x);
    if (d < best_d) {
      best_d = d;
      best = x;
    }
  }
  return best;
}

// Equal-weight mixture of the uniform law on the word ball and uniform laws
// on balls of radius R 2^{-j} about the peak, j = 1..kLevels.
class ScaleMixture {
 public:
  static constexpr int kLevels = 48;

  ScaleMixture(const Sphere& ball, Point peak, int n) : ball_(ball), peak_(std::move(peak)), n_(n) {}

  Point draw(const CounterRng& rng, std::uint64_t index) const {
    const int level = std::min(kLevels, static_cast<int>(rng.uniform(index, 2000) * (kLevels + 1)));
    if (level == 0) return ball_.center + rng.in_ball(index, n_, ball_.radius);
    return peak_ + rng.in_ball(index, n_, ball_.radius * std::ldexp(1.0, -level));
  }

  double density(const Point& y) const {
    double p = 0.0;
    if ((y - ball_.center).norm() < ball_.radius) p += 1.0 / ball_volume(n_, ball_.radius);
    const double dist = (y - peak_).norm();
    for (int j = 1; j <= kLevels; ++j) {
      const double r = ball_.radius * std::ldexp(1.0, -j);
      if (dist < r) p += 1.0 / ball_volume(n_, r);
    }
    return p / (kLevels + 1);
  }

 private:
  Sphere ball_;
  Point peak_;
  int n_;
};

struct MeanSe {
  double mean = 0;
  double se = 0;
};

MeanSe mean_and_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double s = 0, s2 = 0;
  for (double x : v) {
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = std::max(0.0, (s2 / n - mean * mean)) * n / std::max(1.0, n - 1);
  return {mean, std::sqrt(var / n)};
}

}  // namespace

OrbitIntegralReport orbit_integral(const ValueFn& v, const SchottkyGroup& group, const ConformalExponents& exp,
                                   const OrbitIntegralOptions& options) {
  const int n = group.dim();
  if (exp.n != n) throw Error(ErrorCode::invalid_argument, "group and exponent dimensions differ");
  if (options.samples < 2) throw Error(ErrorCode::sampling_failure, "need at least two samples");
  const double k = (n - 4) / 2.0;
  const double q = exp.nonlinearity;
  const double sphere_area = unit_sphere_area(n);
  const StereoChart chart(n);

  auto density = [&](const Point& x) {
    const double value = v(x);
    if (value < 0.0) throw Error(ErrorCode::negative_sample, "v must be nonnegative on F");
    return std::pow(value, q);
  };

  const auto words = enumerate_words(group, options.two_sided_depth);
  OrbitIntegralReport report;
  report.words.resize(words.size());
  parallel_for(0, words.size(), [&](std::size_t wi) {
    const auto& wm = words[wi];
    const CounterRng pulled_rng(options.seed, 2 * wi);
    const CounterRng direct_rng(options.seed, 2 * wi + 1);
    std::vector<double> pulled(options.samples), direct(options.samples);
    std::size_t hits = 0;
    for (std::size_t s = 0; s < options.samples; ++s) {
      const Point y = pulled_rng.on_sphere(s, n + 1);
      pulled[s] = 0.0;
      if (y[n] > 1.0 - 1e-14) continue;
      const Point x = chart.unproject(y);
      if (!group.in_fundamental_domain(x)) continue;
      ++hits;
      pulled[s] = sphere_area * density(x) * std::pow(wm.map.sphere_conformal_derivative(x), k);
    }
    const auto ball = group.word_ball(wm.word);
    std::optional<ScaleMixture> proposal;
    if (ball) proposal.emplace(*ball, wm.map.apply(least_stretched_point(group, wm.map, options.seed, wi)), n);
    std::size_t direct_hits = 0;
    for (std::size_t s = 0; s < options.samples; ++s) {
      direct[s] = 0.0;
      Point y;
      double weight = 0.0;
      if (!proposal) {
        const Point z = direct_rng.on_sphere(s, n + 1);
        if (z[n] > 1.0 - 1e-14) continue;
        y = chart.unproject(z);
        weight = sphere_area;
      } else {
        y = proposal->draw(direct_rng, s);
        weight = std::pow(StereoChart::metric_factor(y), n) / proposal->density(y);
      }
      GroupWord w;
      Point x0;
      try {
        std::tie(w, x0) = group.locate(y, kLocateDepth);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::point_not_in_tile) throw;
        continue;  // within the limit-set neighbourhood
      }
      if (w.letters != wm.word.letters) continue;
      ++direct_hits;
      const double d = proposal ? wm.map.sphere_conformal_derivative(x0) : 1.0;
      direct[s] = weight * density(x0) * std::pow(d, -k * q);
    }
    if (hits == 0 || direct_hits == 0) {
      throw Error(ErrorCode::sampling_failure, "no samples landed in the tile of word " + wm.word.to_string());
    }
    const auto p = mean_and_se(pulled);
    const auto d = mean_and_se(direct);
    report.words[wi] = {wm.word, d.mean, d.se, p.mean, p.se};
  });

  // Partial sums: E_x[ v^q sum_{|w|<=L} |w'_S(x)|^k ] over F samples.
  const int depth = options.partial_sum_depth;
  std::vector<double> shell_totals(static_cast<std::size_t>(depth) + 1, 0.0);
  const CounterRng rng(options.seed, 0xfeed);
  for (std::size_t s = 0; s < options.partial_sum_samples; ++s) {
    const Point y = rng.on_sphere(s, n + 1);
    if (y[n] > 1.0 - 1e-14) continue;
    const Point x = chart.unproject(y);
    if (!group.in_fundamental_domain(x)) continue;
    const double weight = sphere_area * density(x) / static_cast<double>(options.partial_sum_samples);
    const auto logs = shell_log_derivatives(group, depth, x);
    const auto sums = poincare_sum_from_logs(logs, k);
    for (std::size_t l = 0; l < sums.shells.size(); ++l) shell_totals[l] += weight * sums.shells[l];
  }
  double running = 0.0;
  for (double t : shell_totals) {
    running += t;
    report.partial_sums.push_back(running);
  }
  return report;
}

Bubble pull_back_bubble(const Bubble& u, const MobiusMap& gamma) {
  const int n = gamma.dim();
  double lambda = u.lambda();
  Point c = u.center();
  const auto& chain = gamma.primitives();
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    if (const auto* s = std::get_if<Similarity>(&*it)) {
      const Point off = (c - s->shift) / s->scale;
      c = s->rotation.size() == 0 ? off : Point(s->rotation.transpose() * off);
      lambda *= s->scale;
    } else {
      const auto& inv = std::get<Inversion>(*it);
      const Point p = c - inv.center;
      const double r2 = inv.radius * inv.radius;
      const double l2 = lambda * lambda;
      const double denom = 1.0 + l2 * p.squaredNorm();
      c = inv.center + (l2 * r2 / denom) * p;
      lambda = denom / (lambda * r2);
    }
  }
  return Bubble(n, lambda, c, u.amplitude());
}

BubbleSum::BubbleSum(const Bubble& seed, const SchottkyGroup& group, int max_length) : Field(group.dim()) {
  for (const auto& wm : enumerate_words(group, max_length)) terms_.push_back(pull_back_bubble(seed, wm.map));
}

double BubbleSum::value(const Point& x) const {
  double s = 0.0;
  for (const auto& b : terms_) s += b.value(x);
  return s;
}

Point BubbleSum::gradient(const Point& x) const {
  Point g = Point::Zero(dim());
  for (const auto& b : terms_) g += b.gradient(x);
  return g;
}

double BubbleSum::laplacian(const Point& x) const {
  double s = 0.0;
  for (const auto& b : terms_) s += b.laplacian(x);
  return s;
}

Point BubbleSum::laplacian_gradient(const Point& x) const {
  Point g = Point::Zero(dim());
  for (const auto& b : terms_) g += b.laplacian_gradient(x);
  return g;
}

double BubbleSum::bilaplacian(const Point& x) const {
  double s = 0.0;
  for (const auto& b : terms_) s += b.bilaplacian(x);
  return s;
}

}  // namespace qlab
