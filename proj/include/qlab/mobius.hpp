#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "qlab/conformal_ops.hpp"
#include "qlab/field.hpp"
#include "qlab/stereographic.hpp"

namespace qlab {

/// x -> alpha * A x + b with A orthogonal and alpha > 0.
struct Similarity {
  Eigen::MatrixXd rotation;  // empty means the identity
  double scale = 1.0;
  Point shift;
};

/// x -> c + r^2 (x - c) / |x - c|^2.
struct Inversion {
  Point center;
  double radius = 1.0;
};

using Primitive = std::variant<Similarity, Inversion>;

struct Sphere {
  Point center;
  double radius = 1.0;

  bool contains(const Point& x) const { return (x - center).norm() < radius; }
};

/// A Moebius map stored as the chain of primitives it applies, first element
/// applied first.
class MobiusMap {
 public:
  explicit MobiusMap(int n = 0) : n_(n) {}

  static MobiusMap identity(int n) { return MobiusMap(n); }
  static MobiusMap similarity(Eigen::MatrixXd rotation, double scale, Point shift);
  static MobiusMap dilation(int n, double scale);
  static MobiusMap translation(Point shift);
  static MobiusMap inversion(Point center, double radius);

  int dim() const { return n_; }
  const std::vector<Primitive>& primitives() const { return chain_; }
  bool is_identity() const { return chain_.empty(); }

  /// Throws pole-hit when x meets the center of an inversion in the chain.
  Point apply(const Point& x) const;
  /// |gamma'(x)|, the product of primitive scale factors.
  double conformal_derivative(const Point& x) const;
  /// Image and |gamma'(x)| in one pass.
  std::pair<Point, double> apply_with_derivative(const Point& x) const;
  /// |gamma'| in the round metric: |gamma'(x)| (1+|x|^2) / (1+|gamma x|^2).
  double sphere_conformal_derivative(const Point& x) const;

  MobiusMap inverse() const;
  /// (*this) o other.
  MobiusMap after(const MobiusMap& other) const;

  /// Image of the closed ball bounded by s; throws pole-hit when a pole lies
  /// in the ball (its image would not be a ball).
  Sphere image_ball(const Sphere& s) const;

 private:
  int n_;
  std::vector<Primitive> chain_;
};

/// |gamma'| for a single primitive at x, together with its image.
std::pair<Point, double> apply_primitive(const Primitive& p, const Point& x);

/// Reduced word in the free group; letters[0] is applied last, so the word
/// a1 a2 ... ak stands for a1 o a2 o ... o ak.
struct GroupWord {
  std::vector<int> letters;

  std::size_t length() const { return letters.size(); }
  std::string to_string() const;
};

/// Schottky group: 2g disjoint spheres and g pairings. The generator of the
/// pairing (i, j) is the inversion in S_i followed by the similarity taking
/// S_i onto S_j (with an optional rotation), so it sends the exterior of S_i
/// onto the interior of S_j. Letters 0..g-1 are the generators, g..2g-1
/// their inverses.
class SchottkyGroup {
 public:
  SchottkyGroup(int n, std::vector<Sphere> spheres, std::vector<std::pair<int, int>> pairings,
                std::vector<Eigen::MatrixXd> rotations = {});
  static SchottkyGroup trivial(int n) { return SchottkyGroup(n, {}, {}); }

  int dim() const { return n_; }
  int rank() const { return static_cast<int>(pairings_.size()); }
  int letters() const { return 2 * rank(); }
  int inverse_letter(int a) const { return (a + rank()) % letters(); }

  const MobiusMap& letter(int a) const { return maps_[static_cast<std::size_t>(a)]; }
  /// The exterior of the source sphere maps onto the interior of the target.
  const Sphere& source_sphere(int a) const;
  const Sphere& target_sphere(int a) const;
  const std::vector<Sphere>& spheres() const { return spheres_; }
  const std::vector<std::pair<int, int>>& pairings() const { return pairings_; }

  /// Outside every closed pairing ball.
  bool in_fundamental_domain(const Point& x) const;
  /// A deterministic point of F.
  Point base_point() const;

  MobiusMap word_map(const GroupWord& w) const;
  /// Ball containing gamma(F) for the word: the target ball of the last
  /// letter pushed through the others. Empty for the identity.
  std::optional<Sphere> word_ball(const GroupWord& w) const;

  /// Tile lookup: the word w with |w| <= max_depth and x0 in F such that
  /// y = w(x0). Throws point-not-in-tile when y is deeper than max_depth.
  std::pair<GroupWord, Point> locate(const Point& y, int max_depth) const;

  nlohmann::json to_json() const;
  static SchottkyGroup from_json(const nlohmann::json& j);

 private:
  void verify() const;

  int n_;
  std::vector<Sphere> spheres_;
  std::vector<std::pair<int, int>> pairings_;
  std::vector<Eigen::MatrixXd> rotations_;
  std::vector<MobiusMap> maps_;
};

/// 1 + sum_{k=1}^{L} 2g (2g-1)^{k-1}.
std::size_t word_count(int rank, int max_length);

struct WordMap {
  GroupWord word;
  MobiusMap map;
};

constexpr std::size_t kDefaultWordBudget = std::size_t{1} << 20;

/// All reduced words of length <= L in shortlex order by length; throws
/// depth-overflow when the count exceeds the budget.
std::vector<WordMap> enumerate_words(const SchottkyGroup& group, int max_length,
                                     std::size_t budget = kDefaultWordBudget);

/// Visits every reduced word w with |w| <= L as (w, w(x), |w'(x)|), building
/// each word from its suffix so no map is materialised.
using WordVisitor = std::function<void(const GroupWord&, const Point& image, double derivative)>;
void for_each_word(const SchottkyGroup& group, int max_length, const Point& x, const WordVisitor& visit,
                   std::size_t budget = std::size_t{1} << 26);

/// Shell subtotals of sum |gamma'_{S^n}(x)|^delta; shells[k] covers |w| = k.
struct PoincareSum {
  std::vector<double> shells;
  double total = 0;
};

/// log |gamma'_{S^n}(x)| grouped by word length, reusable for many delta.
std::vector<std::vector<double>> shell_log_derivatives(const SchottkyGroup& group, int max_length,
                                                       const Point& x);
PoincareSum poincare_sum_from_logs(const std::vector<std::vector<double>>& logs, double delta);
PoincareSum poincare_partial_sum(const SchottkyGroup& group, double delta, int max_length, const Point& x);

struct ExponentEstimate {
  double delta = 0;
  std::vector<double> shell_sums;  // at delta
  int max_length = 0;
  bool gate = false;  // delta < (n-4)/2
};

/// Heuristic critical exponent: the delta at which the deep-shell ratio
/// (S_L / S_{L-2})^{1/2} equals one, found by bisection on [0, n].
ExponentEstimate estimate_poincare_exponent(const SchottkyGroup& group, int max_length, double tol = 1e-6,
                                            std::optional<Point> x = std::nullopt);

enum class DerivativeMetric { sphere, flat };

/// v on F extended by v(gamma x) = v(x) |gamma'(x)|^{-(n-4)/2}. With the
/// sphere metric, v is the sphere-side factor written in chart coordinates;
/// with the flat metric it is the chart-side factor.
class AutomorphicField final : public Field {
 public:
  AutomorphicField(ValueFn on_domain, SchottkyGroup group, int max_depth, int n_exponent_dim,
                   DerivativeMetric metric = DerivativeMetric::sphere);
  double value(const Point& x) const override;
  const SchottkyGroup& group() const { return group_; }

 private:
  ValueFn on_domain_;
  SchottkyGroup group_;
  int max_depth_;
  double weight_;
  DerivativeMetric metric_;
};

struct WordIntegral {
  GroupWord word;
  double direct = 0;  // integral over gamma(F)
  double direct_se = 0;
  double pulled_back = 0;  // integral over F of v^q |gamma'|^{(n-4)/2}
  double pulled_back_se = 0;
};

struct OrbitIntegralOptions {
  int two_sided_depth = 2;
  int partial_sum_depth = 8;
  std::size_t samples = 20000;
  std::size_t partial_sum_samples = 400;
  std::uint64_t seed = 1;
};

struct OrbitIntegralReport {
  std::vector<WordIntegral> words;
  /// partial_sums[L] = sum over |w| <= L of the pulled-back integrals.
  std::vector<double> partial_sums;
};

/// Both sides of the change of variables for every word up to two_sided_depth,
/// plus shell partial sums of the total. v is the sphere-side factor on F in
/// chart coordinates, integrated against the round volume.
OrbitIntegralReport orbit_integral(const ValueFn& v, const SchottkyGroup& group, const ConformalExponents& exp,
                                   const OrbitIntegralOptions& options = {});

/// The bubble B with (B o gamma) |gamma'|^{(n-4)/2} = pulled back bubble.
Bubble pull_back_bubble(const Bubble& u, const MobiusMap& gamma);

/// Sum of a bubble pulled back through every word of length <= L: a
/// truncated automorphic solution on the chart.
class BubbleSum final : public Field {
 public:
  BubbleSum(const Bubble& seed, const SchottkyGroup& group, int max_length);
  const std::vector<Bubble>& terms() const { return terms_; }

  double value(const Point& x) const override;
  Point gradient(const Point& x) const override;
  double laplacian(const Point& x) const override;
  Point laplacian_gradient(const Point& x) const override;
  double bilaplacian(const Point& x) const override;

 private:
  std::vector<Bubble> terms_;
};

}  // namespace qlab
