#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kst {

using UnivariateFn = std::function<double(double)>;
using MultivariateFn = std::function<double(std::span<const double>)>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Strictly increasing piecewise-linear function stored as (x, y) nodes.
class MonotoneTable {
 public:
  MonotoneTable() = default;
  MonotoneTable(std::vector<double> xs, std::vector<double> ys);

  /// Linear interpolation; throws std::domain_error outside [xs.front(), xs.back()].
  double operator()(double x) const;

  std::span<const double> xs() const { return xs_; }
  std::span<const double> ys() const { return ys_; }
  std::size_t size() const { return xs_.size(); }

 private:
  std::vector<double> xs_;
  std::vector<double> ys_;
};

/// The 2d+1 monotone inner functions, the d weights, and the town
/// combinatorics they were built from.
///
/// Towns at rank k for family q are the closed intervals
/// [c, c + 2d g_k] with c = q g_k + m (2d+1) g_k, clipped to [0,1], where
/// g_1 = 1/(2d+1)^2 and g_{k+1} = g_k / (2d+2). Every x in [0,1] lies in the
/// open gap of at most one family per rank.
class InnerFamily {
 public:
  int dim() const { return dim_; }
  int rank() const { return rank_; }
  int count() const { return 2 * dim_ + 1; }

  std::span<const double> lambdas() const { return lambdas_; }
  double lambda_sum() const;

  const MonotoneTable& table(int q) const;

  /// phi_q(x); x must lie in [0,1].
  double phi(int q, double x) const;

  /// z_q(x) = sum_i lambda_i phi_q(x_i).
  double z(int q, std::span<const double> x) const;

  /// Towns of family q at rank k (1 <= k <= rank()), sorted left to right.
  const std::vector<Interval>& towns(int k, int q) const;

  /// Gap length g_k (town length is 2d g_k, period (2d+1) g_k).
  double gap_length(int k) const;

  /// Largest phi-increase over a single rank-k town, taken over all families.
  double town_value_width(int k) const;

  /// Ratio between the value scales of consecutive ranks used during construction.
  double value_ratio() const { return value_ratio_; }

  /// True when x lies in a rank-k town of family q.
  bool in_town(int k, int q, double x) const;

  friend InnerFamily build_inner_family(int d, int rank, const struct InnerFamilyOptions& opts);
  friend InnerFamily read_inner_family(std::istream& is);

 private:
  InnerFamily() = default;
  void build_towns();

  int dim_ = 0;
  int rank_ = 0;
  double value_ratio_ = 0.0;
  std::vector<double> lambdas_;
  std::vector<MonotoneTable> tables_;
  // towns_[k-1][q]
  std::vector<std::vector<std::vector<Interval>>> towns_;
};

struct InnerFamilyOptions {
  /// Multiplies every value scale below rank 1, so each rank-1 town carries a
  /// thinner slice of phi's range. 1 gives the self-similar layout.
  double rank1_flatness = 1.0;
};

/// Deterministic construction. Throws std::invalid_argument for d < 1 or
/// rank < 1, and std::domain_error when the requested depth cannot be
/// resolved in double precision (town width below 1e-14 or value scales
/// below the table resolution).
InnerFamily build_inner_family(int d, int rank, const InnerFamilyOptions& opts = {});

/// Deepest rank <= 4 that build_inner_family accepts for this dimension.
int default_rank(int d, const InnerFamilyOptions& opts = {});

/// Fixed irrational weights: frac(sqrt(p_i)) over the first d primes, scaled
/// so the largest weight is just below 1.
std::vector<double> kst_lambdas(int d);

/// min |sum_i lambda_i m_i| over nonzero integer vectors with |m_i| <= bound.
double lattice_minimum(std::span<const double> lambdas, int bound);

/// sum_q g(z_q(x)).
double forward_superpose(const InnerFamily& family, const UnivariateFn& g,
                         std::span<const double> x);

/// Outer functions that define K-Lipschitz test functions.
struct OuterSpec {
  enum class Kind { linear, sine, exp_decay, chirp, bspline };
  Kind kind = Kind::linear;
  double C = 1.0;
  // B-spline outer function: degree, count on [0,d], index.
  int degree = 1;
  int count = 8;
  int index = 0;

  /// Parses "linear", "sin", "exp", "chirp", "bspline"; throws std::invalid_argument otherwise.
  static OuterSpec parse(const std::string& tag, double C = 1.0);
};

/// Univariate outer function g on [0,d] for the given spec.
UnivariateFn make_outer_function(const OuterSpec& spec, int d);

/// x -> sum_q g(z_q(x)) with g from spec.
MultivariateFn make_kl_function(std::shared_ptr<const InnerFamily> family,
                                const OuterSpec& spec);

/// Binary form: "KSTI", u32 version, u32 d, u32 rank, f64 lambda[d], then per
/// family a u64 node count followed by (x, phi) f64 pairs. Little endian.
void write_inner_family(std::ostream& os, const InnerFamily& family);
InnerFamily read_inner_family(std::istream& is);

inline constexpr std::uint32_t kInnerFamilyFormatVersion = 1;

}  // namespace kst
