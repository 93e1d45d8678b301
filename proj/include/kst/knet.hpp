#pragma once

#include <memory>
#include <span>
#include <vector>

#include "kst/inner_functions.hpp"
#include "kst/univariate_splines.hpp"

namespace kst {

/// Two-layer ReLU network sum_q S_g(sum_i lambda_i L_q(x_i)).
class KNetwork {
 public:
  KNetwork(int d, int m, int n, std::vector<double> lambdas, std::vector<ReluCombination> inner,
           ReluCombination outer);

  /// All-zero network of the given shape.
  static KNetwork zero(int d);

  int dim() const { return d_; }
  int inner_knots() const { return m_; }
  int outer_density() const { return n_; }
  const std::vector<ReluCombination>& inner() const { return inner_; }
  const ReluCombination& outer() const { return outer_; }
  std::span<const double> lambdas() const { return lambdas_; }

  /// 2dn + 2(2d+1)m.
  long long parameter_count() const;

  double operator()(std::span<const double> x) const;

 private:
  int d_, m_, n_;
  std::vector<double> lambdas_;
  std::vector<ReluCombination> inner_;
  ReluCombination outer_;
};

/// Knot placement for the inner interpolants L_q.
enum class InnerKnots {
  uniform,         // m equal segments of [0,1]
  value_quantile,  // x_j = phi_q^{-1}(j/m), so |phi_q - L_q| <= 1/m
};

/// L_q interpolates phi_q at m+1 knots; S_g interpolates g on d*n uniform
/// segments of [0,d].
KNetwork build_knetwork(const InnerFamily& family, const UnivariateFn& g, int m, int n,
                        InnerKnots knots = InnerKnots::value_quantile);

long long knet_parameter_count(int d, int m, int n);

struct RatePoint {
  int n = 0;
  double error = 0.0;
};

struct RateResult {
  std::vector<RatePoint> points;
  double slope = 0.0;
  bool slope_defined = false;  // false when some error is zero
};

/// Least-squares slope of log(error) against log(n).
double loglog_slope(std::span<const double> n, std::span<const double> err);

/// Sup-error of the K-network (m = n) against forward_superpose on a dense
/// grid (201 per axis for d=2, 61 for d=3 unless grid > 0 is given).
RateResult rate_experiment(const InnerFamily& family, const UnivariateFn& g,
                           const std::vector<int>& n_list, int grid = 0,
                           InnerKnots knots = InnerKnots::value_quantile);

}  // namespace kst
