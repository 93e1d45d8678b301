#pragma once

#include <span>
#include <vector>

namespace kst {

/// Clamped uniform B-spline basis of a given degree on [0, length].
class UniformBSplineBasis {
 public:
  UniformBSplineBasis(int degree, double length, int count);

  int degree() const { return degree_; }
  int count() const { return count_; }
  double length() const { return length_; }
  double spacing() const { return h_; }
  std::span<const double> knots() const { return knots_; }

  /// Cox-de Boor recursion for a single basis function.
  double eval(int j, double t) const;

  /// Index of the knot span containing t (clamped to the last interior span).
  int span_index(double t) const;

  /// Values of the degree+1 functions that may be nonzero at t, starting at
  /// index span_index(t) - degree. Returns that first index.
  int eval_nonzero(double t, std::span<double> out) const;

  /// Same as eval_nonzero, for the r-th derivative.
  int eval_nonzero_derivative(double t, int r, std::span<double> out) const;

  /// Support interval of function j.
  double support_lo(int j) const;
  double support_hi(int j) const;

 private:
  void check_t(double t) const;

  int degree_;
  int count_;
  double length_;
  double h_;
  std::vector<double> knots_;
};

class LinearSpline {
 public:
  LinearSpline(std::vector<double> knots, std::vector<double> values);

  double operator()(double t) const;

  std::span<const double> knots() const { return knots_; }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
};

struct ReluTerm {
  double coefficient = 0.0;
  double bias = 0.0;
};

/// t -> offset + sum_i c_i max(t - y_i, 0), terms kept in ascending bias.
class ReluCombination {
 public:
  ReluCombination() = default;
  ReluCombination(double offset, std::vector<ReluTerm> terms);

  double operator()(double t) const;

  double offset() const { return offset_; }
  std::span<const ReluTerm> terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }

 private:
  double offset_ = 0.0;
  std::vector<ReluTerm> terms_;
};

inline double relu(double t) { return t > 0.0 ? t : 0.0; }

std::vector<double> uniform_knots(double a, double b, int segments);

template <class F>
LinearSpline linear_interpolant(const F& f, std::vector<double> knots) {
  std::vector<double> v(knots.size());
  for (std::size_t i = 0; i < knots.size(); ++i) v[i] = f(knots[i]);
  return LinearSpline(std::move(knots), std::move(v));
}

/// Exact rewrite of s on [x_0, x_n] as a ReLU combination with at most n+1 terms.
ReluCombination linear_spline_to_relu(const LinearSpline& s);

/// Hat function h_i on knots x_{i-1} < x_i < x_{i+1} as three ReLU terms.
ReluCombination hat_as_relu(double left, double mid, double right);

}  // namespace kst
