#include "kst/univariate_splines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kst {

UniformBSplineBasis::UniformBSplineBasis(int degree, double length, int count)
    : degree_(degree), count_(count), length_(length) {
  if (degree < 0) throw std::invalid_argument("negative degree");
  if (count < degree + 1)
    throw std::invalid_argument("need at least degree+1 basis functions");
  if (!(length > 0.0)) throw std::invalid_argument("interval length must be positive");
  const int segments = count - degree;
  h_ = length / segments;
  knots_.resize(static_cast<std::size_t>(count + degree + 1));
  for (int i = 0; i <= degree; ++i) knots_[i] = 0.0;
  for (int i = 1; i < segments; ++i) knots_[degree + i] = i * h_;
  for (int i = 0; i <= degree; ++i) knots_[count + i] = length;
}

void UniformBSplineBasis::check_t(double t) const {
  if (!(t >= 0.0 && t <= length_))
    throw std::domain_error("spline argument " + std::to_string(t) + " outside [0, " +
                            std::to_string(length_) + "]");
}

double UniformBSplineBasis::support_lo(int j) const { return knots_[j]; }
double UniformBSplineBasis::support_hi(int j) const { return knots_[j + degree_ + 1]; }

int UniformBSplineBasis::span_index(double t) const {
  check_t(t);
  int i = degree_ + static_cast<int>(std::floor(t / h_));
  i = std::clamp(i, degree_, count_ - 1);
  // Guard against floor() landing one span off near a knot.
  while (i > degree_ && t < knots_[i]) --i;
  while (i < count_ - 1 && t >= knots_[i + 1]) ++i;
  return i;
}

double UniformBSplineBasis::eval(int j, double t) const {
  if (j < 0 || j >= count_) throw std::out_of_range("basis index out of range");
  check_t(t);
  const auto& u = knots_;
  const int last = count_ - 1;
  auto rec = [&](auto&& self, int i, int p) -> double {
    if (p == 0) {
      if (u[i] <= t && t < u[i + 1]) return 1.0;
      // closed right end: the last nonempty span owns t = length
      return (t == length_ && i == last) ? 1.0 : 0.0;
    }
    double v = 0.0;
    const double d1 = u[i + p] - u[i];
    const double d2 = u[i + p + 1] - u[i + 1];
    if (d1 > 0.0) v += (t - u[i]) / d1 * self(self, i, p - 1);
    if (d2 > 0.0) v += (u[i + p + 1] - t) / d2 * self(self, i + 1, p - 1);
    return v;
  };
  return rec(rec, j, degree_);
}

int UniformBSplineBasis::eval_nonzero(double t, std::span<double> out) const {
  return eval_nonzero_derivative(t, 0, out);
}

int UniformBSplineBasis::eval_nonzero_derivative(double t, int r, std::span<double> out) const {
  const int p = degree_;
  if (out.size() < static_cast<std::size_t>(p + 1))
    throw std::invalid_argument("output span too small");
  const int i = span_index(t);
  const auto& u = knots_;
  if (r > p) {
    std::fill(out.begin(), out.begin() + p + 1, 0.0);
    return i - p;
  }
  // ndu[j][k]: basis values (upper triangle) and knot differences (lower).
  double ndu[8][8];
  double left[8], right[8];
  if (p > 6) throw std::invalid_argument("degree above 6 not supported");
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - u[i + 1 - j];
    right[j] = u[i + j] - t;
    double saved = 0.0;
    for (int k = 0; k < j; ++k) {
      ndu[j][k] = right[k + 1] + left[j - k];
      const double tmp = ndu[k][j - 1] / ndu[j][k];
      ndu[k][j] = saved + right[k + 1] * tmp;
      saved = left[j - k] * tmp;
    }
    ndu[j][j] = saved;
  }
  if (r == 0) {
    for (int j = 0; j <= p; ++j) out[j] = ndu[j][p];
    return i - p;
  }
  double a[2][8];
  for (int k = 0; k <= p; ++k) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    double d = 0.0;
    for (int m = 1; m <= r; ++m) {
      d = 0.0;
      const int rk = k - m, pk = p - m;
      if (k >= m) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (k - 1 <= pk) ? m - 1 : p - k;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (k <= pk) {
        a[s2][m] = -a[s1][m - 1] / ndu[pk + 1][k];
        d += a[s2][m] * ndu[k][pk];
      }
      std::swap(s1, s2);
    }
    out[k] = d;
  }
  double f = p;
  for (int m = 1; m < r; ++m) f *= (p - m);
  for (int k = 0; k <= p; ++k) out[k] *= f;
  return i - p;
}

LinearSpline::LinearSpline(std::vector<double> knots, std::vector<double> values)
    : knots_(std::move(knots)), values_(std::move(values)) {
  if (knots_.size() < 2) throw std::invalid_argument("linear spline needs two knots");
  if (knots_.size() != values_.size())
    throw std::invalid_argument("knot and value counts differ");
  for (std::size_t i = 1; i < knots_.size(); ++i)
    if (!(knots_[i] > knots_[i - 1]))
      throw std::invalid_argument("knots must be strictly increasing");
}

double LinearSpline::operator()(double t) const {
  if (t <= knots_.front()) return values_.front();
  if (t >= knots_.back()) return values_.back();
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - knots_.begin()) - 1;
  const double w = (t - knots_[i]) / (knots_[i + 1] - knots_[i]);
  return values_[i] + w * (values_[i + 1] - values_[i]);
}

ReluCombination::ReluCombination(double offset, std::vector<ReluTerm> terms)
    : offset_(offset), terms_(std::move(terms)) {
  std::stable_sort(terms_.begin(), terms_.end(),
                   [](const ReluTerm& a, const ReluTerm& b) { return a.bias < b.bias; });
}

double ReluCombination::operator()(double t) const {
  double s = offset_;
  for (const auto& term : terms_) {
    if (term.bias >= t) break;
    s += term.coefficient * (t - term.bias);
  }
  return s;
}

std::vector<double> uniform_knots(double a, double b, int segments) {
  if (segments < 1) throw std::invalid_argument("segments must be positive");
  if (!(b > a)) throw std::invalid_argument("empty interval");
  std::vector<double> x(static_cast<std::size_t>(segments) + 1);
  for (int i = 0; i <= segments; ++i) x[i] = a + (b - a) * i / segments;
  x.back() = b;
  return x;
}

ReluCombination linear_spline_to_relu(const LinearSpline& s) {
  const auto x = s.knots();
  const auto v = s.values();
  std::vector<ReluTerm> terms;
  terms.reserve(x.size());
  double prev_slope = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double slope = (v[i + 1] - v[i]) / (x[i + 1] - x[i]);
    const double c = slope - prev_slope;
    if (c != 0.0) terms.push_back({c, x[i]});
    prev_slope = slope;
  }
  return ReluCombination(v[0], std::move(terms));
}

ReluCombination hat_as_relu(double left, double mid, double right) {
  if (!(left < mid && mid < right)) throw std::invalid_argument("hat knots must increase");
  const double a = 1.0 / (mid - left);
  const double b = 1.0 / (right - mid);
  return ReluCombination(0.0, {{a, left}, {-(a + b), mid}, {b, right}});
}

}  // namespace kst
