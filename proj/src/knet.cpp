#include "kst/knet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kst/kb_basis.hpp"

namespace kst {

KNetwork::KNetwork(int d, int m, int n, std::vector<double> lambdas,
                   std::vector<ReluCombination> inner, ReluCombination outer)
    : d_(d), m_(m), n_(n), lambdas_(std::move(lambdas)), inner_(std::move(inner)), outer_(std::move(outer)) {
  if (d < 1 || m < 1 || n < 1) throw std::invalid_argument("K-network sizes must be >= 1");
  if (static_cast<int>(lambdas_.size()) != d) throw std::invalid_argument("need d weights");
  if (static_cast<int>(inner_.size()) != 2 * d + 1) throw std::invalid_argument("need 2d+1 inner units");
}

KNetwork KNetwork::zero(int d) {
  return KNetwork(d, 1, 1, std::vector<double>(static_cast<std::size_t>(d), 0.0),
                  std::vector<ReluCombination>(static_cast<std::size_t>(2 * d + 1)), ReluCombination());
}

long long knet_parameter_count(int d, int m, int n) {
  return 2LL * d * n + 2LL * (2 * d + 1) * m;
}

long long KNetwork::parameter_count() const { return knet_parameter_count(d_, m_, n_); }

double KNetwork::operator()(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != d_) throw std::invalid_argument("point dimension mismatch");
  double s = 0.0;
  for (const auto& lq : inner_) {
    double z = 0.0;
    for (int i = 0; i < d_; ++i) z += lambdas_[i] * lq(x[i]);
    s += outer_(z);
  }
  return s;
}

KNetwork build_knetwork(const InnerFamily& family, const UnivariateFn& g, int m, int n,
                        InnerKnots knots) {
  if (m < 1 || n < 1) throw std::invalid_argument("m and n must be >= 1");
  const int d = family.dim();
  std::vector<ReluCombination> inner;
  for (int q = 0; q < family.count(); ++q) {
    auto phi = [&](double t) { return family.phi(q, t); };
    std::vector<double> x = uniform_knots(0.0, 1.0, m);
    if (knots == InnerKnots::value_quantile) {
      const auto& t = family.table(q);
      const MonotoneTable inverse({t.ys().begin(), t.ys().end()}, {t.xs().begin(), t.xs().end()});
      for (int j = 1; j < m; ++j) x[j] = inverse(static_cast<double>(j) / m);
    }
    inner.push_back(linear_spline_to_relu(linear_interpolant(phi, std::move(x))));
  }
  auto outer = linear_spline_to_relu(linear_interpolant(g, uniform_knots(0.0, d, d * n)));
  const auto lam = family.lambdas();
  return KNetwork(d, m, n, std::vector<double>(lam.begin(), lam.end()), std::move(inner), std::move(outer));
}

double loglog_slope(std::span<const double> n, std::span<const double> err) {
  if (n.size() != err.size() || n.size() < 2) throw std::invalid_argument("slope needs >= 2 pairs");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = static_cast<double>(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(n[i] > 0.0 && err[i] > 0.0)) throw std::domain_error("log-log slope needs positive values");
    const double x = std::log(n[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = k * sxx - sx * sx;
  if (den == 0.0) throw std::domain_error("degenerate n values");
  return (k * sxy - sx * sy) / den;
}

RateResult rate_experiment(const InnerFamily& family, const UnivariateFn& g,
                           const std::vector<int>& n_list, int grid, InnerKnots knots) {
  if (n_list.size() < 3) throw std::invalid_argument("rate experiment needs at least 3 values of n");
  const int d = family.dim();
  if (grid <= 0) grid = d == 2 ? 201 : (d == 3 ? 61 : 21);
  const auto pts = PointSet::grid(d, grid);
  std::vector<double> exact(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) exact[i] = forward_superpose(family, g, pts.point(i));

  RateResult r;
  bool all_positive = true;
  for (int n : n_list) {
    const auto net = build_knetwork(family, g, n, n, knots);
    double e = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) e = std::max(e, std::abs(net(pts.point(i)) - exact[i]));
    r.points.push_back({n, e});
    if (!(e > 0.0)) all_positive = false;
  }
  if (all_positive) {
    std::vector<double> ns, es;
    for (const auto& p : r.points) {
      ns.push_back(p.n);
      es.push_back(p.error);
    }
    r.slope = loglog_slope(ns, es);
    r.slope_defined = true;
  }
  return r;
}

}  // namespace kst
