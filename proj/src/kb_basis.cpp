#include "kst/kb_basis.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace kst {

PointSet PointSet::grid(int d, int per_axis) {
  if (d < 1) throw std::invalid_argument("dimension must be >= 1");
  if (per_axis < 2) throw std::invalid_argument("grid needs at least 2 points per axis");
  PointSet p;
  p.dim_ = d;
  p.per_axis_ = per_axis;
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(per_axis);
  p.coords_.resize(total * static_cast<std::size_t>(d));
  const auto ax = p.axis();
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  for (std::size_t r = 0; r < total; ++r) {
    for (int i = 0; i < d; ++i) p.coords_[r * d + i] = ax[idx[i]];
    for (int i = 0; i < d; ++i) {
      if (++idx[i] < per_axis) break;
      idx[i] = 0;
    }
  }
  p.id_ = "grid" + std::to_string(per_axis) + "^" + std::to_string(d);
  return p;
}

PointSet PointSet::list(int d, std::vector<double> coords) {
  if (d < 1) throw std::invalid_argument("dimension must be >= 1");
  if (coords.size() % static_cast<std::size_t>(d) != 0)
    throw std::invalid_argument("coordinate count not a multiple of d");
  for (double c : coords)
    if (!(c >= 0.0 && c <= 1.0)) throw std::domain_error("point outside [0,1]^d");
  PointSet p;
  p.dim_ = d;
  p.coords_ = std::move(coords);
  p.id_ = "list" + std::to_string(p.size()) + "^" + std::to_string(d);
  return p;
}

std::span<const double> PointSet::point(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("point index out of range");
  return {coords_.data() + i * dim_, static_cast<std::size_t>(dim_)};
}

std::vector<double> PointSet::axis() const {
  if (per_axis_ < 2) throw std::logic_error("not a grid");
  std::vector<double> a(static_cast<std::size_t>(per_axis_));
  for (int i = 0; i < per_axis_; ++i) a[i] = static_cast<double>(i) / (per_axis_ - 1);
  return a;
}

KBBasis::KBBasis(std::shared_ptr<const InnerFamily> family, int n, int degree)
    : family_(std::move(family)),
      n_(n),
      bspline_(degree, family_ ? family_->dim() : 1.0,
               family_ ? family_->dim() * n : degree + 1) {
  if (!family_) throw std::invalid_argument("null inner family");
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (family_->dim() * n < degree + 1)
    throw std::invalid_argument("d*n must exceed the spline degree");
}

double KBBasis::eval(int j, std::span<const double> x) const {
  if (j < 0 || j >= size()) throw std::out_of_range("KB column out of range");
  double s = 0.0;
  for (int q = 0; q < family_->count(); ++q) {
    const double t = std::min(family_->z(q, x), bspline_.length());
    s += bspline_.eval(j, t);
  }
  return s;
}

void KBBasis::accumulate_row(std::span<const double> x, std::span<double> row) const {
  const int k = bspline_.degree();
  double vals[8];
  for (int q = 0; q < family_->count(); ++q) {
    const double t = std::min(family_->z(q, x), bspline_.length());
    const int first = bspline_.eval_nonzero(t, {vals, static_cast<std::size_t>(k + 1)});
    for (int i = 0; i <= k; ++i) row[first + i] += vals[i];
  }
}

std::string KBBasis::id() const {
  return "kb_d" + std::to_string(dim()) + "_n" + std::to_string(n_) + "_deg" +
         std::to_string(bspline_.degree()) + "_K" + std::to_string(family_->rank());
}

DesignMatrix assemble_design_matrix(const KBBasis& basis, const PointSet& pts,
                                    std::size_t max_bytes) {
  if (pts.dim() != basis.dim()) throw std::invalid_argument("point set dimension mismatch");
  const std::size_t rows = pts.size();
  const std::size_t cols = static_cast<std::size_t>(basis.size());
  const double bytes = static_cast<double>(rows) * static_cast<double>(cols) * sizeof(double);
  if (bytes > static_cast<double>(max_bytes))
    throw std::length_error("design matrix needs " + std::to_string(bytes / 1e6) +
                            " MB, above the configured cap");
  DesignMatrix m;
  m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::vector<double> row(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(row.begin(), row.end(), 0.0);
    basis.accumulate_row(pts.point(r), row);
    for (std::size_t c = 0; c < cols; ++c) m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  m.columns.resize(cols);
  for (std::size_t c = 0; c < cols; ++c) m.columns[c] = static_cast<int>(c);
  m.basis_id = basis.id();
  m.points_id = pts.id();
  return m;
}

DesignMatrix prune_near_zero_columns(const DesignMatrix& m, double tol) {
  if (!(tol >= 0.0)) throw std::invalid_argument("tolerance must be nonnegative");
  const Eigen::VectorXd norms = m.values.colwise().norm();
  const double cutoff = tol * (norms.size() ? norms.maxCoeff() : 0.0);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < norms.size(); ++c)
    if (norms[c] > cutoff) keep.push_back(c);
  if (keep.empty()) throw std::runtime_error("all columns pruned; degenerate basis");
  DesignMatrix out;
  out.values.resize(m.values.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.values.col(static_cast<Eigen::Index>(i)) = m.values.col(keep[i]);
    out.columns.push_back(m.columns[static_cast<std::size_t>(keep[i])]);
  }
  out.basis_id = m.basis_id;
  out.points_id = m.points_id;
  return out;
}

RankReport independence_check(const Eigen::MatrixXd& m) {
  RankReport r;
  r.columns = static_cast<int>(m.cols());
  if (m.cols() == 0) return r;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  r.sigma_max = s[0];
  r.sigma_min = s[s.size() - 1];
  r.threshold = static_cast<double>(std::max(m.rows(), m.cols())) *
                std::numeric_limits<double>::epsilon() * r.sigma_max;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > r.threshold) ++r.rank;
  return r;
}

RankReport independence_check(const KBBasis& basis, const PointSet& pts) {
  const auto full = assemble_design_matrix(basis, pts);
  const auto nz = prune_near_zero_columns(full, 0.0);
  if (pts.size() < nz.columns.size())
    throw std::invalid_argument("fewer points than nonzero columns");
  return independence_check(nz.values);
}

}  // namespace kst
