#include "kst/smoothing.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace kst {

namespace {

constexpr double kGaussNodes[4] = {-0.8611363115940526, -0.3399810435848563,
                                   0.3399810435848563, 0.8611363115940526};
constexpr double kGaussWeights[4] = {0.3478548451374538, 0.6521451548625461,
                                     0.6521451548625461, 0.3478548451374538};

Eigen::MatrixXd kron2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return k;
}

}  // namespace

void SmoothingConfig::validate() const {
  if (!(lambda_pen >= 0.0)) throw std::invalid_argument("penalty weight must be >= 0");
  if (segments < 4) throw std::invalid_argument("smoothing needs at least 4 segments per axis");
  if (degree < 2 || degree > 5) throw std::invalid_argument("smoothing degree must be 2..5");
}

std::string SmoothingConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "lambda=" << lambda_pen << ";degree=" << degree << ";segments=" << segments
     << ";data=" << (data_term == DataTerm::sum ? "sum" : "mean");
  return os.str();
}

TensorSplineSpace::TensorSplineSpace(int d, int degree, int segments)
    : dim_(d), basis_(degree, 1.0, segments + degree), size_(1) {
  if (d < 1) throw std::invalid_argument("dimension must be >= 1");
  for (int i = 0; i < d; ++i) size_ *= basis_.count();
}

Eigen::MatrixXd TensorSplineSpace::collocation(std::span<const double> t, int derivative) const {
  const int k = basis_.degree();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.size()), basis_.count());
  double vals[8];
  for (std::size_t i = 0; i < t.size(); ++i) {
    const int first =
        basis_.eval_nonzero_derivative(t[i], derivative, {vals, static_cast<std::size_t>(k + 1)});
    for (int j = 0; j <= k; ++j) c(static_cast<Eigen::Index>(i), first + j) = vals[j];
  }
  return c;
}

Eigen::MatrixXd TensorSplineSpace::gram(int derivative) const {
  const int k = basis_.degree();
  const int n = basis_.count();
  const int spans = n - k;
  const double h = basis_.spacing();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  double vals[8];
  for (int s = 0; s < spans; ++s) {
    const double mid = (s + 0.5) * h;
    for (int p = 0; p < 4; ++p) {
      const double t = mid + 0.5 * h * kGaussNodes[p];
      const double w = 0.5 * h * kGaussWeights[p];
      const int first =
          basis_.eval_nonzero_derivative(t, derivative, {vals, static_cast<std::size_t>(k + 1)});
      for (int a = 0; a <= k; ++a)
        for (int b = 0; b <= k; ++b) g(first + a, first + b) += w * vals[a] * vals[b];
    }
  }
  return g;
}

Eigen::MatrixXd TensorSplineSpace::energy_matrix() const {
  const Eigen::MatrixXd g0 = gram(0), g1 = gram(1), g2 = gram(2);
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(size_, size_);
  std::vector<const Eigen::MatrixXd*> mats(static_cast<std::size_t>(dim_));
  for (int i = 0; i < dim_; ++i) {
    for (int a = 0; a < dim_; ++a) mats[a] = (a == i) ? &g2 : &g0;
    e += kron_dense(mats);
    for (int j = i + 1; j < dim_; ++j) {
      for (int a = 0; a < dim_; ++a) mats[a] = (a == i || a == j) ? &g1 : &g0;
      e += 2.0 * kron_dense(mats);
    }
  }
  return e;
}

double TensorSplineSpace::eval(const Eigen::Ref<const Eigen::VectorXd>& coef,
                               std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("point dimension mismatch");
  if (coef.size() != size_) throw std::invalid_argument("coefficient count mismatch");
  const int k = basis_.degree();
  const int m = k + 1;
  std::vector<double> vals(static_cast<std::size_t>(dim_ * m));
  std::vector<int> first(static_cast<std::size_t>(dim_));
  for (int a = 0; a < dim_; ++a)
    first[a] = basis_.eval_nonzero(x[a], {vals.data() + a * m, static_cast<std::size_t>(m)});
  std::vector<int> idx(static_cast<std::size_t>(dim_), 0);
  double s = 0.0;
  Eigen::Index total = 1;
  for (int a = 0; a < dim_; ++a) total *= m;
  for (Eigen::Index c = 0; c < total; ++c) {
    double w = 1.0;
    Eigen::Index pos = 0, stride = 1;
    for (int a = 0; a < dim_; ++a) {
      w *= vals[a * m + idx[a]];
      pos += (first[a] + idx[a]) * stride;
      stride *= basis_.count();
    }
    s += w * coef[pos];
    for (int a = 0; a < dim_; ++a) {
      if (++idx[a] < m) break;
      idx[a] = 0;
    }
  }
  return s;
}

Eigen::VectorXd TensorSplineSpace::eval_grid(const Eigen::Ref<const Eigen::VectorXd>& coef,
                                             std::span<const double> axis) const {
  const Eigen::MatrixXd c = collocation(axis);
  std::vector<const Eigen::MatrixXd*> mats(static_cast<std::size_t>(dim_), &c);
  return kron_apply(mats, coef);
}

Eigen::VectorXd kron_apply(const std::vector<const Eigen::MatrixXd*>& mats,
                           const Eigen::Ref<const Eigen::VectorXd>& x) {
  const std::size_t d = mats.size();
  Eigen::Index expected = 1;
  for (auto* m : mats) expected *= m->cols();
  if (expected != x.size()) throw std::invalid_argument("kron_apply size mismatch");
  std::vector<Eigen::Index> dims(d);
  for (std::size_t a = 0; a < d; ++a) dims[a] = mats[a]->cols();
  Eigen::VectorXd cur = x;
  for (std::size_t a = 0; a < d; ++a) {
    const Eigen::MatrixXd& m = *mats[a];
    Eigen::Index pre = 1, post = 1;
    for (std::size_t i = 0; i < a; ++i) pre *= dims[i];
    for (std::size_t i = a + 1; i < d; ++i) post *= dims[i];
    const Eigen::Index na = m.cols(), ma = m.rows();
    Eigen::VectorXd next(pre * ma * post);
    for (Eigen::Index p = 0; p < post; ++p) {
      Eigen::Map<const Eigen::MatrixXd> in(cur.data() + p * pre * na, pre, na);
      Eigen::Map<Eigen::MatrixXd> out(next.data() + p * pre * ma, pre, ma);
      out.noalias() = in * m.transpose();
    }
    dims[a] = ma;
    cur.swap(next);
  }
  return cur;
}

Eigen::MatrixXd kron_dense(const std::vector<const Eigen::MatrixXd*>& mats) {
  if (mats.empty()) throw std::invalid_argument("kron of nothing");
  Eigen::MatrixXd k = *mats.back();
  for (std::size_t a = mats.size() - 1; a-- > 0;) k = kron2(k, *mats[a]);
  return k;
}

double thin_plate_energy(const SmoothSurface& s) {
  const Eigen::MatrixXd e = s.space->energy_matrix();
  return std::max(0.0, s.coefficients.dot(e * s.coefficients));
}

PenalizedSmoother::PenalizedSmoother(std::shared_ptr<const TensorSplineSpace> space,
                                     int grid_per_axis, const SmoothingConfig& cfg)
    : space_(std::move(space)), grid_(grid_per_axis) {
  cfg.validate();
  if (!space_) throw std::invalid_argument("null spline space");
  if (grid_per_axis < 2) throw std::invalid_argument("grid too small");
  std::vector<double> axis(static_cast<std::size_t>(grid_per_axis));
  for (int i = 0; i < grid_per_axis; ++i) axis[i] = static_cast<double>(i) / (grid_per_axis - 1);
  colloc_ = space_->collocation(axis);
  collocT_ = colloc_.transpose();
  double total = 1.0;
  for (int a = 0; a < space_->dim(); ++a) total *= grid_per_axis;
  data_weight_ = cfg.data_term == SmoothingConfig::DataTerm::mean ? 1.0 / total : 1.0;

  const Eigen::MatrixXd g = colloc_.transpose() * colloc_;
  std::vector<const Eigen::MatrixXd*> mats(static_cast<std::size_t>(space_->dim()), &g);
  Eigen::MatrixXd a = data_weight_ * kron_dense(mats);
  if (cfg.lambda_pen > 0.0) a += cfg.lambda_pen * space_->energy_matrix();
  llt_.compute(a);
  if (llt_.info() != Eigen::Success) throw std::runtime_error("singular smoothing normal system");
}

Eigen::MatrixXd PenalizedSmoother::solve(const Eigen::Ref<const Eigen::MatrixXd>& values) const {
  Eigen::Index n = 1;
  for (int a = 0; a < space_->dim(); ++a) n *= grid_;
  if (values.rows() != n) throw std::invalid_argument("sample count does not match the grid");
  std::vector<const Eigen::MatrixXd*> mats(static_cast<std::size_t>(space_->dim()), &collocT_);
  Eigen::MatrixXd rhs(space_->size(), values.cols());
  for (Eigen::Index c = 0; c < values.cols(); ++c)
    rhs.col(c) = data_weight_ * kron_apply(mats, values.col(c));
  return llt_.solve(rhs);
}

SmoothSurface PenalizedSmoother::denoise(const Eigen::Ref<const Eigen::VectorXd>& values) const {
  return {space_, solve(values).col(0)};
}

SmoothSurface denoise_samples(const Eigen::Ref<const Eigen::VectorXd>& values, const PointSet& grid,
                              const SmoothingConfig& cfg) {
  if (!grid.is_grid()) throw std::invalid_argument("denoising needs a full uniform grid");
  auto space = std::make_shared<const TensorSplineSpace>(grid.dim(), cfg.degree, cfg.segments);
  if (static_cast<Eigen::Index>(grid.size()) < space->size())
    throw std::invalid_argument("grid has fewer points than spline coefficients");
  PenalizedSmoother sm(space, grid.per_axis(), cfg);
  return sm.denoise(values);
}

LKBBasis::LKBBasis(std::shared_ptr<const TensorSplineSpace> space, Eigen::MatrixXd coefficients,
                   std::vector<int> columns, std::string provenance)
    : space_(std::move(space)),
      coef_(std::move(coefficients)),
      columns_(std::move(columns)),
      provenance_(std::move(provenance)) {
  if (!space_) throw std::invalid_argument("null spline space");
  if (coef_.rows() != space_->size() || coef_.cols() != static_cast<Eigen::Index>(columns_.size()))
    throw std::invalid_argument("LKB coefficient shape mismatch");
}

double LKBBasis::eval(int j, std::span<const double> x) const {
  if (j < 0 || j >= size()) throw std::out_of_range("LKB column out of range");
  for (double v : x)
    if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("point outside [0,1]^d");
  return space_->eval(coef_.col(j), x);
}

SmoothSurface LKBBasis::surface(int j) const {
  if (j < 0 || j >= size()) throw std::out_of_range("LKB column out of range");
  return {space_, coef_.col(j)};
}

Eigen::VectorXd LKBBasis::combine(const Eigen::Ref<const Eigen::VectorXd>& c) const {
  if (c.size() != coef_.cols()) throw std::invalid_argument("coefficient length mismatch");
  return coef_ * c;
}

Eigen::MatrixXd LKBBasis::sample_grid(const PointSet& grid) const {
  if (!grid.is_grid() || grid.dim() != space_->dim())
    throw std::invalid_argument("sampling needs a uniform grid of matching dimension");
  const auto axis = grid.axis();
  const Eigen::MatrixXd c = space_->collocation(axis);
  std::vector<const Eigen::MatrixXd*> mats(static_cast<std::size_t>(space_->dim()), &c);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(grid.size()), coef_.cols());
  for (Eigen::Index j = 0; j < coef_.cols(); ++j) out.col(j) = kron_apply(mats, coef_.col(j));
  return out;
}

LKBBasis build_lkb_basis(const DesignMatrix& pruned_kb, const PointSet& grid,
                         const SmoothingConfig& cfg) {
  if (!grid.is_grid()) throw std::invalid_argument("LKB construction needs a full uniform grid");
  if (pruned_kb.values.rows() != static_cast<Eigen::Index>(grid.size()))
    throw std::invalid_argument("design matrix rows do not match the grid");
  auto space = std::make_shared<const TensorSplineSpace>(grid.dim(), cfg.degree, cfg.segments);
  PenalizedSmoother sm(space, grid.per_axis(), cfg);
  Eigen::MatrixXd coef = sm.solve(pruned_kb.values);
  for (Eigen::Index j = 0; j < coef.cols(); ++j)
    if (!coef.col(j).allFinite())
      throw std::runtime_error("denoising failed for column " +
                               std::to_string(pruned_kb.columns[static_cast<std::size_t>(j)]));
  return LKBBasis(space, std::move(coef), pruned_kb.columns,
                  pruned_kb.basis_id + "|" + grid.id() + "|" + cfg.describe());
}

LKBBasis build_lkb_basis(const KBBasis& kb, const PointSet& grid, const SmoothingConfig& cfg,
                         double prune_tol) {
  const auto raw = assemble_design_matrix(kb, grid);
  return build_lkb_basis(prune_near_zero_columns(raw, prune_tol), grid, cfg);
}

}  // namespace kst
