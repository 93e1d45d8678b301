#include "kst/fitting.hpp"

#include <cmath>
#include <stdexcept>

namespace kst {

double rms_seminorm(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("RMS of an empty list");
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s / static_cast<double>(values.size()));
}

double rms_seminorm(const Eigen::Ref<const Eigen::VectorXd>& values) {
  return rms_seminorm(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

nlohmann::json FitResult::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["provenance"] = provenance;
  j["coefficients"] = std::vector<double>(coefficients.data(), coefficients.data() + coefficients.size());
  j["columns"] = columns;
  j["support"] = support;
  j["train_rmse"] = train_rmse;
  j["eval_rmse"] = eval_rmse ? nlohmann::json(*eval_rmse) : nlohmann::json(nullptr);
  j["stagnated"] = stagnated;
  return j;
}

DlsSolver::DlsSolver(const Eigen::Ref<const Eigen::MatrixXd>& m, double threshold)
    : rows_(m.rows()) {
  cod_.setThreshold(threshold);
  cod_.compute(m);
}

Eigen::VectorXd DlsSolver::solve(const Eigen::Ref<const Eigen::VectorXd>& b) const {
  if (b.size() != rows_) throw std::invalid_argument("right-hand side length mismatch");
  return cod_.solve(b);
}

FitResult dls_fit(const DesignMatrix& m, const DlsSolver& solver,
                  const Eigen::Ref<const Eigen::VectorXd>& f) {
  if (f.size() != m.values.rows()) throw std::invalid_argument("target length does not match rows");
  FitResult r;
  r.coefficients = solver.solve(f);
  r.columns = m.columns;
  r.train_rmse = rms_seminorm(Eigen::VectorXd(f - m.values * r.coefficients));
  r.method = "DLS";
  r.provenance = m.basis_id + "|" + m.points_id;
  return r;
}

FitResult dls_fit(const DesignMatrix& m, const Eigen::Ref<const Eigen::VectorXd>& f) {
  if (f.size() != m.values.rows()) throw std::invalid_argument("target length does not match rows");
  return dls_fit(m, DlsSolver(m.values), f);
}

double evaluate_fit(FitResult& fit, const LKBBasis& basis, const PointSet& grid,
                    const Eigen::Ref<const Eigen::VectorXd>& f_on_grid) {
  if (!grid.is_grid()) throw std::invalid_argument("grid evaluation needs a uniform grid");
  if (f_on_grid.size() != static_cast<Eigen::Index>(grid.size()))
    throw std::invalid_argument("reference values do not match the grid");
  const Eigen::VectorXd surface = basis.combine(fit.coefficients);
  const Eigen::VectorXd vals = basis.space()->eval_grid(surface, grid.axis());
  const double e = rms_seminorm(Eigen::VectorXd(f_on_grid - vals));
  fit.eval_rmse = e;
  return e;
}

double evaluate_fit(FitResult& fit, const LKBBasis& basis, const PointSet& pts,
                    const MultivariateFn& f) {
  const Eigen::VectorXd surface = basis.combine(fit.coefficients);
  Eigen::VectorXd diff(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto x = pts.point(i);
    diff[static_cast<Eigen::Index>(i)] = f(x) - basis.space()->eval(surface, x);
  }
  const double e = rms_seminorm(diff);
  fit.eval_rmse = e;
  return e;
}

FitResult omp_fit(const DesignMatrix& m, const Eigen::Ref<const Eigen::VectorXd>& f,
                  const OmpStop& stop) {
  const Eigen::MatrixXd& a = m.values;
  if (f.size() != a.rows()) throw std::invalid_argument("target length does not match rows");
  if (stop.sparsity < 0 || stop.residual_rms < 0.0) throw std::invalid_argument("invalid stop rule");
  if (stop.sparsity == 0 && stop.residual_rms == 0.0)
    throw std::invalid_argument("OMP needs a sparsity or residual stop");

  const Eigen::VectorXd norms = a.colwise().norm();
  Eigen::MatrixXd phi = a;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    if (norms[j] > 0.0) phi.col(j) /= norms[j];

  FitResult r;
  r.method = "OMP";
  r.columns = m.columns;
  r.provenance = m.basis_id + "|" + m.points_id;
  r.coefficients = Eigen::VectorXd::Zero(a.cols());

  const double bnorm = f.norm();
  Eigen::VectorXd residual = f;
  Eigen::VectorXd active_coef;
  std::vector<Eigen::Index> active;
  std::vector<char> used(static_cast<std::size_t>(a.cols()), 0);
  const int limit = stop.sparsity > 0 ? stop.sparsity : static_cast<int>(std::min(a.rows(), a.cols()));

  while (static_cast<int>(active.size()) < limit) {
    if (stop.residual_rms > 0.0 && rms_seminorm(residual) <= stop.residual_rms) break;
    const Eigen::VectorXd corr = phi.transpose() * residual;
    Eigen::Index best = -1;
    double best_val = -1.0;
    for (Eigen::Index j = 0; j < corr.size(); ++j) {
      if (used[static_cast<std::size_t>(j)] || norms[j] == 0.0) continue;
      const double v = std::abs(corr[j]);
      if (v > best_val) {  // strict: ties keep the lowest index
        best_val = v;
        best = j;
      }
    }
    if (best < 0 || best_val <= 1e-14 * std::max(bnorm, 1e-300)) {
      r.stagnated = true;
      break;
    }
    used[static_cast<std::size_t>(best)] = 1;
    active.push_back(best);
    Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(active.size()));
    for (std::size_t i = 0; i < active.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = phi.col(active[i]);
    active_coef = sub.colPivHouseholderQr().solve(f);
    residual = f - sub * active_coef;
  }

  for (std::size_t i = 0; i < active.size(); ++i) {
    const Eigen::Index j = active[i];
    r.coefficients[j] = active_coef[static_cast<Eigen::Index>(i)] / norms[j];
    r.support.push_back(static_cast<int>(j));
  }
  r.train_rmse = rms_seminorm(residual);
  return r;
}

}  // namespace kst
