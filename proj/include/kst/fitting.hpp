#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "kst/kb_basis.hpp"
#include "kst/smoothing.hpp"

namespace kst {

/// sqrt(mean of squares); throws std::invalid_argument on an empty list.
double rms_seminorm(std::span<const double> values);
double rms_seminorm(const Eigen::Ref<const Eigen::VectorXd>& values);

struct FitResult {
  Eigen::VectorXd coefficients;  // one per stored design-matrix column
  std::vector<int> columns;      // basis index of each coefficient
  std::vector<int> support;      // positions with nonzero coefficient (OMP, pivotal)
  double train_rmse = 0.0;
  std::optional<double> eval_rmse;
  std::string method;
  std::string provenance;
  bool stagnated = false;

  nlohmann::json to_json() const;
};

/// Minimum-norm least squares via complete orthogonal decomposition.
class DlsSolver {
 public:
  explicit DlsSolver(const Eigen::Ref<const Eigen::MatrixXd>& m, double threshold = 1e-10);

  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& b) const;
  Eigen::Index rank() const { return cod_.rank(); }
  Eigen::Index rows() const { return rows_; }

 private:
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_;
  Eigen::Index rows_;
};

FitResult dls_fit(const DesignMatrix& m, const Eigen::Ref<const Eigen::VectorXd>& f);
FitResult dls_fit(const DesignMatrix& m, const DlsSolver& solver,
                  const Eigen::Ref<const Eigen::VectorXd>& f);

/// RMS of f - sum_j c_j LKB_j over a uniform grid; fills fit.eval_rmse.
double evaluate_fit(FitResult& fit, const LKBBasis& basis, const PointSet& grid,
                    const Eigen::Ref<const Eigen::VectorXd>& f_on_grid);

/// Same, for an arbitrary point set and a reference evaluator.
double evaluate_fit(FitResult& fit, const LKBBasis& basis, const PointSet& pts,
                    const MultivariateFn& f);

struct OmpStop {
  int sparsity = 0;          // stop after this many atoms (0 = unlimited)
  double residual_rms = 0.0;  // stop once the RMS residual falls to this value
};

/// Orthogonal matching pursuit on the column-normalized matrix; coefficients
/// are returned in the scale of the original columns.
FitResult omp_fit(const DesignMatrix& m, const Eigen::Ref<const Eigen::VectorXd>& f,
                  const OmpStop& stop);

}  // namespace kst
