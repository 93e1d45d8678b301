#pragma once

#include <Eigen/Dense>
#include <vector>

#include "kst/fitting.hpp"
#include "kst/kb_basis.hpp"

namespace kst {

struct RankEstimate {
  int rank = 0;
  bool zero_matrix = false;
  Eigen::VectorXd singular_values;
};

/// Number of singular values >= tol * sigma_1.
RankEstimate estimate_rank(const Eigen::Ref<const Eigen::MatrixXd>& m, double tol);

struct CrossApproximation {
  std::vector<int> rows;  // I, increasing
  std::vector<int> cols;  // J, increasing
  int rank = 0;
  int swaps = 0;
  std::vector<double> log_volume;  // log|det M_IJ| after init and each accepted swap
  double residual_c = 0.0;
  double sigma_next = 0.0;
  double bound = 0.0;
  double condition = 0.0;
};

inline constexpr double kMaxvolDelta = 1e-2;

/// Greedy dominant-submatrix search seeded by full-pivot LU. Throws
/// std::runtime_error when the numerical rank is below r.
CrossApproximation maxvol_select(const Eigen::Ref<const Eigen::MatrixXd>& m, int r,
                                 double delta = kMaxvolDelta);

struct Certificate {
  double residual_c = 0.0;  // max |M - M_:J M_IJ^-1 M_I:|
  double sigma_next = 0.0;  // sigma_{r+1}(M), 0 when r = min(rows, cols)
  double bound = 0.0;       // (1 + r) sigma_{r+1}
  double ratio = 0.0;       // residual / bound (inf when bound is 0 and residual is not)
  double condition = 0.0;   // 2-norm condition of M_IJ
};

Certificate cross_certificate(const Eigen::Ref<const Eigen::MatrixXd>& m, const std::vector<int>& rows,
                              const std::vector<int>& cols);

/// Fills the certificate fields of a selection in place.
void certify(CrossApproximation& ca, const Eigen::Ref<const Eigen::MatrixXd>& m);

inline constexpr double kMaxPivotalCondition = 1e12;

/// Solves M_IJ x = f_I and embeds x at the J positions of a full coefficient vector.
FitResult pivotal_fit(const DesignMatrix& m, const std::vector<int>& rows, const std::vector<int>& cols,
                      const Eigen::Ref<const Eigen::VectorXd>& f_at_rows);

/// Coordinates of the selected rows, in the order given.
std::vector<std::vector<double>> pivotal_locations(const PointSet& pts, const std::vector<int>& rows);

}  // namespace kst
