#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kst/kb_basis.hpp"
#include "kst/univariate_splines.hpp"

namespace kst {

struct SmoothingConfig {
  /// How the data misfit enters the objective: a plain sum of squares, or its
  /// mean over the grid (the squared RMS seminorm).
  enum class DataTerm { sum, mean };

  double lambda_pen = 1.0;
  int degree = 3;
  int segments = 20;
  DataTerm data_term = DataTerm::mean;

  void validate() const;
  std::string describe() const;
};

/// Tensor-product clamped uniform B-splines on [0,1]^d. Coefficients are
/// stored with axis 0 varying fastest.
class TensorSplineSpace {
 public:
  TensorSplineSpace(int d, int degree, int segments);

  int dim() const { return dim_; }
  int per_axis() const { return basis_.count(); }
  Eigen::Index size() const { return size_; }
  const UniformBSplineBasis& basis() const { return basis_; }

  /// 1D matrix of basis values (or r-th derivatives) at the given abscissae.
  Eigen::MatrixXd collocation(std::span<const double> t, int derivative = 0) const;

  /// Gram matrix of r-th derivatives on [0,1], by Gauss-Legendre per span.
  Eigen::MatrixXd gram(int derivative) const;

  /// Matrix of the energy sum over i,j of int (d^2 s / dx_i dx_j)^2.
  Eigen::MatrixXd energy_matrix() const;

  double eval(const Eigen::Ref<const Eigen::VectorXd>& coef, std::span<const double> x) const;

  /// Values at every point of a per-axis grid (first coordinate fastest).
  Eigen::VectorXd eval_grid(const Eigen::Ref<const Eigen::VectorXd>& coef,
                            std::span<const double> axis) const;

 private:
  int dim_;
  UniformBSplineBasis basis_;
  Eigen::Index size_;
};

/// y = (A_{d-1} kron ... kron A_0) x without forming the product; mats[a]
/// acts on axis a and x is laid out with axis 0 fastest.
Eigen::VectorXd kron_apply(const std::vector<const Eigen::MatrixXd*>& mats,
                           const Eigen::Ref<const Eigen::VectorXd>& x);

/// Dense (A_{d-1} kron ... kron A_0).
Eigen::MatrixXd kron_dense(const std::vector<const Eigen::MatrixXd*>& mats);

struct SmoothSurface {
  std::shared_ptr<const TensorSplineSpace> space;
  Eigen::VectorXd coefficients;

  double operator()(std::span<const double> x) const { return space->eval(coefficients, x); }
};

/// Quadrature value of the thin-plate energy (exact for the spline space).
double thin_plate_energy(const SmoothSurface& s);

/// Penalized least squares on a full uniform grid; the system matrix is
/// factored once and reused for every right-hand side.
class PenalizedSmoother {
 public:
  PenalizedSmoother(std::shared_ptr<const TensorSplineSpace> space, int grid_per_axis,
                    const SmoothingConfig& cfg);

  /// One column of grid samples per right-hand side; returns coefficients.
  Eigen::MatrixXd solve(const Eigen::Ref<const Eigen::MatrixXd>& values) const;
  SmoothSurface denoise(const Eigen::Ref<const Eigen::VectorXd>& values) const;

  const std::shared_ptr<const TensorSplineSpace>& space() const { return space_; }
  const Eigen::MatrixXd& grid_collocation() const { return colloc_; }
  int grid_per_axis() const { return grid_; }

 private:
  std::shared_ptr<const TensorSplineSpace> space_;
  int grid_;
  double data_weight_;
  Eigen::MatrixXd colloc_;
  Eigen::MatrixXd collocT_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

SmoothSurface denoise_samples(const Eigen::Ref<const Eigen::VectorXd>& values, const PointSet& grid,
                              const SmoothingConfig& cfg);

/// Denoised KB columns, one tensor spline per kept column.
class LKBBasis {
 public:
  LKBBasis(std::shared_ptr<const TensorSplineSpace> space, Eigen::MatrixXd coefficients,
           std::vector<int> columns, std::string provenance);

  int size() const { return static_cast<int>(columns_.size()); }
  const std::vector<int>& columns() const { return columns_; }
  const Eigen::MatrixXd& coefficients() const { return coef_; }
  const std::shared_ptr<const TensorSplineSpace>& space() const { return space_; }
  const std::string& provenance() const { return provenance_; }

  double eval(int j, std::span<const double> x) const;
  SmoothSurface surface(int j) const;

  /// Tensor coefficients of sum_j c_j LKB_j.
  Eigen::VectorXd combine(const Eigen::Ref<const Eigen::VectorXd>& c) const;

  /// Matrix of all columns sampled on a uniform grid.
  Eigen::MatrixXd sample_grid(const PointSet& grid) const;

 private:
  std::shared_ptr<const TensorSplineSpace> space_;
  Eigen::MatrixXd coef_;
  std::vector<int> columns_;
  std::string provenance_;
};

/// Denoises every column of an already pruned raw KB design matrix sampled
/// on the grid.
LKBBasis build_lkb_basis(const DesignMatrix& pruned_kb, const PointSet& grid,
                         const SmoothingConfig& cfg);

/// Assembles, prunes with prune_tol and denoises.
LKBBasis build_lkb_basis(const KBBasis& kb, const PointSet& grid, const SmoothingConfig& cfg,
                         double prune_tol = 1e-10);

}  // namespace kst
