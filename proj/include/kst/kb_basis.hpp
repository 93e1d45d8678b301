#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kst/inner_functions.hpp"
#include "kst/univariate_splines.hpp"

namespace kst {

/// Points in [0,1]^d. Grids enumerate with the first coordinate fastest.
class PointSet {
 public:
  static PointSet grid(int d, int per_axis);
  static PointSet list(int d, std::vector<double> coords);

  int dim() const { return dim_; }
  std::size_t size() const { return coords_.size() / static_cast<std::size_t>(dim_); }
  bool is_grid() const { return per_axis_ > 0; }
  int per_axis() const { return per_axis_; }
  std::span<const double> point(std::size_t i) const;
  /// Grid abscissae along one axis (grids only).
  std::vector<double> axis() const;
  const std::string& id() const { return id_; }

 private:
  int dim_ = 0;
  int per_axis_ = 0;
  std::vector<double> coords_;
  std::string id_;
};

class KBBasis {
 public:
  KBBasis(std::shared_ptr<const InnerFamily> family, int n, int degree = 3);

  int dim() const { return family_->dim(); }
  int n() const { return n_; }
  int size() const { return bspline_.count(); }
  const InnerFamily& family() const { return *family_; }
  std::shared_ptr<const InnerFamily> family_ptr() const { return family_; }
  const UniformBSplineBasis& bspline() const { return bspline_; }

  /// KB_j(x) = sum_q b_j(z_q(x)).
  double eval(int j, std::span<const double> x) const;

  /// Adds KB_j(x) into row[j] for all j (row must have size() entries).
  void accumulate_row(std::span<const double> x, std::span<double> row) const;

  std::string id() const;

 private:
  std::shared_ptr<const InnerFamily> family_;
  int n_;
  UniformBSplineBasis bspline_;
};

struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<int> columns;  // original basis index of each stored column
  std::string basis_id;
  std::string points_id;
};

inline constexpr std::size_t kDefaultMemoryCap = std::size_t{3} << 30;

/// Throws std::length_error before allocating when rows*cols doubles exceed max_bytes.
DesignMatrix assemble_design_matrix(const KBBasis& basis, const PointSet& pts,
                                    std::size_t max_bytes = kDefaultMemoryCap);

/// Drops columns with norm <= tol * max column norm. Throws if nothing survives.
DesignMatrix prune_near_zero_columns(const DesignMatrix& m, double tol = 1e-10);

struct RankReport {
  int columns = 0;
  int rank = 0;
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  double threshold = 0.0;
  bool independent() const { return rank == columns; }
};

/// SVD rank with the threshold max(rows, cols) * eps * sigma_max.
RankReport independence_check(const Eigen::MatrixXd& m);

/// Assembles on pts, drops exactly-zero columns, and reports the rank.
RankReport independence_check(const KBBasis& basis, const PointSet& pts);

}  // namespace kst
