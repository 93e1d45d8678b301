#include "kst/pivotal.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace kst {

namespace {

Eigen::VectorXd singular_values(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (m.rows() >= m.cols()) {
    // R of a QR has the same singular values and is much smaller for tall M.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    const Eigen::MatrixXd r =
        qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
    return Eigen::BDCSVD<Eigen::MatrixXd>(r).singularValues();
  }
  return Eigen::BDCSVD<Eigen::MatrixXd>(m).singularValues();
}

Eigen::MatrixXd submatrix(const Eigen::Ref<const Eigen::MatrixXd>& m, const std::vector<int>& rows,
                          const std::vector<int>& cols) {
  Eigen::MatrixXd s(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i], cols[j]);
  return s;
}

double log_abs_det(const Eigen::MatrixXd& s) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(s);
  const Eigen::MatrixXd& u = lu.matrixLU();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < u.rows(); ++i) acc += std::log(std::abs(u(i, i)));
  return acc;
}

// One sweep of row swaps: with B = M_{:,J} M_{I,J}^{-1}, replacing row I_k by
// row i scales |det| by |B(i,k)|. Returns number of swaps done.
int row_phase(const Eigen::Ref<const Eigen::MatrixXd>& m, std::vector<int>& rows,
              const std::vector<int>& cols, double delta, std::vector<double>& logvol) {
  const int r = static_cast<int>(rows.size());
  Eigen::MatrixXd mj(m.rows(), r);
  for (int j = 0; j < r; ++j) mj.col(j) = m.col(cols[static_cast<std::size_t>(j)]);
  Eigen::MatrixXd sub(r, r);
  for (int i = 0; i < r; ++i) sub.row(i) = mj.row(rows[static_cast<std::size_t>(i)]);
  Eigen::MatrixXd b = mj * sub.partialPivLu().inverse();
  int swaps = 0;
  const int max_swaps = 100 * std::max<int>(r, 1) + static_cast<int>(m.rows());
  while (swaps < max_swaps) {
    Eigen::Index bi = 0, bk = 0;
    const double mx = b.cwiseAbs().maxCoeff(&bi, &bk);
    if (!(mx > 1.0 + delta)) break;
    // Rank-1 update of B after row I_k is replaced by row bi.
    const Eigen::VectorXd colk = b.col(bk);
    Eigen::RowVectorXd rowi = b.row(bi);
    rowi[bk] -= 1.0;
    b.noalias() -= colk * rowi / b(bi, bk);
    rows[static_cast<std::size_t>(bk)] = static_cast<int>(bi);
    logvol.push_back(logvol.back() + std::log(mx));
    ++swaps;
  }
  return swaps;
}

// Joint swap of row I_k -> i and column J_l -> j. Bordering M_IJ with row i
// and column j and applying Jacobi's complementary-minor identity gives
// det ratio = S(i,j) A^{-1}(l,k) + B(i,k) C(l,j), where A = M_IJ,
// B = M_{:,J} A^{-1}, C = A^{-1} M_{I,:} and S = M - M_{:,J} C.
// Dense in all four indices, so only used when r^2 * rows * cols is small.
constexpr double kCrossSwapBudget = 1e7;

int cross_phase(const Eigen::Ref<const Eigen::MatrixXd>& m, std::vector<int>& rows,
                std::vector<int>& cols, double delta, std::vector<double>& logvol) {
  const int r = static_cast<int>(rows.size());
  int swaps = 0;
  while (swaps < 100 * r) {
    const Eigen::MatrixXd ainv = submatrix(m, rows, cols).partialPivLu().inverse();
    Eigen::MatrixXd mj(m.rows(), r), mi(r, m.cols());
    for (int t = 0; t < r; ++t) {
      mj.col(t) = m.col(cols[static_cast<std::size_t>(t)]);
      mi.row(t) = m.row(rows[static_cast<std::size_t>(t)]);
    }
    const Eigen::MatrixXd b = mj * ainv, c = ainv * mi;
    const Eigen::MatrixXd s = m - mj * c;
    std::vector<char> in_i(static_cast<std::size_t>(m.rows()), 0), in_j(static_cast<std::size_t>(m.cols()), 0);
    for (int i : rows) in_i[static_cast<std::size_t>(i)] = 1;
    for (int j : cols) in_j[static_cast<std::size_t>(j)] = 1;
    double best = 1.0 + delta;
    Eigen::Index bi = -1, bj = -1;
    int bk = -1, bl = -1;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (in_j[static_cast<std::size_t>(j)]) continue;
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (in_i[static_cast<std::size_t>(i)]) continue;
        for (int k = 0; k < r; ++k)
          for (int l = 0; l < r; ++l) {
            const double v = std::abs(s(i, j) * ainv(l, k) + b(i, k) * c(l, j));
            if (v > best) {
              best = v;
              bi = i;
              bj = j;
              bk = k;
              bl = l;
            }
          }
      }
    }
    if (bi < 0) break;
    rows[static_cast<std::size_t>(bk)] = static_cast<int>(bi);
    cols[static_cast<std::size_t>(bl)] = static_cast<int>(bj);
    logvol.push_back(logvol.back() + std::log(best));
    ++swaps;
  }
  return swaps;
}


constexpr std::size_t kRestarts = 64;

// Cross approximation with full pivoting on the residual, first pivot fixed.
bool greedy_cross(const Eigen::Ref<const Eigen::MatrixXd>& m, int r, Eigen::Index i0, Eigen::Index j0,
                  std::vector<int>& rows, std::vector<int>& cols) {
  Eigen::MatrixXd res = m;
  const double floor = m.cwiseAbs().maxCoeff() * 1e-13;
  Eigen::Index i = i0, j = j0;
  for (int k = 0; k < r; ++k) {
    if (k > 0) res.cwiseAbs().maxCoeff(&i, &j);
    const double p = res(i, j);
    if (!(std::abs(p) > floor)) return false;
    rows.push_back(static_cast<int>(i));
    cols.push_back(static_cast<int>(j));
    const Eigen::VectorXd c = res.col(j);
    const Eigen::RowVectorXd rw = res.row(i);
    res.noalias() -= c * rw / p;
  }
  return true;
}

CrossApproximation refine(const Eigen::Ref<const Eigen::MatrixXd>& m, int r, double delta,
                          std::vector<int> rows, std::vector<int> cols) {
  CrossApproximation ca;
  ca.rank = r;
  ca.rows = std::move(rows);
  ca.cols = std::move(cols);
  ca.log_volume.push_back(log_abs_det(submatrix(m, ca.rows, ca.cols)));
  // Alternate row and column phases until neither finds an improving swap,
  // then try joint swaps on small problems and go round again if one helps.
  const Eigen::MatrixXd mt = m.transpose();
  const bool joint = double(r) * r * double(m.rows()) * double(m.cols()) <= kCrossSwapBudget;
  for (int round = 0; round < 1000; ++round) {
    const int a = row_phase(m, ca.rows, ca.cols, delta, ca.log_volume);
    const int b = row_phase(mt, ca.cols, ca.rows, delta, ca.log_volume);
    ca.swaps += a + b;
    if (a + b > 0) continue;
    const int c = joint ? cross_phase(m, ca.rows, ca.cols, delta, ca.log_volume) : 0;
    ca.swaps += c;
    if (c == 0) break;
  }
  return ca;
}

}  // namespace

RankEstimate estimate_rank(const Eigen::Ref<const Eigen::MatrixXd>& m, double tol) {
  if (!(tol > 0.0 && tol < 1.0)) throw std::invalid_argument("rank tolerance must lie in (0,1)");
  RankEstimate e;
  if (m.size() == 0) {
    e.zero_matrix = true;
    return e;
  }
  e.singular_values = singular_values(m);
  const double s1 = e.singular_values[0];
  if (s1 == 0.0) {
    e.zero_matrix = true;
    return e;
  }
  for (Eigen::Index i = 0; i < e.singular_values.size(); ++i)
    if (e.singular_values[i] >= tol * s1) ++e.rank;
  return e;
}

CrossApproximation maxvol_select(const Eigen::Ref<const Eigen::MatrixXd>& m, int r, double delta) {
  if (r < 1 || r > std::min(m.rows(), m.cols()))
    throw std::invalid_argument("rank must lie in 1..min(rows, cols)");
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");

  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  const double pivot_floor = std::abs(lu.maxPivot()) * 1e-13;
  int achieved = 0;
  for (Eigen::Index i = 0; i < std::min(m.rows(), m.cols()); ++i)
    if (std::abs(lu.matrixLU()(i, i)) > pivot_floor) ++achieved;
  if (lu.maxPivot() == 0.0) achieved = 0;
  if (achieved < r)
    throw std::runtime_error("matrix rank " + std::to_string(achieved) + " is below requested " +
                             std::to_string(r));

  // P M Q = L U: the k-th pivot row is P^{-1}[k], the k-th pivot column Q[k].
  const Eigen::PermutationMatrix<Eigen::Dynamic> pinv(lu.permutationP().inverse());
  std::vector<int> rows0, cols0;
  for (int i = 0; i < r; ++i) {
    rows0.push_back(pinv.indices()[i]);
    cols0.push_back(lu.permutationQ().indices()[i]);
  }
  CrossApproximation ca = refine(m, r, delta, std::move(rows0), std::move(cols0));

  // Small problems: restart from other first pivots and keep the best volume.
  if (double(r) * r * double(m.rows()) * double(m.cols()) <= kCrossSwapBudget) {
    std::vector<std::pair<double, Eigen::Index>> entries;
    for (Eigen::Index t = 0; t < m.size(); ++t) entries.push_back({-std::abs(m(t % m.rows(), t / m.rows())), t});
    std::sort(entries.begin(), entries.end());
    const std::size_t starts = std::min<std::size_t>(entries.size(), kRestarts);
    for (std::size_t s = 1; s < starts; ++s) {
      if (entries[s].first == 0.0) break;
      std::vector<int> ri, ci;
      if (!greedy_cross(m, r, entries[s].second % m.rows(), entries[s].second / m.rows(), ri, ci)) continue;
      auto cand = refine(m, r, delta, std::move(ri), std::move(ci));
      if (cand.log_volume.back() > ca.log_volume.back() + 1e-12) ca = std::move(cand);
    }
  }
  std::sort(ca.rows.begin(), ca.rows.end());
  std::sort(ca.cols.begin(), ca.cols.end());
  return ca;
}

Certificate cross_certificate(const Eigen::Ref<const Eigen::MatrixXd>& m, const std::vector<int>& rows,
                              const std::vector<int>& cols) {
  if (rows.size() != cols.size() || rows.empty())
    throw std::invalid_argument("cross approximation needs |I| = |J| > 0");
  const Eigen::MatrixXd s = submatrix(m, rows, cols);
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(s).singularValues();
  Certificate c;
  c.condition = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1]
                                        : std::numeric_limits<double>::infinity();
  if (!(sv[sv.size() - 1] > sv[0] * 1e-15)) throw std::runtime_error("singular M_IJ");

  Eigen::MatrixXd mi(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) mi.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  Eigen::MatrixXd mj(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) mj.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  const Eigen::MatrixXd skeleton = mj * s.fullPivLu().solve(mi);
  c.residual_c = (m - skeleton).cwiseAbs().maxCoeff();

  const Eigen::VectorXd all = singular_values(m);
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  c.sigma_next = r < all.size() ? all[r] : 0.0;
  c.bound = (1.0 + static_cast<double>(r)) * c.sigma_next;
  c.ratio = c.bound > 0.0 ? c.residual_c / c.bound
                          : (c.residual_c == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  return c;
}

void certify(CrossApproximation& ca, const Eigen::Ref<const Eigen::MatrixXd>& m) {
  const auto c = cross_certificate(m, ca.rows, ca.cols);
  ca.residual_c = c.residual_c;
  ca.sigma_next = c.sigma_next;
  ca.bound = c.bound;
  ca.condition = c.condition;
}

FitResult pivotal_fit(const DesignMatrix& m, const std::vector<int>& rows, const std::vector<int>& cols,
                      const Eigen::Ref<const Eigen::VectorXd>& f_at_rows) {
  if (f_at_rows.size() != static_cast<Eigen::Index>(rows.size()))
    throw std::invalid_argument("need one target value per pivotal row");
  if (rows.size() != cols.size()) throw std::invalid_argument("|I| must equal |J|");
  for (int i : rows)
    if (i < 0 || i >= m.values.rows()) throw std::out_of_range("pivotal row out of range");
  for (int j : cols)
    if (j < 0 || j >= m.values.cols()) throw std::out_of_range("pivotal column out of range");
  const Eigen::MatrixXd s = submatrix(m.values, rows, cols);
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(s).singularValues();
  const double cond = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1]
                                              : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxPivotalCondition))
    throw std::runtime_error("pivotal submatrix ill-conditioned (cond " + std::to_string(cond) + ")");
  const Eigen::VectorXd x = s.colPivHouseholderQr().solve(f_at_rows);

  FitResult r;
  r.method = "pivotal";
  r.columns = m.columns;
  r.provenance = m.basis_id + "|" + m.points_id + "|rows=" + std::to_string(rows.size());
  r.coefficients = Eigen::VectorXd::Zero(m.values.cols());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    r.coefficients[cols[j]] = x[static_cast<Eigen::Index>(j)];
    r.support.push_back(cols[j]);
  }
  std::sort(r.support.begin(), r.support.end());
  r.train_rmse = rms_seminorm(Eigen::VectorXd(f_at_rows - s * x));
  return r;
}

std::vector<std::vector<double>> pivotal_locations(const PointSet& pts, const std::vector<int>& rows) {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (int i : rows) {
    if (i < 0 || static_cast<std::size_t>(i) >= pts.size()) throw std::out_of_range("row index out of range");
    const auto p = pts.point(static_cast<std::size_t>(i));
    out.emplace_back(p.begin(), p.end());
  }
  return out;
}

}  // namespace kst
