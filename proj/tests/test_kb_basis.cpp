#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "kst/fitting.hpp"
#include "kst/kb_basis.hpp"

using namespace kst;

namespace {

std::shared_ptr<const InnerFamily> fam(int d, int K) {
  return std::make_shared<const InnerFamily>(build_inner_family(d, K));
}

// Clamped degree-1 basis on [0,L] with c functions: hats on a uniform grid.
double hat(double L, int c, int j, double t) {
  const double h = L / (c - 1);
  return std::max(0.0, 1.0 - std::abs(t / h - j));
}

}  // namespace

TEST_CASE("grids enumerate with the first coordinate fastest") {
  const auto g = PointSet::grid(3, 4);
  CHECK(g.size() == 64);
  CHECK(g.point(1)[0] == doctest::Approx(1.0 / 3));
  CHECK(g.point(1)[1] == 0.0);
  CHECK(g.point(4)[1] == doctest::Approx(1.0 / 3));
  CHECK(g.point(16)[2] == doctest::Approx(1.0 / 3));
  CHECK(g.point(63)[0] == 1.0);
  CHECK(g.point(63)[2] == 1.0);
  CHECK(g.axis().size() == 4);
  const auto l = PointSet::list(2, {0.1, 0.2, 0.3, 0.4});
  CHECK(l.size() == 2);
  CHECK(l.point(1)[0] == 0.3);
  CHECK_THROWS(PointSet::list(2, {0.1, 0.2, 0.3}));
  CHECK_THROWS(PointSet::list(2, {0.1, 1.2}));
}

TEST_CASE("degree-1 KB values against hand-composed hats") {
  const auto f = fam(2, 3);
  const KBBasis kb(f, 10, 1);
  CHECK(kb.size() == 20);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 300; ++t) {
    const double x[2] = {u(rng), u(rng)};
    for (int j = 0; j < 20; ++j) {
      double ref = 0;
      for (int q = 0; q < 5; ++q) ref += hat(2.0, 20, j, f->z(q, x));
      CHECK(kb.eval(j, x) == doctest::Approx(ref).epsilon(1e-12).scale(1.0));
    }
  }
  const double o[2] = {0, 0};
  CHECK(kb.eval(0, o) == 5.0);
  for (int j = 2; j < 20; ++j) CHECK(kb.eval(j, o) == 0.0);
  CHECK_THROWS_AS(kb.eval(20, o), std::out_of_range);
}

TEST_CASE("raw design matrix rows sum to 2d+1 and entries lie in [0, 2d+1]") {
  for (int d : {2, 3}) {
    const KBBasis kb(fam(d, d == 2 ? 4 : 3), 100);
    const auto m = assemble_design_matrix(kb, PointSet::grid(d, d == 2 ? 41 : 21));
    CHECK(m.values.cols() == 100 * d);
    const double s = 2.0 * d + 1;
    CHECK((m.values.rowwise().sum().array() - s).abs().maxCoeff() <= 1e-10);
    CHECK(m.values.minCoeff() >= 0.0);
    CHECK(m.values.maxCoeff() <= s + 1e-12);
  }
}

TEST_CASE("assembly matches per-column evaluation") {
  const KBBasis kb(fam(2, 2), 30);
  const auto one = PointSet::list(2, {0.37, 0.81});
  const auto m = assemble_design_matrix(kb, one);
  REQUIRE(m.values.rows() == 1);
  for (int j = 0; j < kb.size(); ++j) CHECK(m.values(0, j) == doctest::Approx(kb.eval(j, one.point(0))).epsilon(1e-14).scale(1.0));
  CHECK_THROWS_AS(assemble_design_matrix(kb, PointSet::grid(2, 41), 1000), std::length_error);
  CHECK_THROWS(assemble_design_matrix(kb, PointSet::grid(3, 3)));
}

TEST_CASE("pruning") {
  const KBBasis kb(fam(2, 4), 100);
  const auto raw = assemble_design_matrix(kb, PointSet::grid(2, 41));
  int zero = 0;
  for (Eigen::Index j = 0; j < raw.values.cols(); ++j) zero += raw.values.col(j).norm() == 0.0;
  CHECK(zero > 0);

  const auto p0 = prune_near_zero_columns(raw, 0.0);
  CHECK(p0.values.cols() == raw.values.cols() - zero);
  for (std::size_t k = 0; k < p0.columns.size(); ++k)
    CHECK(p0.values.col(static_cast<Eigen::Index>(k)) == raw.values.col(p0.columns[k]));

  const auto p = prune_near_zero_columns(raw);
  const auto pp = prune_near_zero_columns(p);
  CHECK(pp.columns == p.columns);
  CHECK(pp.values == p.values);

  DesignMatrix small;
  small.values = Eigen::MatrixXd::Ones(4, 3);
  small.values.col(1).setZero();
  small.columns = {0, 1, 2};
  const auto s = prune_near_zero_columns(small, 0.0);
  CHECK(s.columns == std::vector<int>{0, 2});
  small.values.setZero();
  CHECK_THROWS(prune_near_zero_columns(small, 0.0));

  const KBBasis big(fam(2, 4), 1000);
  const auto pb = prune_near_zero_columns(assemble_design_matrix(big, PointSet::grid(2, 41)));
  CHECK(static_cast<int>(pb.columns.size()) < 2000);
}

TEST_CASE("nonzero KB columns are independent at sample resolution") {
  const auto r2 = independence_check(KBBasis(fam(2, 4), 5), PointSet::grid(2, 41));
  CHECK(r2.independent());
  CHECK(r2.columns > 0);
  const auto r3 = independence_check(KBBasis(fam(3, 3), 20), PointSet::grid(3, 21));
  CHECK(r3.independent());

  auto m = prune_near_zero_columns(assemble_design_matrix(KBBasis(fam(2, 4), 5), PointSet::grid(2, 41)));
  Eigen::MatrixXd dup(m.values.rows(), m.values.cols() + 1);
  dup << m.values, m.values.col(0);
  const auto bad = independence_check(dup);
  CHECK_FALSE(bad.independent());
  CHECK(bad.rank == bad.columns - 1);
}

TEST_CASE("best KB fit of a smooth superposition improves as n doubles") {
  const auto f = fam(2, 4);
  const auto grid = PointSet::grid(2, 41);
  Eigen::VectorXd target(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i)
    target[static_cast<Eigen::Index>(i)] = forward_superpose(*f, [](double t) { return std::sin(2 * t); }, grid.point(i));
  double prev = INFINITY;
  for (int n : {10, 20, 40, 80}) {
    const auto m = prune_near_zero_columns(assemble_design_matrix(KBBasis(f, n), grid));
    const auto r = dls_fit(m, target);
    CHECK(r.train_rmse <= prev * (1 + 1e-9));
    prev = r.train_rmse;
  }
}
