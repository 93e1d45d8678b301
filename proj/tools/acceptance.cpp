// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when
// any criterion fails, or with --expect-red when the failing set differs from
// the given list. --full adds the n = 10000 sweep of criterion 12.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "kst/bench.hpp"
#include "kst/knet.hpp"
#include "kst/univariate_splines.hpp"
#include "oracles.hpp"

using namespace kst;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Reference full-grid RMSEs, f1..f10.
const double kRef2dN100[10] = {1.67e-05, 4.19e-04, 1.09e-04, 7.67e-04, 2.28e-04,
                                2.52e-04, 7.05e-02, 1.50e-03, 3.49e-04, 2.02e-03};
const double kRef2dN1000[10] = {5.79e-06, 1.17e-04, 3.57e-05, 2.10e-04, 6.69e-05,
                                 7.97e-05, 7.80e-03, 3.73e-04, 8.25e-05, 7.77e-04};
const double kRef3dN100[10] = {8.27e-06, 4.42e-05, 1.24e-05, 2.93e-04, 1.31e-04,
                                1.24e-04, 1.65e-02, 2.47e-03, 1.43e-04, 3.21e-04};

struct Context {
  fs::path cache;
  std::string kstbench;
  bool full = false;
  std::optional<Table> table2d;  // n = 100, 1000 with dls and pivotal
  std::optional<PreparedBasis> basis2d;
};

const Table& table2d(Context& c) {
  if (!c.table2d) {
    auto spec = ExperimentSpec::defaults(2);
    spec.n_list = {100, 1000};
    c.table2d = run_table_experiment(spec, c.cache);
  }
  return *c.table2d;
}

Outcome inner_functions(Context&) {
  long checked_cubes = 0;
  for (int d : {2, 3})
    for (int K = 1; K <= 3; ++K) {
      const auto fam = build_inner_family(d, K);
      for (int q = 0; q < fam.count(); ++q) {
        const auto xs = fam.table(q).xs(), ys = fam.table(q).ys();
        for (std::size_t i = 1; i < xs.size(); ++i)
          if (!(xs[i] > xs[i - 1] && ys[i] > ys[i - 1]))
            return {false, "phi not strictly increasing at d=" + std::to_string(d) + " K=" + std::to_string(K)};
      }
      for (int k = 1; k <= K; ++k) {
        // missed-family counts are constant between consecutive town endpoints
        std::vector<double> cuts{0.0, 1.0};
        for (int q = 0; q < fam.count(); ++q)
          for (const auto& t : fam.towns(k, q)) {
            cuts.push_back(t.lo);
            cuts.push_back(t.hi);
          }
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        std::vector<double> probes(cuts);
        for (std::size_t i = 1; i < cuts.size(); ++i) probes.push_back(0.5 * (cuts[i - 1] + cuts[i]));
        for (double x : probes) {
          int missed = 0;
          for (int q = 0; q < fam.count(); ++q) missed += !fam.in_town(k, q, x);
          if (missed > 1) return {false, "x=" + fmt("%.17g", x) + " misses " + std::to_string(missed) + " families"};
        }
        for (int q = 0; q < fam.count(); ++q) {
          const auto r = oracle::town_cube_images(fam, k, q);
          checked_cubes += static_cast<long>(r.cubes);
          if (!r.disjoint)
            return {false, "overlapping town cube images at d=" + std::to_string(d) + " K=" + std::to_string(K) +
                               " k=" + std::to_string(k) + " q=" + std::to_string(q)};
        }
      }
    }
  return {true, "d=2,3 K=1..3 monotone, gap-miss <= 1, " + std::to_string(checked_cubes) + " cube images disjoint"};
}

Outcome partition_of_unity(Context&) {
  double worst = 0;
  for (int d : {2, 3}) {
    const KBBasis kb(std::make_shared<const InnerFamily>(build_inner_family(d, default_rank(d))), 100);
    const auto m = assemble_design_matrix(kb, PointSet::grid(d, 41));
    worst = std::max(worst, (m.values.rowwise().sum().array() - (2.0 * d + 1)).abs().maxCoeff());
  }
  return {worst <= 1e-10, "max |row sum - (2d+1)| = " + fmt("%.2e", worst)};
}

Outcome relu_roundtrip(Context&) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2), gap(0.05, 1.0);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x{u(rng)}, v{u(rng)};
    for (int i = 1; i < 2 + trial % 40; ++i) {
      x.push_back(x.back() + gap(rng));
      v.push_back(u(rng));
    }
    const LinearSpline s(x, v);
    const auto r = linear_spline_to_relu(s);
    for (int i = 0; i < 10000; ++i) {
      const double t = x.front() + (x.back() - x.front()) * i / 9999.0;
      worst = std::max(worst, std::abs(r(t) - s(t)));
    }
  }
  return {worst <= 1e-12, "max round-trip error " + fmt("%.2e", worst)};
}

const std::vector<int> kRateN{8, 16, 32, 64, 128, 256, 512};

// The rate harness: d = 2, default rank, rank-1 flatness 0.1.
const InnerFamily& rate_family() {
  static const InnerFamily f = [] {
    InnerFamilyOptions o;
    o.rank1_flatness = 0.1;
    return build_inner_family(2, default_rank(2, o), o);
  }();
  return f;
}

Outcome knet_rate(Context&) {
  const auto r = rate_experiment(rate_family(), [](double t) { return std::sin(t); }, kRateN);
  bool bounded = true;
  for (const auto& p : r.points) bounded &= p.error <= 25.0 / p.n;
  const bool pass = r.slope_defined && r.slope <= -0.9 && bounded;
  return {pass, "slope " + fmt("%.3f", r.slope) + ", every error <= 25/n: " + (bounded ? "yes" : "no") +
                    " (n=512 error " + fmt("%.2e", r.points.back().error) + ")"};
}

Outcome holder_rate(Context&) {
  const auto g = [](double t) { return std::sqrt(std::max(t, 0.0)); };
  const auto r = rate_experiment(rate_family(), g, kRateN);
  const auto def = rate_experiment(build_inner_family(2, default_rank(2)), g, kRateN);
  const bool pass = r.slope_defined && std::abs(r.slope + 0.5) <= 0.15;
  return {pass, "slope " + fmt("%.3f", r.slope) + " (flatness 0.1 family; default family gives " +
                    fmt("%.3f", def.slope) + ")"};
}

Outcome smoothing_bound(Context&) {
  using Fn2 = std::function<double(double, double)>;
  const std::vector<Fn2> fs{
      [](double x, double y) { return std::sin(2 * x + y); },
      [](double x, double y) { return std::exp(-x * x - y * y); },
      [](double x, double y) { return x * x * y + 0.5 * y * y; },
      [](double x, double y) { return 1 / (1 + x * x + y * y); },
      [](double x, double y) { return std::cos(3 * x) * std::sin(2 * y); },
  };
  const auto g = PointSet::grid(2, 41);
  SmoothingConfig cfg;
  const double h = 1.0 / cfg.segments;
  auto sample = [&](const Fn2& f) {
    Eigen::VectorXd v(41 * 41);
    for (std::size_t i = 0; i < g.size(); ++i) v[static_cast<Eigen::Index>(i)] = f(g.point(i)[0], g.point(i)[1]);
    return v;
  };
  auto err = [](const SmoothSurface& s, const Fn2& f) {
    std::vector<double> r;
    for (int i = 0; i <= 100; ++i)
      for (int j = 0; j <= 100; ++j) {
        const double x[2] = {i / 100.0, j / 100.0};
        r.push_back(s(x) - f(x[0], x[1]));
      }
    return rms_seminorm(r);
  };
  // E2(f) by midpoint quadrature of central second differences
  auto energy = [](const Fn2& f) {
    const double e = 1e-4;
    double acc = 0;
    for (int i = 0; i < 200; ++i)
      for (int j = 0; j < 200; ++j) {
        const double x = (i + 0.5) / 200, y = (j + 0.5) / 200;
        const double fxx = (f(x + e, y) - 2 * f(x, y) + f(x - e, y)) / (e * e);
        const double fyy = (f(x, y + e) - 2 * f(x, y) + f(x, y - e)) / (e * e);
        const double fxy = (f(x + e, y + e) - f(x + e, y - e) - f(x - e, y + e) + f(x - e, y - e)) / (4 * e * e);
        acc += fxx * fxx + 2 * fxy * fxy + fyy * fyy;
      }
    return acc / (200.0 * 200.0);
  };
  std::vector<double> pen;
  double c = 0;
  for (const auto& f : fs) {
    pen.push_back(std::sqrt(cfg.lambda_pen * energy(f)));
    c = std::max(c, std::max(0.0, err(denoise_samples(sample(f), g, cfg), f) - pen.back()) / (h * h));
  }
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  int ok = 0;
  double worst = 0;
  for (std::size_t k = 0; k < fs.size(); ++k) {
    Eigen::VectorXd eps = Eigen::VectorXd::Zero(41 * 41);
    for (Eigen::Index i = 0; i < eps.size(); ++i)
      if (u(rng) < 0.05) eps[i] = u(rng) < 0.5 ? -0.5 : 0.5;
    const double e = err(denoise_samples(sample(fs[k]) + eps, g, cfg), fs[k]);
    const double bound = c * h * h + 2 * rms_seminorm(eps) + pen[k];
    ok += e <= bound;
    worst = std::max(worst, e / bound);
  }
  return {ok == 5, std::to_string(ok) + "/5 within bound, worst error/bound " + fmt("%.3f", worst) + ", C = " + fmt("%.3g", c)};
}

Outcome rmse_2d(Context& c) {
  const auto& t = table2d(c);
  int within = 0, two_sided = 0, decreasing = 0;
  double worst = 0;
  for (int k = 0; k < 10; ++k) {
    const std::string id = "f" + std::to_string(k + 1);
    const double a = t.at(id, 100, Method::dls), b = t.at(id, 1000, Method::dls);
    for (auto [v, ref] : {std::pair{a, kRef2dN100[k]}, std::pair{b, kRef2dN1000[k]}}) {
      within += v <= 100 * ref;
      two_sided += v <= 100 * ref && v >= ref / 100;
      worst = std::max(worst, v / ref);
    }
    decreasing += b <= a;
  }
  return {within == 20 && decreasing >= 8,
          std::to_string(within) + "/20 cells <= 100x reference (worst ratio " + fmt("%.2f", worst) + ", " +
              std::to_string(two_sided) + "/20 also >= reference/100), non-increasing " +
              std::to_string(decreasing) + "/10"};
}

Outcome rmse_3d(Context& c) {
  auto spec = ExperimentSpec::defaults(3);
  spec.n_list = {100};
  spec.methods = {Method::dls};
  const auto t = run_table_experiment(spec, c.cache);
  int within = 0, two_sided = 0;
  double worst = 0;
  for (int k = 0; k < 10; ++k) {
    const double v = t.at("f" + std::to_string(k + 1), 100, Method::dls);
    within += v <= 100 * kRef3dN100[k];
    two_sided += v <= 100 * kRef3dN100[k] && v >= kRef3dN100[k] / 100;
    worst = std::max(worst, v / kRef3dN100[k]);
  }
  return {within == 10, std::to_string(within) + "/10 <= 100x reference (worst ratio " + fmt("%.1f", worst) + ", " +
                            std::to_string(two_sided) + "/10 also >= reference/100), eval grid " +
                            std::to_string(spec.effective_eval_grid()) + "^3"};
}

Outcome pivotal_efficiency(Context& c) {
  const auto& t = table2d(c);
  auto spec = ExperimentSpec::defaults(2);
  const int count = static_cast<int>(cache_roundtrip(spec, 100, c.cache).cross.rows.size());
  int ok = 0;
  double worst = 0;
  for (int k = 1; k <= 10; ++k) {
    const std::string id = "f" + std::to_string(k);
    const double ratio = t.at(id, 100, Method::pivotal) / t.at(id, 100, Method::dls);
    ok += ratio <= 10;
    worst = std::max(worst, ratio);
  }
  return {count <= 110 && ok >= 8, "|I| = " + std::to_string(count) + ", " + std::to_string(ok) +
                                       "/10 pivotal within 10x of full (worst " + fmt("%.1f", worst) + "x)"};
}

Outcome maxvol_oracle(Context&) {
  std::mt19937 rng(10);
  std::normal_distribution<double> n;
  int ok = 0;
  for (int t = 0; t < 50; ++t) {
    const Eigen::MatrixXd m = Eigen::MatrixXd::NullaryExpr(8, 6, [&] { return n(rng); });
    const auto ca = maxvol_select(m, 2);
    const double v = std::abs(m(ca.rows, ca.cols).eval().determinant());
    ok += v >= oracle::max_volume(m, 2) / std::pow(1 + kMaxvolDelta, 2);
  }
  int cert = 0;
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(50, 5, [&] { return n(rng); });
    const Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(5, 20, [&] { return n(rng); });
    const Eigen::MatrixXd e = Eigen::MatrixXd::NullaryExpr(50, 20, [&] { return n(rng); });
    const Eigen::MatrixXd m = a * b + 1e-6 * e;
    auto ca = maxvol_select(m, 5);
    certify(ca, m);
    cert += ca.residual_c <= 3 * ca.bound;
    worst = std::max(worst, ca.residual_c / ca.bound);
  }
  return {ok == 50 && cert == 20, std::to_string(ok) + "/50 volumes within (1+delta)^2 of the maximum, " +
                                      std::to_string(cert) + "/20 certificates hold (worst residual/bound " +
                                      fmt("%.3f", worst) + ")"};
}

// Exact recovery condition for OMP on support s: max over j outside s of
// |pinv(Phi_s) phi_j|_1 < 1. Invariant under left orthogonal maps, so it is
// evaluated on the R factor of the normalized matrix.
double erc(const Eigen::MatrixXd& r, const std::vector<int>& s) {
  const Eigen::MatrixXd p = r(Eigen::all, s).completeOrthogonalDecomposition().pseudoInverse() * r;
  double w = 0;
  for (Eigen::Index j = 0; j < r.cols(); ++j)
    if (std::find(s.begin(), s.end(), static_cast<int>(j)) == s.end()) w = std::max(w, p.col(j).lpNorm<1>());
  return w;
}

Outcome omp_recovery(Context& c) {
  const auto b = cache_roundtrip(ExperimentSpec::defaults(2), 100, c.cache);
  const auto& m = b.matrix;
  const Eigen::Index cols = m.values.cols();
  Eigen::MatrixXd unit = m.values;
  for (Eigen::Index j = 0; j < cols; ++j) unit.col(j).normalize();
  const Eigen::MatrixXd gram = (unit.transpose() * unit).cwiseAbs();
  const Eigen::MatrixXd r =
      Eigen::HouseholderQR<Eigen::MatrixXd>(unit).matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  // "well separated": each new column is the least coherent with the set so
  // far among 32 random candidates
  std::mt19937 rng(12);
  std::uniform_real_distribution<double> mag(1, 2);
  int ok = 0, certified = 0;
  double worst = 0, worst_coh = 0;
  for (int t = 0; t < 20; ++t) {
    std::vector<int> s{static_cast<int>(rng() % static_cast<unsigned>(cols))};
    double coh = 0;
    while (s.size() < 5) {
      int best = -1;
      double best_c = 2;
      for (int k = 0; k < 32; ++k) {
        const int j = static_cast<int>(rng() % static_cast<unsigned>(cols));
        if (std::find(s.begin(), s.end(), j) != s.end()) continue;
        double cj = 0;
        for (int i : s) cj = std::max(cj, gram(i, j));
        if (cj < best_c) best_c = cj, best = j;
      }
      if (best < 0) continue;
      s.push_back(best);
      coh = std::max(coh, best_c);
    }
    std::sort(s.begin(), s.end());
    worst_coh = std::max(worst_coh, coh);
    certified += erc(r, s) < 1;
    Eigen::VectorXd f = Eigen::VectorXd::Zero(m.values.rows());
    for (int j : s) f += (rng() % 2 ? 1.0 : -1.0) * mag(rng) * m.values.col(j);
    const auto fit = omp_fit(m, f, {.sparsity = 5});
    auto got = fit.support;
    std::sort(got.begin(), got.end());
    ok += got == s && fit.train_rmse <= 1e-8;
    worst = std::max(worst, fit.train_rmse);
  }
  return {ok == 20, std::to_string(ok) + "/20 supports recovered, worst residual " + fmt("%.2e", worst) +
                        "; in-set coherence up to " + fmt("%.3f", worst_coh) + ", " + std::to_string(certified) +
                        "/20 sets satisfy the exact recovery condition"};
}

Outcome slopes(Context& c) {
  auto spec = ExperimentSpec::defaults(2);
  spec.methods = {Method::dls};
  spec.functions = {"f4"};
  const auto t = run_table_experiment(spec, c.cache);
  std::vector<double> e;
  for (int n : spec.n_list) e.push_back(t.at("f4", n, Method::dls));
  const auto s = estimate_convergence_slope(spec.n_list, e);
  const bool short_ok = s.defined && s.slope <= -0.3;
  std::string detail = "short sweep slope " + fmt("%.3f", s.slope) + " (" + s.label() + ")";
  if (!c.full) return {short_ok, detail + "; full sweep not run (--full)"};
  spec.n_list = {100, 1000, 10000};
  const auto tf = run_table_experiment(spec, c.cache);
  std::vector<double> ef;
  for (int n : spec.n_list) ef.push_back(tf.at("f4", n, Method::dls));
  const auto sf = estimate_convergence_slope(spec.n_list, ef);
  const bool full_ok = sf.defined && std::abs(sf.slope + 0.59) <= 0.25;
  detail += "; full sweep errors " + format_sci(ef[0]) + ", " + format_sci(ef[1]) + ", " + format_sci(ef[2]) +
            (sf.defined ? ", slope " + fmt("%.3f", sf.slope) : ", slope undefined");
  return {short_ok && full_ok, detail};
}

Outcome determinism(Context& c) {
  const fs::path a = c.cache / "det_a.csv", b = c.cache / "det_b.csv";
  for (const auto& out : {a, b}) {
    const std::string cmd = "\"" + c.kstbench + "\" table --d 2 --n-list 100 --cache-dir \"" + c.cache.string() +
                            "\" --out \"" + out.string() + "\"";
    if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string x = slurp(a), y = slurp(b);
  return {!x.empty() && x == y, std::to_string(x.size()) + " bytes, " + (x == y ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  Context ctx;
  std::string cache = "acceptance_cache";
  ctx.kstbench = (fs::path(argv[0]).parent_path() / "kstbench").string();
  std::vector<int> only;
  app.add_flag("--full", ctx.full, "include the n = 10000 slope sweep");
  app.add_option("--cache-dir", cache, "basis cache directory");
  app.add_option("--kstbench", ctx.kstbench, "path to the kstbench executable");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  std::vector<int> expect_red;
  app.add_option("--expect-red", expect_red, "criteria known to fail; exit 0 iff exactly these fail")
      ->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  ctx.cache = cache;
  fs::create_directories(ctx.cache);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria{
      {"inner functions", inner_functions},
      {"partition of unity", partition_of_unity},
      {"ReLU equivalence", relu_roundtrip},
      {"K-network rate", knet_rate},
      {"Holder rate", holder_rate},
      {"smoothing bound", smoothing_bound},
      {"2D RMSE reference", rmse_2d},
      {"3D RMSE reference", rmse_3d},
      {"pivotal efficiency", pivotal_efficiency},
      {"maxvol oracle", maxvol_oracle},
      {"OMP planted recovery", omp_recovery},
      {"slope classification", slopes},
      {"determinism", determinism},
  };
  int failed = 0;
  std::vector<int> red;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    if (!o.pass) red.push_back(id);
    std::printf("%2d %-22s %s  %s  [%.1fs]\n", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  if (!expect_red.empty()) {
    // an expected-red criterion that was not run still counts as expected
    std::vector<int> want;
    for (int id : expect_red)
      if (only.empty() || std::find(only.begin(), only.end(), id) != only.end()) want.push_back(id);
    std::sort(want.begin(), want.end());
    if (red != want) std::printf("failing set differs from --expect-red\n");
    else if (!red.empty()) std::printf("%d criteria red as expected\n", failed);
    return red == want ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
