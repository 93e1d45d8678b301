#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>

#include "kst/bench.hpp"

using namespace kst;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

double r2(int k, double x, double y) {
  switch (k) {
    case 1: return (1 + 2 * x + 3 * y) / 6;
    case 2: return (x * x + y * y) / 2;
    case 3: return x * y;
    case 4: return (std::pow(x, 3) + std::pow(y, 3)) / 2;
    case 5: return 1 / (1 + x * x + y * y);
    case 6: return std::cos(1 / (1 + x * y));
    case 7: return std::sin(2 * pi * (x + y));
    case 8: return std::sin(pi * x) * std::sin(pi * y);
    case 9: return std::exp(-x * x - y * y);
    default: return std::max(x - 0.5, 0.0) * std::max(y - 0.5, 0.0);
  }
}

double r3(int k, double x, double y, double z) {
  switch (k) {
    case 1: return (1 + 2 * x + 3 * y + 4 * z) / 10;
    case 2: return (x * x + y * y + z * z) / 3;
    case 3: return (x * y + y * z + z * x) / 3;
    case 4: return (std::pow(x, 3) * std::pow(y, 3) + std::pow(y, 3) * std::pow(z, 3)) / 2;
    case 5: return (x + y + z) / (1 + x * x + y * y + z * z);
    case 6: return std::cos(1 / (1 + x * y * z));
    case 7: return std::sin(2 * pi * (x + y + z));
    case 8: return std::sin(pi * x) * std::sin(pi * y) * std::sin(pi * z);
    case 9: return std::exp(-x * x - y * y - z * z);
    default: return std::max(x - 0.5, 0.0) * std::max(y - 0.5, 0.0) * std::max(z - 0.5, 0.0);
  }
}

ExperimentSpec small_spec() {
  auto s = ExperimentSpec::defaults(2);
  s.n_list = {12};
  s.eval_grid = 51;
  return s;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("kst_test_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("registered test functions match hand-coded duplicates") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int d : {2, 3}) {
    const auto& fs = test_functions(d);
    REQUIRE(fs.size() == 10);
    for (int k = 1; k <= 10; ++k) {
      const auto& tf = fs[static_cast<std::size_t>(k - 1)];
      CHECK(tf.id == "f" + std::to_string(k));
      CHECK(tf.dim == d);
      CHECK(&test_function(d, tf.id) == &tf);
      for (int t = 0; t < 100; ++t) {
        const double p[3] = {u(rng), u(rng), u(rng)};
        const double ref = d == 2 ? r2(k, p[0], p[1]) : r3(k, p[0], p[1], p[2]);
        CHECK(tf.f(std::span<const double>(p, static_cast<std::size_t>(d))) == doctest::Approx(ref).epsilon(1e-14).scale(1.0));
      }
    }
  }
  CHECK_THROWS(test_function(2, "f11"));
  CHECK_THROWS(test_functions(4));
}

TEST_CASE("slope classification") {
  const std::vector<int> n{100, 200, 400};
  const auto lip = estimate_convergence_slope(n, {1e-2, 5e-3, 2.5e-3});
  CHECK(lip.slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(lip.cls == RateClass::lipschitz);
  CHECK(lip.label() == "K-Lipschitz");

  std::vector<double> h;
  for (int k : n) h.push_back(0.7 / std::sqrt(k));
  const auto hol = estimate_convergence_slope(n, h);
  CHECK(hol.slope == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(hol.cls == RateClass::holder);
  CHECK(hol.label() == "K-Holder(0.50)");

  const auto flat = estimate_convergence_slope(n, {1e-3, 1e-3, 2e-3});
  CHECK(flat.cls == RateClass::non_converging);
  CHECK(flat.label() == "non-converging");

  const auto ex = estimate_convergence_slope(n, {1e-3, 0.0, 1e-5});
  CHECK_FALSE(ex.defined);
  CHECK(ex.cls == RateClass::exact);
  CHECK(ex.label() == "exact");

  CHECK_THROWS(estimate_convergence_slope({100, 200}, {1e-2, 5e-3}));
  CHECK_THROWS(estimate_convergence_slope(n, {1e-2, 5e-3}));
  CHECK_THROWS(estimate_convergence_slope(n, {1e-2, -5e-3, 1e-3}));
}

TEST_CASE("spec parsing and JSON round trip") {
  CHECK(parse_int_list("100,200, 400") == std::vector<int>{100, 200, 400});
  CHECK_THROWS(parse_int_list(""));
  CHECK_THROWS(parse_int_list("1,x"));
  CHECK(format_sci(1.67e-5) == "1.67e-05");
  CHECK(format_sci(0.0) == "0.00e+00");
  CHECK(parse_method("full") == Method::dls);
  CHECK(parse_method("pivotal") == Method::pivotal);
  CHECK(to_string(Method::omp) == "omp");
  CHECK_THROWS(parse_method("lasso"));

  CHECK(ExperimentSpec::defaults(2).smoothing.segments == 20);
  CHECK(ExperimentSpec::defaults(3).smoothing.segments == 10);
  CHECK(ExperimentSpec::defaults(3).effective_rank() == 3);
  CHECK(ExperimentSpec::defaults(2).effective_rank() == 4);
  auto cap = ExperimentSpec::defaults(3);
  CHECK(cap.effective_eval_grid() == 101);
  cap.memory_cap = true;
  CHECK(cap.effective_eval_grid() == 61);

  auto s = ExperimentSpec::defaults(3);
  s.n_list = {100, 300};
  s.methods = {Method::dls, Method::omp};
  s.functions = {"f2", "f7"};
  s.smoothing.lambda_pen = 0.5;
  s.omp_sparsity = 12;
  const auto back = ExperimentSpec::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  CHECK(back.n_list == s.n_list);
  CHECK(back.smoothing.lambda_pen == 0.5);

  const auto partial = ExperimentSpec::from_json(nlohmann::json{{"d", 3}, {"n_list", {100}}});
  CHECK(partial.smoothing.segments == 10);
  CHECK(partial.fit_grid == 41);

  auto bad = ExperimentSpec::defaults(2);
  bad.n_list = {0};
  CHECK_THROWS(bad.validate());
  bad = ExperimentSpec::defaults(2);
  bad.d = 4;
  CHECK_THROWS(bad.validate());
  bad = ExperimentSpec::defaults(2);
  bad.functions = {"f12"};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("config hash tracks every setting that changes the basis") {
  const auto s = small_spec();
  const auto h = basis_config_hash(s, 12);
  CHECK(basis_config_hash(s, 12) == h);
  CHECK(basis_config_hash(s, 13) != h);
  auto t = s;
  t.smoothing.lambda_pen = 2;
  CHECK(basis_config_hash(t, 12) != h);
  t = s;
  t.fit_grid = 31;
  CHECK(basis_config_hash(t, 12) != h);
  t = s;
  t.rank_tol = 1e-6;
  CHECK(basis_config_hash(t, 12) != h);
  // fitting-only settings share the cached basis
  t = s;
  t.eval_grid = 71;
  t.methods = {Method::omp};
  CHECK(basis_config_hash(t, 12) == h);
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("basis cache") {
  const TempDir tmp("cache");
  const auto spec = small_spec();
  const auto built = build_basis(spec, 12);
  CHECK_FALSE(built.from_cache);
  const auto file = cache_file(tmp.path, spec, 12);
  CHECK(file.filename().string().rfind("lkb_d2_n12_", 0) == 0);
  CHECK(file.extension() == ".lkbc");

  write_basis_cache(file, built, spec);
  const auto loaded = read_basis_cache(file, spec, 12);
  CHECK(loaded.from_cache);
  CHECK(loaded.matrix.values == built.matrix.values);
  CHECK(loaded.matrix.columns == built.matrix.columns);
  CHECK(loaded.lkb->coefficients() == built.lkb->coefficients());
  CHECK(loaded.lkb->provenance() == built.lkb->provenance());
  CHECK(loaded.cross.rows == built.cross.rows);
  CHECK(loaded.cross.cols == built.cross.cols);
  CHECK(loaded.cross.bound == built.cross.bound);

  SUBCASE("header mismatches are rejected") {
    auto d3 = ExperimentSpec::defaults(3);
    d3.n_list = {12};
    CHECK_THROWS_AS(read_basis_cache(file, d3, 12), std::runtime_error);
    CHECK_THROWS_AS(read_basis_cache(file, spec, 13), std::runtime_error);
    auto other = spec;
    other.smoothing.lambda_pen = 3;
    CHECK_THROWS_AS(read_basis_cache(file, other, 12), std::runtime_error);
  }
  SUBCASE("truncation and corruption") {
    const std::string bytes = slurp(file);
    {
      std::ofstream out(file, std::ios::binary | std::ios::trunc);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
    }
    CHECK_THROWS_AS(read_basis_cache(file, spec, 12), std::runtime_error);
    {
      std::string bad = bytes;
      bad[0] = 'X';
      std::ofstream out(file, std::ios::binary | std::ios::trunc);
      out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    }
    CHECK_THROWS_AS(read_basis_cache(file, spec, 12), std::runtime_error);

    // cache_roundtrip rebuilds and warns
    std::ostringstream err;
    auto* old = std::cerr.rdbuf(err.rdbuf());
    const auto again = cache_roundtrip(spec, 12, tmp.path);
    std::cerr.rdbuf(old);
    CHECK(err.str().find("warning: rebuilding") != std::string::npos);
    CHECK_FALSE(again.from_cache);
    CHECK(again.matrix.values == built.matrix.values);
    CHECK(slurp(file) == bytes);
    CHECK(cache_roundtrip(spec, 12, tmp.path).from_cache);
  }
}

TEST_CASE("cache directory precedence") {
  CHECK(resolve_cache_dir("flagdir") == fs::path("flagdir"));
  setenv("KST_CACHE_DIR", "/tmp/envdir", 1);
  CHECK(resolve_cache_dir("flagdir") == fs::path("flagdir"));
  CHECK(resolve_cache_dir("") == fs::path("/tmp/envdir"));
  unsetenv("KST_CACHE_DIR");
  CHECK(resolve_cache_dir("") == fs::path(".kst_cache"));
}

TEST_CASE("table experiment") {
  auto spec = small_spec();
  const std::vector<TestFunction> fns{
      {"zero", 2, [](std::span<const double>) { return 0.0; }, "0"},
      test_function(2, "f1"),
  };
  const auto t = run_table_experiment(spec, "", fns);
  REQUIRE(t.values.size() == 2);
  REQUIRE(t.columns.size() == 2);
  CHECK(t.at("zero", 12, Method::dls) == 0.0);
  CHECK(t.at("zero", 12, Method::pivotal) == 0.0);
  CHECK(t.at("f1", 12, Method::dls) > 0.0);
  CHECK_THROWS(t.at("f1", 13, Method::dls));

  const auto csv = t.to_csv();
  CHECK(csv.rfind("# ", 0) == 0);
  CHECK(csv.find("function,n=12 full 1681,n=12 pivotal ") != std::string::npos);
  CHECK(csv.find("\nzero,0.00e+00,0.00e+00\n") != std::string::npos);
  CHECK(run_table_experiment(spec, "", fns).to_csv() == csv);

  spec.methods = {Method::omp};
  spec.omp_sparsity = 5;
  const auto o = run_table_experiment(spec, "", fns);
  CHECK(o.columns.size() == 1);
  CHECK(o.at("f1", 12, Method::omp) >= t.at("f1", 12, Method::dls) * (1 - 1e-12));
}

TEST_CASE("pivotal counts over a short sweep") {
  auto spec = ExperimentSpec::defaults(2);
  spec.n_list = {10, 20, 40};
  const auto pc = pivotal_count_experiment(spec, "");
  REQUIRE(pc.counts.size() == 3);
  CHECK(pc.non_decreasing);
  CHECK(pc.slope <= 2.0);
  CHECK(pc.to_csv().rfind("n,pivotal\n10,", 0) == 0);
}
