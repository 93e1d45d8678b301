#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "kst/bench.hpp"
#include "kst/knet.hpp"

namespace {

using namespace kst;

struct Common {
  std::string config;
  std::string out;
  std::string cache_dir;
  int d = 2;
  std::string n_list;
  bool full = false;
  bool memory_cap = false;
};

void add_common(CLI::App* app, Common& c, bool with_n_list) {
  app->add_option("--config", c.config, "experiment settings as a JSON file")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "write CSV here instead of stdout");
  app->add_option("--cache-dir", c.cache_dir, "basis cache directory (default $KST_CACHE_DIR or .kst_cache)");
  app->add_option("--d", c.d, "dimension (2 or 3)");
  app->add_flag("--memory-cap", c.memory_cap, "3D: evaluate on 61^3 instead of 101^3");
  if (with_n_list) {
    app->add_option("--n-list", c.n_list, "comma-separated n values");
    app->add_flag("--full", c.full, "long sweep (2D: 100,1000,10000; 3D: 100,300,1000)");
  }
}

ExperimentSpec make_spec(const Common& c, CLI::App* app) {
  ExperimentSpec s;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    auto j = nlohmann::json::parse(in);
    if (app->count("--d")) j["d"] = c.d;
    s = ExperimentSpec::from_json(j);
  } else {
    s = ExperimentSpec::defaults(c.d);
  }
  if (c.memory_cap) s.memory_cap = true;
  if (c.full) s.n_list = s.d == 2 ? std::vector<int>{100, 1000, 10000} : std::vector<int>{100, 300, 1000};
  if (!c.n_list.empty()) s.n_list = parse_int_list(c.n_list);
  s.validate();
  return s;
}

void emit(const Common& c, const std::string& text) {
  if (c.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(c.out, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + c.out);
  out << text;
}

UnivariateFn outer_for_rate(const std::string& g, double C, int d) {
  if (g == "sqrt") return [C](double t) { return C * std::sqrt(std::max(t, 0.0)); };
  if (g == "const") return [C](double) { return C; };
  return make_outer_function(OuterSpec::parse(g, C), d);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KST spline bases, LKB fitting and pivotal sampling experiments"};
  app.require_subcommand(1);

  Common c;

  auto* build = app.add_subcommand("build-basis", "build (or load) the cached LKB basis for one n");
  add_common(build, c, false);
  int n = 100, grid = 41, degree = 3;
  double lambda_pen = 1.0;
  std::string locations;
  build->add_option("--n", n, "B-spline density (dn functions on [0,d])");
  build->add_option("--grid", grid, "fit grid points per axis");
  build->add_option("--degree", degree, "B-spline degree");
  build->add_option("--lambda-pen", lambda_pen, "smoothing penalty weight");
  build->add_option("--locations", locations, "also write the pivotal locations CSV here");

  auto* fit = app.add_subcommand("fit", "fit one test function");
  add_common(fit, c, false);
  std::string function = "f1", method = "dls";
  bool as_json = false;
  fit->add_option("--function", function, "f1..f10");
  fit->add_option("--n", n, "B-spline density");
  fit->add_option("--method", method, "dls | pivotal | omp")->check(CLI::IsMember({"dls", "pivotal", "omp"}));
  fit->add_flag("--json", as_json, "emit the FitResult as JSON");

  auto* table = app.add_subcommand("table", "RMSE table, rows f1..f10, columns (n, method)");
  add_common(table, c, true);
  std::string methods;
  table->add_option("--methods", methods, "comma-separated subset of dls,pivotal,omp");

  auto* slopes = app.add_subcommand("slopes", "convergence slope of one function over n");
  add_common(slopes, c, true);
  slopes->add_option("--function", function, "f1..f10");
  slopes->add_option("--method", method, "dls | pivotal | omp")->check(CLI::IsMember({"dls", "pivotal", "omp"}));

  auto* pcount = app.add_subcommand("pivotal-count", "pivotal sample counts against n");
  add_common(pcount, c, true);

  auto* rate = app.add_subcommand("knet-rate", "K-network sup-error against n");
  add_common(rate, c, true);
  std::string g = "sin", knots = "quantile";
  double C = 1.0, flatness = 1.0;
  int rank = 0, rate_grid = 0;
  rate->add_option("--g", g, "sin | sqrt | linear | exp | chirp | const");
  rate->add_option("--C", C, "constant inside g");
  rate->add_option("--rank", rank, "inner-family depth (0 = default)");
  rate->add_option("--flatness", flatness, "rank-1 flatness of the inner family, in (0,1]");
  rate->add_option("--grid", rate_grid, "sup-error grid per axis (0 = 201 in 2D, 61 in 3D)");
  rate->add_option("--knots", knots, "inner knots: quantile | uniform")->check(CLI::IsMember({"quantile", "uniform"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) {
      auto s = make_spec(c, build);
      if (build->count("--grid")) s.fit_grid = grid;
      if (build->count("--degree")) s.degree = degree;
      if (build->count("--lambda-pen")) s.smoothing.lambda_pen = lambda_pen;
      s.validate();
      const auto dir = resolve_cache_dir(c.cache_dir);
      const auto b = cache_roundtrip(s, n, dir);
      std::ostringstream os;
      os << "d,n,kept_columns,rank,pivotal,residual_c,bound,cache_file\n";
      os << s.d << "," << n << "," << b.matrix.values.cols() << "," << b.cross.rank << "," << b.cross.rows.size()
         << "," << format_sci(b.cross.residual_c) << "," << format_sci(b.cross.bound) << ","
         << cache_file(dir, s, n).string() << "\n";
      emit(c, os.str());
      if (!locations.empty()) {
        const auto pts = pivotal_locations(PointSet::grid(s.d, s.fit_grid), b.cross.rows);
        std::ofstream out(locations);
        out << (s.d == 2 ? "x,y\n" : "x,y,z\n");
        out.precision(17);
        for (const auto& p : pts) {
          for (std::size_t i = 0; i < p.size(); ++i) out << (i ? "," : "") << p[i];
          out << "\n";
        }
      }
    } else if (fit->parsed()) {
      const auto s = make_spec(c, fit);
      const auto b = cache_roundtrip(s, n, resolve_cache_dir(c.cache_dir));
      const auto m = parse_method(method);
      const auto r = run_fit(b, s, test_function(s.d, function).f, m);
      if (as_json) {
        emit(c, r.to_json().dump(2) + "\n");
      } else {
        const std::size_t samples = m == Method::pivotal ? b.cross.rows.size() : b.matrix.values.rows();
        std::ostringstream os;
        os << "function,d,n,method,samples,train_rmse,eval_rmse\n"
           << function << "," << s.d << "," << n << "," << method << "," << samples << ","
           << format_sci(r.train_rmse) << "," << format_sci(*r.eval_rmse) << "\n";
        emit(c, os.str());
      }
    } else if (table->parsed()) {
      auto s = make_spec(c, table);
      if (!methods.empty()) {
        s.methods.clear();
        std::stringstream ss(methods);
        for (std::string m; std::getline(ss, m, ',');) s.methods.push_back(parse_method(m));
      }
      emit(c, run_table_experiment(s, resolve_cache_dir(c.cache_dir)).to_csv());
    } else if (slopes->parsed()) {
      auto s = make_spec(c, slopes);
      s.functions = {function};
      s.methods = {parse_method(method)};
      const auto t = run_table_experiment(s, resolve_cache_dir(c.cache_dir));
      std::vector<double> errs = t.values.front();
      const auto est = estimate_convergence_slope(s.n_list, errs);
      std::ostringstream os;
      os << "n,rmse\n";
      for (std::size_t i = 0; i < errs.size(); ++i) os << s.n_list[i] << "," << format_sci(errs[i]) << "\n";
      char buf[96];
      if (est.defined) std::snprintf(buf, sizeof buf, "# slope %.3f %s\n", est.slope, est.label().c_str());
      else std::snprintf(buf, sizeof buf, "# slope undefined %s\n", est.label().c_str());
      os << buf;
      emit(c, os.str());
    } else if (pcount->parsed()) {
      const auto s = make_spec(c, pcount);
      emit(c, pivotal_count_experiment(s, resolve_cache_dir(c.cache_dir)).to_csv());
    } else if (rate->parsed()) {
      std::vector<int> ns{8, 16, 32, 64, 128, 256, 512};
      if (!c.n_list.empty()) ns = parse_int_list(c.n_list);
      InnerFamilyOptions opts;
      opts.rank1_flatness = flatness;
      const int K = rank > 0 ? rank : default_rank(c.d, opts);
      const auto family = build_inner_family(c.d, K, opts);
      const auto r = rate_experiment(family, outer_for_rate(g, C, c.d), ns, rate_grid,
                                     knots == "uniform" ? InnerKnots::uniform : InnerKnots::value_quantile);
      std::ostringstream os;
      os << "n,sup_error\n";
      for (const auto& p : r.points) os << p.n << "," << format_sci(p.error) << "\n";
      char buf[64];
      if (r.slope_defined) std::snprintf(buf, sizeof buf, "# slope %.3f\n", r.slope);
      else std::snprintf(buf, sizeof buf, "# slope undefined\n");
      os << buf;
      emit(c, os.str());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
