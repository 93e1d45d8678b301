#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "kst/fitting.hpp"
#include "kst/inner_functions.hpp"
#include "kst/kb_basis.hpp"
#include "kst/pivotal.hpp"
#include "kst/smoothing.hpp"

namespace kst {

struct TestFunction {
  std::string id;  // "f1".."f10"
  int dim = 0;
  MultivariateFn f;
  std::string formula;
};

/// The ten benchmark functions for d = 2 or 3, in order f1..f10.
const std::vector<TestFunction>& test_functions(int d);
const TestFunction& test_function(int d, const std::string& id);

enum class Method { dls, pivotal, omp };
std::string to_string(Method m);
Method parse_method(const std::string& s);

struct ExperimentSpec {
  int d = 2;
  std::vector<int> n_list{100, 200, 400, 1000};
  int fit_grid = 41;
  int eval_grid = 101;
  bool memory_cap = false;  // d=3: evaluate on 61^3 instead of 101^3
  std::vector<Method> methods{Method::dls, Method::pivotal};
  std::vector<std::string> functions;  // empty: all ten
  int degree = 3;
  int rank = 0;  // inner-family depth, 0 = default_rank(d)
  SmoothingConfig smoothing;
  double prune_tol = 1e-10;
  double rank_tol = 1e-8;
  int omp_sparsity = 0;  // 0: use the pivotal rank r

  /// Per-dimension defaults (smoothing segments 20 in 2D, 10 in 3D).
  static ExperimentSpec defaults(int d);
  void validate() const;
  int effective_eval_grid() const;
  int effective_rank() const;

  /// Reads the keys present in j on top of defaults(j["d"]).
  static ExperimentSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

/// Everything needed to fit at one n: the LKB basis, its design matrix on the
/// fit grid and the pivotal cross approximation.
struct PreparedBasis {
  int d = 0;
  int n = 0;
  std::optional<LKBBasis> lkb;
  DesignMatrix matrix;
  CrossApproximation cross;
  bool from_cache = false;
};

/// Hash of every setting that changes the cached content for a given n.
std::uint64_t basis_config_hash(const ExperimentSpec& spec, int n);

/// Builds the basis without touching any cache.
PreparedBasis build_basis(const ExperimentSpec& spec, int n);

inline constexpr std::uint32_t kCacheFormatVersion = 1;

void write_basis_cache(const std::filesystem::path& file, const PreparedBasis& b,
                       const ExperimentSpec& spec);

/// Throws std::runtime_error on a wrong magic or version, a header that does
/// not match (spec, n), or a file whose length disagrees with its header.
PreparedBasis read_basis_cache(const std::filesystem::path& file, const ExperimentSpec& spec, int n);

/// --cache-dir if given, else $KST_CACHE_DIR, else ".kst_cache".
std::filesystem::path resolve_cache_dir(const std::string& flag_value);

std::filesystem::path cache_file(const std::filesystem::path& dir, const ExperimentSpec& spec, int n);

/// Loads a matching cache file or builds and writes one. A rejected file is
/// rebuilt after a warning on stderr. An empty dir disables caching.
PreparedBasis cache_roundtrip(const ExperimentSpec& spec, int n, const std::filesystem::path& dir);

/// Fits f on the fit grid with one method and evaluates on the eval grid.
FitResult run_fit(const PreparedBasis& b, const ExperimentSpec& spec, const MultivariateFn& f, Method method);

struct Table {
  std::string provenance;
  std::vector<std::string> columns;      // one label per value column
  std::vector<std::string> row_labels;   // function ids
  std::vector<std::vector<double>> values;
  std::vector<int> n_of_column;
  std::vector<Method> method_of_column;

  double at(const std::string& fn, int n, Method m) const;
  std::string to_csv() const;
};

/// Rows are functions, columns are (n, method) pairs in spec order.
Table run_table_experiment(const ExperimentSpec& spec, const std::filesystem::path& cache_dir);

/// Same, with caller-supplied functions (ids and evaluators).
Table run_table_experiment(const ExperimentSpec& spec, const std::filesystem::path& cache_dir,
                           const std::vector<TestFunction>& functions);

enum class RateClass { lipschitz, holder, non_converging, exact };

struct SlopeEstimate {
  double slope = 0.0;
  bool defined = false;
  RateClass cls = RateClass::exact;
  std::string label() const;
};

/// Log-log least-squares slope of errors against n, then classification.
SlopeEstimate estimate_convergence_slope(const std::vector<int>& n, const std::vector<double>& errors);

struct PivotalCount {
  std::vector<std::pair<int, int>> counts;  // (n, |I|)
  double slope = 0.0;
  bool non_decreasing = true;
  std::string to_csv() const;
};

PivotalCount pivotal_count_experiment(const ExperimentSpec& spec, const std::filesystem::path& cache_dir);

/// Comma-separated integers.
std::vector<int> parse_int_list(const std::string& s);

/// printf("%.2e").
std::string format_sci(double v);

}  // namespace kst
