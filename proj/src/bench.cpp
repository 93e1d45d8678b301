#include "kst/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "kst/binary_io.hpp"
#include "kst/knet.hpp"

namespace kst {

namespace {

using std::numbers::pi;

double hinge(double t) { return std::max(t - 0.5, 0.0); }

std::vector<TestFunction> make_2d() {
  std::vector<TestFunction> v;
  auto add = [&](std::string formula, MultivariateFn f) {
    v.push_back({"f" + std::to_string(v.size() + 1), 2, std::move(f), std::move(formula)});
  };
  add("(1+2x+3y)/6", [](std::span<const double> p) { return (1 + 2 * p[0] + 3 * p[1]) / 6; });
  add("(x^2+y^2)/2", [](std::span<const double> p) { return (p[0] * p[0] + p[1] * p[1]) / 2; });
  add("xy", [](std::span<const double> p) { return p[0] * p[1]; });
  add("(x^3+y^3)/2", [](std::span<const double> p) {
    return (p[0] * p[0] * p[0] + p[1] * p[1] * p[1]) / 2;
  });
  add("1/(1+x^2+y^2)", [](std::span<const double> p) { return 1 / (1 + p[0] * p[0] + p[1] * p[1]); });
  add("cos(1/(1+xy))", [](std::span<const double> p) { return std::cos(1 / (1 + p[0] * p[1])); });
  add("sin(2pi(x+y))", [](std::span<const double> p) { return std::sin(2 * pi * (p[0] + p[1])); });
  add("sin(pi x)sin(pi y)", [](std::span<const double> p) {
    return std::sin(pi * p[0]) * std::sin(pi * p[1]);
  });
  add("exp(-x^2-y^2)", [](std::span<const double> p) { return std::exp(-p[0] * p[0] - p[1] * p[1]); });
  add("max(x-0.5,0)max(y-0.5,0)", [](std::span<const double> p) { return hinge(p[0]) * hinge(p[1]); });
  return v;
}

std::vector<TestFunction> make_3d() {
  std::vector<TestFunction> v;
  auto add = [&](std::string formula, MultivariateFn f) {
    v.push_back({"f" + std::to_string(v.size() + 1), 3, std::move(f), std::move(formula)});
  };
  add("(1+2x+3y+4z)/10", [](std::span<const double> p) { return (1 + 2 * p[0] + 3 * p[1] + 4 * p[2]) / 10; });
  add("(x^2+y^2+z^2)/3", [](std::span<const double> p) {
    return (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / 3;
  });
  add("(xy+yz+zx)/3", [](std::span<const double> p) {
    return (p[0] * p[1] + p[1] * p[2] + p[2] * p[0]) / 3;
  });
  add("(x^3y^3+y^3z^3)/2", [](std::span<const double> p) {
    const double xy = p[0] * p[1], yz = p[1] * p[2];
    return (xy * xy * xy + yz * yz * yz) / 2;
  });
  add("(x+y+z)/(1+x^2+y^2+z^2)", [](std::span<const double> p) {
    return (p[0] + p[1] + p[2]) / (1 + p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  });
  add("cos(1/(1+xyz))", [](std::span<const double> p) { return std::cos(1 / (1 + p[0] * p[1] * p[2])); });
  add("sin(2pi(x+y+z))", [](std::span<const double> p) { return std::sin(2 * pi * (p[0] + p[1] + p[2])); });
  add("sin(pi x)sin(pi y)sin(pi z)", [](std::span<const double> p) {
    return std::sin(pi * p[0]) * std::sin(pi * p[1]) * std::sin(pi * p[2]);
  });
  add("exp(-x^2-y^2-z^2)", [](std::span<const double> p) {
    return std::exp(-p[0] * p[0] - p[1] * p[1] - p[2] * p[2]);
  });
  add("max(x-0.5,0)max(y-0.5,0)max(z-0.5,0)", [](std::span<const double> p) {
    return hinge(p[0]) * hinge(p[1]) * hinge(p[2]);
  });
  return v;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string grid_label(int per_axis, int d) { return std::to_string(per_axis) + "^" + std::to_string(d); }

// Inner families are deterministic and slow to build for d=3, so one process
// keeps them around.
std::shared_ptr<const InnerFamily> shared_family(int d, int rank) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const InnerFamily>> memo;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = memo[{d, rank}];
  if (!slot) slot = std::make_shared<const InnerFamily>(build_inner_family(d, rank));
  return slot;
}

Eigen::VectorXd sample(const MultivariateFn& f, const PointSet& pts) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) v[static_cast<Eigen::Index>(i)] = f(pts.point(i));
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  io::write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(io::Reader& r, std::istream& is) {
  const std::uint32_t len = r.u32();
  if (len > (1u << 20)) throw std::runtime_error("string length out of range");
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (static_cast<std::uint32_t>(is.gcount()) != len) throw std::runtime_error("unexpected end of file");
  return s;
}

// Fits sharing one factorization of the fit-grid matrix.
class FitContext {
 public:
  FitContext(const PreparedBasis& b, const ExperimentSpec& spec)
      : b_(b), spec_(spec), fit_(PointSet::grid(spec.d, spec.fit_grid)),
        eval_(PointSet::grid(spec.d, spec.effective_eval_grid())) {}

  FitResult run(const MultivariateFn& f, Method method) {
    const Eigen::VectorXd fv = sample(f, fit_);
    const Eigen::VectorXd fe = sample(f, eval_);
    FitResult r;
    switch (method) {
      case Method::dls:
        if (!solver_) solver_.emplace(b_.matrix.values);
        r = dls_fit(b_.matrix, *solver_, fv);
        break;
      case Method::pivotal: {
        Eigen::VectorXd fi(static_cast<Eigen::Index>(b_.cross.rows.size()));
        for (std::size_t i = 0; i < b_.cross.rows.size(); ++i)
          fi[static_cast<Eigen::Index>(i)] = fv[b_.cross.rows[i]];
        r = pivotal_fit(b_.matrix, b_.cross.rows, b_.cross.cols, fi);
        break;
      }
      case Method::omp: {
        OmpStop stop;
        stop.sparsity = spec_.omp_sparsity > 0 ? spec_.omp_sparsity : b_.cross.rank;
        r = omp_fit(b_.matrix, fv, stop);
        break;
      }
    }
    evaluate_fit(r, *b_.lkb, eval_, fe);
    return r;
  }

  int sample_count(Method m) const {
    return m == Method::pivotal ? static_cast<int>(b_.cross.rows.size()) : static_cast<int>(fit_.size());
  }

 private:
  const PreparedBasis& b_;
  const ExperimentSpec& spec_;
  PointSet fit_, eval_;
  std::optional<DlsSolver> solver_;
};

}  // namespace

const std::vector<TestFunction>& test_functions(int d) {
  static const std::vector<TestFunction> two = make_2d();
  static const std::vector<TestFunction> three = make_3d();
  if (d == 2) return two;
  if (d == 3) return three;
  throw std::invalid_argument("test functions exist for d = 2 and 3 only");
}

const TestFunction& test_function(int d, const std::string& id) {
  for (const auto& t : test_functions(d))
    if (t.id == id) return t;
  throw std::invalid_argument("unknown test function " + id);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::dls: return "dls";
    case Method::pivotal: return "pivotal";
    case Method::omp: return "omp";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "dls" || s == "full") return Method::dls;
  if (s == "pivotal") return Method::pivotal;
  if (s == "omp") return Method::omp;
  throw std::invalid_argument("unknown method " + s);
}

ExperimentSpec ExperimentSpec::defaults(int d) {
  ExperimentSpec s;
  s.d = d;
  s.smoothing.segments = d >= 3 ? 10 : 20;
  return s;
}

void ExperimentSpec::validate() const {
  if (d != 2 && d != 3) throw std::invalid_argument("experiments support d = 2 or 3");
  if (n_list.empty()) throw std::invalid_argument("empty n list");
  for (int n : n_list)
    if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (fit_grid < 2 || eval_grid < 2) throw std::invalid_argument("grids need >= 2 points per axis");
  if (methods.empty()) throw std::invalid_argument("no methods selected");
  if (degree < 1 || degree > 6) throw std::invalid_argument("B-spline degree must be 1..6");
  if (rank < 0) throw std::invalid_argument("inner rank must be >= 0");
  if (!(prune_tol >= 0.0)) throw std::invalid_argument("prune tolerance must be >= 0");
  if (!(rank_tol > 0.0 && rank_tol < 1.0)) throw std::invalid_argument("rank tolerance must lie in (0,1)");
  if (omp_sparsity < 0) throw std::invalid_argument("OMP sparsity must be >= 0");
  smoothing.validate();
  for (const auto& f : functions) test_function(d, f);
}

int ExperimentSpec::effective_eval_grid() const {
  return d >= 3 && memory_cap ? std::min(eval_grid, 61) : eval_grid;
}

int ExperimentSpec::effective_rank() const { return rank > 0 ? rank : default_rank(d); }

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& j) {
  ExperimentSpec s = defaults(j.value("d", 2));
  if (j.contains("n_list")) s.n_list = j.at("n_list").get<std::vector<int>>();
  s.fit_grid = j.value("fit_grid", s.fit_grid);
  s.eval_grid = j.value("eval_grid", s.eval_grid);
  s.memory_cap = j.value("memory_cap", s.memory_cap);
  if (j.contains("methods")) {
    s.methods.clear();
    for (const auto& m : j.at("methods")) s.methods.push_back(parse_method(m.get<std::string>()));
  }
  if (j.contains("functions")) s.functions = j.at("functions").get<std::vector<std::string>>();
  s.degree = j.value("degree", s.degree);
  s.rank = j.value("rank", s.rank);
  s.prune_tol = j.value("prune_tol", s.prune_tol);
  s.rank_tol = j.value("rank_tol", s.rank_tol);
  s.omp_sparsity = j.value("omp_sparsity", s.omp_sparsity);
  if (j.contains("smoothing")) {
    const auto& sm = j.at("smoothing");
    s.smoothing.lambda_pen = sm.value("lambda_pen", s.smoothing.lambda_pen);
    s.smoothing.degree = sm.value("degree", s.smoothing.degree);
    s.smoothing.segments = sm.value("segments", s.smoothing.segments);
    if (sm.contains("data_term")) {
      const auto t = sm.at("data_term").get<std::string>();
      if (t == "mean") s.smoothing.data_term = SmoothingConfig::DataTerm::mean;
      else if (t == "sum") s.smoothing.data_term = SmoothingConfig::DataTerm::sum;
      else throw std::invalid_argument("data_term must be mean or sum");
    }
  }
  s.validate();
  return s;
}

nlohmann::json ExperimentSpec::to_json() const {
  nlohmann::json j;
  j["d"] = d;
  j["n_list"] = n_list;
  j["fit_grid"] = fit_grid;
  j["eval_grid"] = eval_grid;
  j["memory_cap"] = memory_cap;
  std::vector<std::string> ms;
  for (auto m : methods) ms.push_back(to_string(m));
  j["methods"] = ms;
  j["functions"] = functions;
  j["degree"] = degree;
  j["rank"] = rank;
  j["prune_tol"] = prune_tol;
  j["rank_tol"] = rank_tol;
  j["omp_sparsity"] = omp_sparsity;
  j["smoothing"] = {{"lambda_pen", smoothing.lambda_pen},
                    {"degree", smoothing.degree},
                    {"segments", smoothing.segments},
                    {"data_term", smoothing.data_term == SmoothingConfig::DataTerm::mean ? "mean" : "sum"}};
  return j;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t basis_config_hash(const ExperimentSpec& spec, int n) {
  std::ostringstream os;
  os << "d=" << spec.d << ";n=" << n << ";K=" << spec.effective_rank() << ";degree=" << spec.degree
     << ";fit=" << spec.fit_grid << ";prune=" << fmt_g(spec.prune_tol) << ";rank_tol=" << fmt_g(spec.rank_tol)
     << ";delta=" << fmt_g(kMaxvolDelta) << ";" << spec.smoothing.describe();
  return fnv1a(os.str());
}

PreparedBasis build_basis(const ExperimentSpec& spec, int n) {
  spec.validate();
  PreparedBasis b;
  b.d = spec.d;
  b.n = n;
  const auto family = shared_family(spec.d, spec.effective_rank());
  const KBBasis kb(family, n, spec.degree);
  const auto grid = PointSet::grid(spec.d, spec.fit_grid);
  const auto pruned = prune_near_zero_columns(assemble_design_matrix(kb, grid), spec.prune_tol);
  b.lkb.emplace(build_lkb_basis(pruned, grid, spec.smoothing));
  b.matrix.values = b.lkb->sample_grid(grid);
  b.matrix.columns = b.lkb->columns();
  b.matrix.basis_id = "lkb_" + kb.id();
  b.matrix.points_id = grid.id();

  const auto est = estimate_rank(b.matrix.values, spec.rank_tol);
  if (est.zero_matrix) throw std::runtime_error("LKB design matrix is zero");
  const int cap = static_cast<int>(std::min(b.matrix.values.rows(), b.matrix.values.cols()));
  b.cross = maxvol_select(b.matrix.values, std::min(est.rank, cap));
  certify(b.cross, b.matrix.values);
  return b;
}

void write_basis_cache(const std::filesystem::path& file, const PreparedBasis& b, const ExperimentSpec& spec) {
  std::ostringstream os(std::ios::binary);
  io::write_magic(os, "LKBC");
  io::write_u32(os, kCacheFormatVersion);
  io::write_i32(os, b.d);
  io::write_i32(os, b.n);
  io::write_i32(os, spec.degree);
  io::write_i32(os, spec.fit_grid);
  io::write_u64(os, basis_config_hash(spec, b.n));
  const auto& m = b.matrix.values;
  const auto& coef = b.lkb->coefficients();
  // Total file length, patched in once the body is written.
  const auto total_at = static_cast<std::size_t>(os.tellp());
  io::write_u64(os, 0);

  io::write_u64(os, static_cast<std::uint64_t>(m.rows()));
  io::write_u64(os, static_cast<std::uint64_t>(m.cols()));
  for (int c : b.matrix.columns) io::write_i32(os, c);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) io::write_f64(os, m(i, j));

  const auto& space = *b.lkb->space();
  io::write_i32(os, space.basis().degree());
  io::write_i32(os, space.basis().count() - space.basis().degree());
  io::write_u64(os, static_cast<std::uint64_t>(coef.rows()));
  for (Eigen::Index j = 0; j < coef.cols(); ++j)
    for (Eigen::Index i = 0; i < coef.rows(); ++i) io::write_f64(os, coef(i, j));
  write_string(os, b.matrix.basis_id);
  write_string(os, b.matrix.points_id);
  write_string(os, b.lkb->provenance());

  io::write_i32(os, b.cross.rank);
  io::write_i32(os, b.cross.swaps);
  for (std::size_t i = 0; i < b.cross.rows.size(); ++i) {
    io::write_i32(os, b.cross.rows[i]);
    io::write_i32(os, b.cross.cols[i]);
  }
  io::write_f64(os, b.cross.residual_c);
  io::write_f64(os, b.cross.sigma_next);
  io::write_f64(os, b.cross.bound);
  io::write_f64(os, b.cross.condition);
  io::write_u64(os, b.cross.log_volume.size());
  for (double v : b.cross.log_volume) io::write_f64(os, v);

  std::string bytes = os.str();
  std::ostringstream len(std::ios::binary);
  io::write_u64(len, bytes.size());
  bytes.replace(total_at, 8, len.str());
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, file);
}

PreparedBasis read_basis_cache(const std::filesystem::path& file, const ExperimentSpec& spec, int n) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  io::Reader r(in);
  r.expect_magic("LKBC");
  if (r.u32() != kCacheFormatVersion) throw std::runtime_error("cache format version mismatch");
  PreparedBasis b;
  b.d = r.i32();
  b.n = r.i32();
  if (b.d != spec.d) throw std::runtime_error("cache dimension mismatch");
  if (b.n != n) throw std::runtime_error("cache n mismatch");
  if (r.i32() != spec.degree) throw std::runtime_error("cache degree mismatch");
  if (r.i32() != spec.fit_grid) throw std::runtime_error("cache grid mismatch");
  if (r.u64() != basis_config_hash(spec, n)) throw std::runtime_error("cache config hash mismatch");
  const std::uint64_t total = r.u64();
  if (std::filesystem::file_size(file) != total) throw std::runtime_error("cache file truncated or padded");

  const auto rows = static_cast<Eigen::Index>(r.u64());
  const auto cols = static_cast<Eigen::Index>(r.u64());
  const double expected_rows = std::pow(static_cast<double>(spec.fit_grid), spec.d);
  if (static_cast<double>(rows) != expected_rows || cols < 1 || 8.0 * static_cast<double>(rows * cols) > total)
    throw std::runtime_error("cache matrix shape inconsistent");
  b.matrix.columns.resize(static_cast<std::size_t>(cols));
  for (auto& c : b.matrix.columns) c = r.i32();
  b.matrix.values.resize(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) b.matrix.values(i, j) = r.f64();

  const int sdeg = r.i32();
  const int segs = r.i32();
  auto space = std::make_shared<const TensorSplineSpace>(spec.d, sdeg, segs);
  const auto ncoef = static_cast<Eigen::Index>(r.u64());
  if (ncoef != space->size()) throw std::runtime_error("cache spline space mismatch");
  Eigen::MatrixXd coef(ncoef, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < ncoef; ++i) coef(i, j) = r.f64();
  b.matrix.basis_id = read_string(r, in);
  b.matrix.points_id = read_string(r, in);
  std::string prov = read_string(r, in);
  b.lkb.emplace(std::move(space), std::move(coef), b.matrix.columns, std::move(prov));

  b.cross.rank = r.i32();
  b.cross.swaps = r.i32();
  if (b.cross.rank < 1 || b.cross.rank > std::min(rows, cols)) throw std::runtime_error("cache rank out of range");
  for (int i = 0; i < b.cross.rank; ++i) {
    b.cross.rows.push_back(r.i32());
    b.cross.cols.push_back(r.i32());
  }
  b.cross.residual_c = r.f64();
  b.cross.sigma_next = r.f64();
  b.cross.bound = r.f64();
  b.cross.condition = r.f64();
  const std::uint64_t nv = r.u64();
  if (nv > total) throw std::runtime_error("cache volume log length out of range");
  for (std::uint64_t i = 0; i < nv; ++i) b.cross.log_volume.push_back(r.f64());
  b.from_cache = true;
  return b;
}

std::filesystem::path resolve_cache_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("KST_CACHE_DIR"); env && *env) return env;
  return ".kst_cache";
}

std::filesystem::path cache_file(const std::filesystem::path& dir, const ExperimentSpec& spec, int n) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(basis_config_hash(spec, n)));
  return dir / ("lkb_d" + std::to_string(spec.d) + "_n" + std::to_string(n) + "_" + hex + ".lkbc");
}

PreparedBasis cache_roundtrip(const ExperimentSpec& spec, int n, const std::filesystem::path& dir) {
  if (dir.empty()) return build_basis(spec, n);
  const auto file = cache_file(dir, spec, n);
  if (std::filesystem::exists(file)) {
    try {
      return read_basis_cache(file, spec, n);
    } catch (const std::exception& e) {
      std::cerr << "warning: rebuilding " << file.string() << ": " << e.what() << "\n";
    }
  }
  auto b = build_basis(spec, n);
  write_basis_cache(file, b, spec);
  return b;
}

FitResult run_fit(const PreparedBasis& b, const ExperimentSpec& spec, const MultivariateFn& f, Method method) {
  FitContext ctx(b, spec);
  return ctx.run(f, method);
}

double Table::at(const std::string& fn, int n, Method m) const {
  const auto row = std::find(row_labels.begin(), row_labels.end(), fn);
  if (row == row_labels.end()) throw std::out_of_range("no row " + fn);
  for (std::size_t c = 0; c < columns.size(); ++c)
    if (n_of_column[c] == n && method_of_column[c] == m)
      return values[static_cast<std::size_t>(row - row_labels.begin())][c];
  throw std::out_of_range("no column for n=" + std::to_string(n) + " " + to_string(m));
}

std::string Table::to_csv() const {
  std::ostringstream os;
  os << "# " << provenance << "\n";
  os << "function";
  for (const auto& c : columns) os << "," << c;
  os << "\n";
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    os << row_labels[r];
    for (double v : values[r]) os << "," << format_sci(v);
    os << "\n";
  }
  return os.str();
}

Table run_table_experiment(const ExperimentSpec& spec, const std::filesystem::path& cache_dir) {
  spec.validate();
  std::vector<TestFunction> fs;
  for (const auto& t : test_functions(spec.d))
    if (spec.functions.empty() || std::count(spec.functions.begin(), spec.functions.end(), t.id))
      fs.push_back(t);
  return run_table_experiment(spec, cache_dir, fs);
}

Table run_table_experiment(const ExperimentSpec& spec, const std::filesystem::path& cache_dir,
                           const std::vector<TestFunction>& functions) {
  spec.validate();
  Table t;
  std::ostringstream prov;
  prov << "d=" << spec.d << " K=" << spec.effective_rank() << " degree=" << spec.degree
       << " fit=" << grid_label(spec.fit_grid, spec.d) << " eval=" << grid_label(spec.effective_eval_grid(), spec.d)
       << " smoothing=" << spec.smoothing.describe() << " prune_tol=" << spec.prune_tol
       << " rank_tol=" << spec.rank_tol << " maxvol_delta=" << kMaxvolDelta;
  t.provenance = prov.str();
  for (const auto& f : functions) t.row_labels.push_back(f.id);
  t.values.assign(functions.size(), {});

  for (int n : spec.n_list) {
    const auto b = cache_roundtrip(spec, n, cache_dir);
    FitContext ctx(b, spec);
    for (Method m : spec.methods) {
      const std::string what = m == Method::dls ? "full" : to_string(m);
      const int count = m == Method::omp ? (spec.omp_sparsity > 0 ? spec.omp_sparsity : b.cross.rank)
                                         : ctx.sample_count(m);
      t.columns.push_back("n=" + std::to_string(n) + " " + what + " " + std::to_string(count));
      t.n_of_column.push_back(n);
      t.method_of_column.push_back(m);
      for (std::size_t i = 0; i < functions.size(); ++i) {
        try {
          t.values[i].push_back(*ctx.run(functions[i].f, m).eval_rmse);
        } catch (const std::exception& e) {
          throw std::runtime_error("n=" + std::to_string(n) + " " + to_string(m) + " " + functions[i].id + ": " +
                                   e.what());
        }
      }
    }
  }
  return t;
}

std::string SlopeEstimate::label() const {
  switch (cls) {
    case RateClass::lipschitz: return "K-Lipschitz";
    case RateClass::holder: {
      char buf[48];
      std::snprintf(buf, sizeof buf, "K-Holder(%.2f)", -slope);
      return buf;
    }
    case RateClass::non_converging: return "non-converging";
    case RateClass::exact: return "exact";
  }
  return "?";
}

SlopeEstimate estimate_convergence_slope(const std::vector<int>& n, const std::vector<double>& errors) {
  if (n.size() != errors.size()) throw std::invalid_argument("need one error per n");
  if (n.size() < 3) throw std::invalid_argument("slope needs at least 3 values of n");
  SlopeEstimate s;
  for (double e : errors) {
    if (e < 0.0 || std::isnan(e)) throw std::invalid_argument("errors must be >= 0");
    if (e == 0.0) return s;
  }
  const std::vector<double> x(n.begin(), n.end());
  s.slope = loglog_slope(x, errors);
  s.defined = true;
  // rounding in the fit must not demote an exact 1/n sequence
  s.cls = s.slope <= -1.0 + 1e-9 ? RateClass::lipschitz : (s.slope < 0.0 ? RateClass::holder : RateClass::non_converging);
  return s;
}

std::string PivotalCount::to_csv() const {
  std::ostringstream os;
  os << "n,pivotal\n";
  for (const auto& [n, c] : counts) os << n << "," << c << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "# slope %.3f\n", slope);
  os << buf;
  return os.str();
}

PivotalCount pivotal_count_experiment(const ExperimentSpec& spec, const std::filesystem::path& cache_dir) {
  spec.validate();
  PivotalCount pc;
  std::vector<double> ns, cs;
  for (int n : spec.n_list) {
    const auto b = cache_roundtrip(spec, n, cache_dir);
    const int c = static_cast<int>(b.cross.rows.size());
    if (!pc.counts.empty() && c < pc.counts.back().second) pc.non_decreasing = false;
    pc.counts.emplace_back(n, c);
    ns.push_back(n);
    cs.push_back(c);
  }
  if (!pc.non_decreasing) std::cerr << "warning: pivotal count decreased with n\n";
  if (ns.size() >= 2) pc.slope = loglog_slope(ns, cs);
  return pc;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const int v = std::stoi(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad integer '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty integer list");
  return out;
}

std::string format_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

}  // namespace kst
