#include "kst/inner_functions.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "kst/binary_io.hpp"
#include "kst/univariate_splines.hpp"

namespace kst {

namespace {

constexpr char kMagic[5] = "KSTI";
constexpr double kMinTownWidth = 1e-14;
constexpr double kMinResolution = 1e-13;
constexpr double kMinStep = 1e-14;
constexpr double kMaxTableNodes = 5e7;
constexpr double kMaxVerifiedCubes = 2.0e6;

std::int64_t ipow(std::int64_t b, int e) {
  std::int64_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

// Integer geometry in units of the finest gap g_K.
struct Lattice {
  int d = 0, rank = 0;
  std::int64_t n = 0;      // 2d+1, cells per period
  std::int64_t b = 0;      // 2d+2, children per cell
  std::int64_t denom = 0;  // [0,1] spans denom units

  Lattice(int d_, int rank_) : d(d_), rank(rank_), n(2 * d_ + 1), b(2 * d_ + 2) {
    denom = n * n * ipow(b, rank - 1);
  }
  std::int64_t gap(int k) const { return ipow(b, rank - k); }
};

std::vector<int> first_primes(int count) {
  std::vector<int> p;
  for (int c = 2; static_cast<int>(p.size()) < count; ++c) {
    bool prime = true;
    for (int q : p) {
      if (q * q > c) break;
      if (c % q == 0) { prime = false; break; }
    }
    if (prime) p.push_back(c);
  }
  return p;
}

struct RawNode {
  std::int64_t x;
  double v;
};

double interp_raw(const std::vector<RawNode>& nodes, std::int64_t x) {
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), x,
                                   [](const RawNode& a, std::int64_t t) { return a.x < t; });
  if (it == nodes.end() || it == nodes.begin())
    throw std::logic_error("raw table does not cover the unit interval");
  if (it->x == x) return it->v;
  const auto& a = *(it - 1);
  const auto& c = *it;
  return a.v + (c.v - a.v) * static_cast<double>(x - a.x) / static_cast<double>(c.x - a.x);
}

// Raw value layout: a rank-r cell reached by digits t_1..t_r sits at value
// sum_r t_r S_r; digits 0..2d are town children and 2d+1 is the gap child.
std::vector<RawNode> raw_table(const Lattice& L, int q, const std::vector<double>& S,
                               double tau) {
  std::vector<RawNode> nodes;
  const int K = L.rank;
  auto emit = [&](auto&& self, std::int64_t start, int r, double base) -> void {
    if (r == K) {
      nodes.push_back({start, base});
      nodes.push_back({start + 2 * L.d, base + tau});
      return;
    }
    const std::int64_t child_period = L.n * L.gap(r + 1);
    for (std::int64_t j = 0; j < L.b; ++j)
      self(self, start + j * child_period, r + 1, base + static_cast<double>(j) * S[r + 1]);
  };
  const std::int64_t g1 = L.gap(1);
  for (std::int64_t m = -1; m < L.n; ++m)
    emit(emit, q * g1 + m * L.n * g1, 1, static_cast<double>(m + 1) * S[1]);
  nodes.push_back({q * g1 + L.n * L.n * g1, static_cast<double>(L.b) * S[1]});
  return nodes;
}

struct BuiltTables {
  std::vector<MonotoneTable> tables;
  double min_margin = 0.0;  // normalized separation certificate
  double min_step = 0.0;    // normalized tau
};

}  // namespace

MonotoneTable::MonotoneTable(std::vector<double> xs, std::vector<double> ys)
    : xs_(std::move(xs)), ys_(std::move(ys)) {
  if (xs_.size() < 2 || xs_.size() != ys_.size())
    throw std::invalid_argument("monotone table needs matching node arrays of length >= 2");
  for (std::size_t i = 1; i < xs_.size(); ++i)
    if (!(xs_[i] > xs_[i - 1]) || !(ys_[i] > ys_[i - 1]))
      throw std::invalid_argument("monotone table nodes must strictly increase");
}

double MonotoneTable::operator()(double x) const {
  if (!(x >= xs_.front() && x <= xs_.back()))
    throw std::domain_error("argument " + std::to_string(x) + " outside table range");
  if (x == xs_.back()) return ys_.back();
  const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - xs_.begin()) - 1;
  const double w = (x - xs_[i]) / (xs_[i + 1] - xs_[i]);
  return ys_[i] + w * (ys_[i + 1] - ys_[i]);
}

double InnerFamily::lambda_sum() const {
  double s = 0.0;
  for (double l : lambdas_) s += l;
  return s;
}

const MonotoneTable& InnerFamily::table(int q) const {
  if (q < 0 || q >= count()) throw std::out_of_range("family index out of range");
  return tables_[q];
}

double InnerFamily::phi(int q, double x) const {
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("phi argument outside [0,1]");
  return table(q)(x);
}

double InnerFamily::z(int q, std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("point dimension mismatch");
  double s = 0.0;
  for (int i = 0; i < dim_; ++i) s += lambdas_[i] * phi(q, x[i]);
  return s;
}

const std::vector<Interval>& InnerFamily::towns(int k, int q) const {
  if (k < 1 || k > rank_) throw std::out_of_range("rank out of range");
  if (q < 0 || q >= count()) throw std::out_of_range("family index out of range");
  return towns_[k - 1][q];
}

double InnerFamily::gap_length(int k) const {
  if (k < 1 || k > rank_) throw std::out_of_range("rank out of range");
  const Lattice L(dim_, rank_);
  return static_cast<double>(L.gap(k)) / static_cast<double>(L.denom);
}

double InnerFamily::town_value_width(int k) const {
  double w = 0.0;
  for (int q = 0; q < count(); ++q)
    for (const auto& t : towns(k, q)) w = std::max(w, phi(q, t.hi) - phi(q, t.lo));
  return w;
}

bool InnerFamily::in_town(int k, int q, double x) const {
  const auto& ts = towns(k, q);
  const auto it = std::upper_bound(ts.begin(), ts.end(), x,
                                   [](double v, const Interval& t) { return v < t.lo; });
  if (it == ts.begin()) return false;
  return x <= (it - 1)->hi;
}

void InnerFamily::build_towns() {
  const Lattice L(dim_, rank_);
  const double D = static_cast<double>(L.denom);
  towns_.assign(static_cast<std::size_t>(rank_), {});
  for (int k = 1; k <= rank_; ++k) {
    auto& per_q = towns_[k - 1];
    per_q.assign(static_cast<std::size_t>(count()), {});
    const std::int64_t g = L.gap(k);
    for (int q = 0; q < count(); ++q) {
      for (std::int64_t m = -1;; ++m) {
        const std::int64_t s = q * g + m * L.n * g;
        if (s >= L.denom) break;
        const std::int64_t lo = std::max<std::int64_t>(s, 0);
        const std::int64_t hi = std::min<std::int64_t>(s + 2 * dim_ * g, L.denom);
        if (hi > lo) per_q[q].push_back({lo / D, hi / D});
      }
    }
  }
}

std::vector<double> kst_lambdas(int d) {
  if (d < 1) throw std::invalid_argument("dimension must be >= 1");
  const auto p = first_primes(d);
  std::vector<double> f(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    const double r = std::sqrt(static_cast<double>(p[i]));
    f[i] = r - std::floor(r);
  }
  const double mx = *std::max_element(f.begin(), f.end());
  for (double& v : f) v = v / mx * (1.0 - 1e-6);
  return f;
}

double lattice_minimum(std::span<const double> lambdas, int bound) {
  const int d = static_cast<int>(lambdas.size());
  if (d < 1 || bound < 1) throw std::invalid_argument("lattice_minimum needs d >= 1, bound >= 1");
  const int h = d / 2;
  const double width = 2.0 * bound + 1.0;
  if (std::pow(width, d - h) > 5e6)
    throw std::domain_error("lattice search too large for dimension " + std::to_string(d));

  auto enumerate = [&](int from, int to) {
    std::vector<double> sums{0.0};
    for (int i = from; i < to; ++i) {
      std::vector<double> next;
      next.reserve(sums.size() * static_cast<std::size_t>(width));
      // m = 0 first keeps the zero vector at index 0
      for (double s : sums)
        for (int k = 0; k <= 2 * bound; ++k) {
          const int m = (k % 2 == 1) ? (k + 1) / 2 : -(k / 2);
          next.push_back(s + m * lambdas[i]);
        }
      sums = std::move(next);
    }
    return sums;
  };
  // sums[0] is the all-zero vector in both halves.
  const auto a = enumerate(0, h);
  auto b = enumerate(h, d);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < b.size(); ++i) best = std::min(best, std::abs(b[i]));
  std::sort(b.begin(), b.end());
  for (std::size_t i = 1; i < a.size(); ++i) {
    const double target = -a[i];
    const auto it = std::lower_bound(b.begin(), b.end(), target);
    if (it != b.end()) best = std::min(best, std::abs(a[i] + *it));
    if (it != b.begin()) best = std::min(best, std::abs(a[i] + *(it - 1)));
  }
  return best;
}

namespace {

BuiltTables make_tables(const Lattice& L, std::span<const double> lambdas, double ratio,
                        double flatness) {
  const int K = L.rank;
  double lsum = 0.0;
  for (double l : lambdas) lsum += l;
  const double kappa = lattice_minimum(lambdas, static_cast<int>(L.n));

  std::vector<double> S(static_cast<std::size_t>(K) + 2, 0.0);
  S[1] = 1.0 / static_cast<double>(L.b);
  for (int r = 2; r <= K + 1; ++r) S[r] = S[r - 1] * ratio;
  // flatness < 1 thins every rank-1 town relative to the self-similar layout
  for (int r = 2; r <= K + 1; ++r) S[r] *= flatness;
  const double spread = 2.0 * L.d / (1.0 - ratio);  // town width over S_{k+1}
  const double tau = spread * S[K + 1];

  // Distinct rank-k cubes first differ at some rank r*; the weighted digit
  // difference there is at least kappa S_{r*}, the deeper ranks and the town
  // width can take back at most the remainder.
  double margin = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= K; ++k) {
    for (int rs = 1; rs <= k; ++rs) {
      double tail = 0.0;
      for (int r = rs + 1; r <= k; ++r) tail += S[r];
      const double m = kappa * S[rs] - lsum * static_cast<double>(L.n) * tail -
                       lsum * spread * S[k + 1];
      margin = std::min(margin, m);
    }
  }

  BuiltTables out;
  out.min_margin = std::numeric_limits<double>::infinity();
  out.min_step = std::numeric_limits<double>::infinity();
  const double D = static_cast<double>(L.denom);
  for (std::int64_t q = 0; q < L.n; ++q) {
    const auto raw = raw_table(L, static_cast<int>(q), S, tau);
    const double v0 = interp_raw(raw, 0);
    const double v1 = interp_raw(raw, L.denom);
    const double scale = v1 - v0;
    out.min_margin = std::min(out.min_margin, margin / scale);
    out.min_step = std::min(out.min_step, tau / scale);
    if (!(margin / scale >= kMinResolution) || !(tau / scale >= kMinStep))
      return out;

    std::vector<double> xs{0.0}, ys{0.0};
    for (const auto& node : raw) {
      if (node.x <= 0 || node.x >= L.denom) continue;
      xs.push_back(node.x / D);
      ys.push_back((node.v - v0) / scale);
    }
    xs.push_back(1.0);
    ys.push_back(1.0);
    out.tables.emplace_back(std::move(xs), std::move(ys));
  }
  return out;
}

// Sort the z-images of all rank-k town cubes of family q and return the
// smallest gap between consecutive images (negative on overlap).
double cube_image_separation(const InnerFamily& fam, int k, int q) {
  const int d = fam.dim();
  const auto& ts = fam.towns(k, q);
  std::vector<double> lo(ts.size()), hi(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    lo[i] = fam.phi(q, ts[i].lo);
    hi[i] = fam.phi(q, ts[i].hi);
  }
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= ts.size();
  std::vector<std::pair<double, double>> img;
  img.reserve(total);
  std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
  const auto lam = fam.lambdas();
  for (std::size_t c = 0; c < total; ++c) {
    double a = 0.0, b = 0.0;
    for (int i = 0; i < d; ++i) {
      a += lam[i] * lo[idx[i]];
      b += lam[i] * hi[idx[i]];
    }
    img.emplace_back(a, b);
    for (int i = d - 1; i >= 0; --i) {
      if (++idx[i] < ts.size()) break;
      idx[i] = 0;
    }
  }
  std::sort(img.begin(), img.end());
  double sep = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < img.size(); ++i)
    sep = std::min(sep, img[i].first - img[i - 1].second);
  return sep;
}

}  // namespace

InnerFamily build_inner_family(int d, int rank, const InnerFamilyOptions& opts) {
  if (d < 1) throw std::invalid_argument("dimension must be >= 1");
  if (rank < 1) throw std::invalid_argument("rank must be >= 1");
  if (!(opts.rank1_flatness > 0.0 && opts.rank1_flatness <= 1.0))
    throw std::invalid_argument("rank-1 flatness must lie in (0,1]");
  if (std::log(static_cast<double>(2 * d + 2)) * (rank - 1) > std::log(1e15))
    throw std::domain_error("rank too deep for exact lattice coordinates");
  const Lattice L(d, rank);
  if (2.0 * d * static_cast<double>(L.gap(rank)) / static_cast<double>(L.denom) < kMinTownWidth)
    throw std::domain_error("town width underflows at rank " + std::to_string(rank));
  // Each q table holds two nodes per rank-K cell.
  if (2.0 * (2 * d + 1) * std::pow(2.0 * d + 2, rank) > kMaxTableNodes)
    throw std::domain_error("inner tables too large at rank " + std::to_string(rank));

  InnerFamily fam;
  fam.dim_ = d;
  fam.rank_ = rank;
  fam.lambdas_ = kst_lambdas(d);
  double lsum = 0.0;
  for (double l : fam.lambdas_) lsum += l;
  const double kappa = lattice_minimum(fam.lambdas_, static_cast<int>(L.n));
  double ratio = kappa / (4.0 * static_cast<double>(L.n) * lsum);

  for (int attempt = 0; attempt < 8; ++attempt, ratio *= 0.5) {
    auto built = make_tables(L, fam.lambdas_, ratio, opts.rank1_flatness);
    if (built.tables.size() != static_cast<std::size_t>(L.n))
      throw std::domain_error("value scales at rank " + std::to_string(rank) +
                              " fall below double resolution (margin " +
                              std::to_string(built.min_margin) + ")");
    fam.tables_ = std::move(built.tables);
    fam.value_ratio_ = ratio;
    fam.build_towns();

    bool ok = true;
    for (int k = 1; k <= rank && ok; ++k) {
      const double cubes = std::pow(static_cast<double>(fam.towns(k, 0).size()), d);
      if (cubes > kMaxVerifiedCubes) continue;
      for (int q = 0; q < fam.count() && ok; ++q)
        ok = cube_image_separation(fam, k, q) > 0.0;
    }
    if (ok) return fam;
  }
  throw std::domain_error("town images could not be separated");
}

int default_rank(int d, const InnerFamilyOptions& opts) {
  for (int k = 4; k >= 1; --k) {
    try {
      build_inner_family(d, k, opts);
      return k;
    } catch (const std::domain_error&) {
    }
  }
  throw std::domain_error("no feasible rank for dimension " + std::to_string(d));
}

double forward_superpose(const InnerFamily& family, const UnivariateFn& g,
                         std::span<const double> x) {
  double s = 0.0;
  for (int q = 0; q < family.count(); ++q) s += g(family.z(q, x));
  return s;
}

OuterSpec OuterSpec::parse(const std::string& tag, double C) {
  OuterSpec s;
  s.C = C;
  if (tag == "linear") s.kind = Kind::linear;
  else if (tag == "sin") s.kind = Kind::sine;
  else if (tag == "exp") s.kind = Kind::exp_decay;
  else if (tag == "chirp") s.kind = Kind::chirp;
  else if (tag == "bspline") s.kind = Kind::bspline;
  else throw std::invalid_argument("unknown outer function tag: " + tag);
  return s;
}

UnivariateFn make_outer_function(const OuterSpec& spec, int d) {
  const double C = spec.C;
  if (!std::isfinite(C)) throw std::invalid_argument("outer function constant must be finite");
  switch (spec.kind) {
    case OuterSpec::Kind::linear: return [C](double t) { return C * t; };
    case OuterSpec::Kind::sine: return [C](double t) { return std::sin(C * t); };
    case OuterSpec::Kind::exp_decay: return [C](double t) { return std::exp(-C * t); };
    case OuterSpec::Kind::chirp: return [C](double t) { return std::sin(C * t * t / 2.0); };
    case OuterSpec::Kind::bspline: {
      auto basis = std::make_shared<UniformBSplineBasis>(spec.degree, static_cast<double>(d),
                                                         spec.count);
      if (spec.index < 0 || spec.index >= spec.count)
        throw std::invalid_argument("B-spline index out of range");
      const int j = spec.index;
      return [basis, j, C](double t) {
        return C * basis->eval(j, std::clamp(t, 0.0, basis->length()));
      };
    }
  }
  throw std::invalid_argument("unknown outer function kind");
}

MultivariateFn make_kl_function(std::shared_ptr<const InnerFamily> family, const OuterSpec& spec) {
  if (!family) throw std::invalid_argument("null inner family");
  auto g = make_outer_function(spec, family->dim());
  return [family, g](std::span<const double> x) { return forward_superpose(*family, g, x); };
}

void write_inner_family(std::ostream& os, const InnerFamily& family) {
  io::write_magic(os, kMagic);
  io::write_u32(os, kInnerFamilyFormatVersion);
  io::write_u32(os, static_cast<std::uint32_t>(family.dim()));
  io::write_u32(os, static_cast<std::uint32_t>(family.rank()));
  for (double l : family.lambdas()) io::write_f64(os, l);
  for (int q = 0; q < family.count(); ++q) {
    const auto& t = family.table(q);
    io::write_u64(os, t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      io::write_f64(os, t.xs()[i]);
      io::write_f64(os, t.ys()[i]);
    }
  }
  if (!os) throw std::runtime_error("failed writing inner family");
}

InnerFamily read_inner_family(std::istream& is) {
  io::Reader r(is);
  r.expect_magic(kMagic);
  const auto version = r.u32();
  if (version != kInnerFamilyFormatVersion)
    throw std::runtime_error("unsupported inner family version " + std::to_string(version));
  InnerFamily fam;
  fam.dim_ = static_cast<int>(r.u32());
  fam.rank_ = static_cast<int>(r.u32());
  if (fam.dim_ < 1 || fam.dim_ > 64 || fam.rank_ < 1 || fam.rank_ > 16)
    throw std::runtime_error("corrupt inner family header");
  fam.lambdas_.resize(static_cast<std::size_t>(fam.dim_));
  for (double& l : fam.lambdas_) l = r.f64();
  fam.value_ratio_ = lattice_minimum(fam.lambdas_, 2 * fam.dim_ + 1) /
                     (4.0 * (2 * fam.dim_ + 1) * fam.lambda_sum());
  for (int q = 0; q < fam.count(); ++q) {
    const auto n = r.u64();
    if (n < 2 || n > (1ull << 32)) throw std::runtime_error("corrupt inner family table");
    std::vector<double> xs(n), ys(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      xs[i] = r.f64();
      ys[i] = r.f64();
    }
    fam.tables_.emplace_back(std::move(xs), std::move(ys));
  }
  fam.build_towns();
  return fam;
}

}  // namespace kst
