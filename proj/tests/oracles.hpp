#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls the library routine it checks.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <vector>

#include "kst/inner_functions.hpp"

namespace oracle {

struct Span {
  double lo, hi;
};

// Town geometry from the lattice description alone: at rank k the towns of
// family 0 are [m P, m P + 2d g_k] with period P = (2d+1) g_k, and family q
// is that set shifted by q g_k.
inline double gap(int d, int k) {
  return 1.0 / ((2.0 * d + 1) * (2.0 * d + 1) * std::pow(2.0 * d + 2, k - 1));
}

// keep_points keeps towns that touch [0,1] in a single point.
inline std::vector<Span> towns(int d, int k, int q, bool keep_points = true) {
  const double g = gap(d, k), period = (2 * d + 1) * g, off = q * g;
  std::vector<Span> out;
  for (long m = static_cast<long>(std::floor((0.0 - off) / period)) - 1;; ++m) {
    const double lo = off + m * period, hi = lo + 2 * d * g;
    if (lo > 1.0) break;
    if (hi < 0.0) continue;
    const Span s{std::max(lo, 0.0), std::min(hi, 1.0)};
    if (!keep_points && s.hi - s.lo <= 1e-12) continue;
    out.push_back(s);
  }
  return out;
}

// Families q whose rank-k gap (open) contains x.
inline int families_missed(int d, int k, double x) {
  const double g = gap(d, k), period = (2 * d + 1) * g;
  int missed = 0;
  for (int q = 0; q <= 2 * d; ++q) {
    double r = std::fmod(x - q * g, period);
    if (r < 0) r += period;
    if (r > 2 * d * g * (1 + 1e-12) && r < period * (1 - 1e-12)) ++missed;
  }
  return missed;
}

// z_q images of every rank-k town cube, checked for pairwise disjointness.
// The last axis is merged lazily: the sumset of the first d-1 axes is sorted
// once, and one cursor per town of the last axis walks it inside a heap, so
// memory stays at (#towns)^(d-1) while all (#towns)^d cubes are visited.
struct Disjointness {
  bool disjoint = true;
  std::uint64_t cubes = 0;
  double min_separation = INFINITY;
};

inline Disjointness town_cube_images(const kst::InnerFamily& fam, int k, int q) {
  const int d = fam.dim();
  const auto lam = fam.lambdas();
  std::vector<std::vector<Span>> axis(static_cast<std::size_t>(d));
  const auto t = towns(d, k, q);
  for (int i = 0; i < d; ++i)
    for (const auto& s : t)
      axis[i].push_back({lam[i] * fam.phi(q, s.lo), lam[i] * fam.phi(q, s.hi)});

  std::vector<Span> head{{0.0, 0.0}};
  for (int i = 0; i + 1 < d; ++i) {
    std::vector<Span> next;
    next.reserve(head.size() * axis[i].size());
    for (const auto& a : head)
      for (const auto& b : axis[i]) next.push_back({a.lo + b.lo, a.hi + b.hi});
    head.swap(next);
  }
  std::sort(head.begin(), head.end(), [](const Span& a, const Span& b) { return a.lo < b.lo; });

  const auto& last = axis[static_cast<std::size_t>(d - 1)];
  using Item = std::pair<double, std::pair<std::size_t, std::size_t>>;  // lo, (last idx, head idx)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (std::size_t j = 0; j < last.size(); ++j) heap.push({head[0].lo + last[j].lo, {j, 0}});

  Disjointness r;
  double reach = -INFINITY;
  while (!heap.empty()) {
    const auto [lo, idx] = heap.top();
    heap.pop();
    const auto [j, h] = idx;
    const double hi = head[h].hi + last[j].hi;
    ++r.cubes;
    if (r.cubes > 1) {
      r.min_separation = std::min(r.min_separation, lo - reach);
      if (!(lo > reach)) r.disjoint = false;
    }
    reach = std::max(reach, hi);
    if (h + 1 < head.size()) heap.push({head[h + 1].lo + last[j].lo, {j, h + 1}});
  }
  return r;
}

// Largest |det| over all r x r submatrices, r <= 3, by enumeration.
inline double max_volume(const Eigen::MatrixXd& m, int r) {
  std::vector<int> rows(static_cast<std::size_t>(r)), cols(static_cast<std::size_t>(r));
  double best = 0.0;
  auto next = [](std::vector<int>& c, int n) {
    int i = static_cast<int>(c.size()) - 1;
    while (i >= 0 && c[i] == n - static_cast<int>(c.size()) + i) --i;
    if (i < 0) return false;
    ++c[i];
    for (std::size_t j = static_cast<std::size_t>(i) + 1; j < c.size(); ++j) c[j] = c[j - 1] + 1;
    return true;
  };
  for (int i = 0; i < r; ++i) rows[i] = i;
  do {
    for (int i = 0; i < r; ++i) cols[i] = i;
    do {
      Eigen::MatrixXd s(r, r);
      for (int a = 0; a < r; ++a)
        for (int b = 0; b < r; ++b) s(a, b) = m(rows[a], cols[b]);
      best = std::max(best, std::abs(s.determinant()));
    } while (next(cols, static_cast<int>(m.cols())));
  } while (next(rows, static_cast<int>(m.rows())));
  return best;
}

}  // namespace oracle
