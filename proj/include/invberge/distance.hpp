#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "invberge/grid.hpp"
#include "invberge/parallel.hpp"

namespace invberge {

enum class Metric { euclid, l1, linf };

inline std::string metric_name(Metric m) {
  switch (m) {
    case Metric::euclid: return "euclid";
    case Metric::l1: return "l1";
    case Metric::linf: return "linf";
  }
  return "?";
}

/// Metric distance between two grid points in physical coordinates.
inline double metric_distance(const ProductGrid& g, std::int64_t a, std::int64_t b, Metric metric) {
  double acc = 0.0;
  for (std::int64_t k = 0; k < g.dim(); ++k) {
    const std::int64_t s = g.stride(k);
    const std::int64_t ia = (a / s) % g.axis(k).n;
    const std::int64_t ib = (b / s) % g.axis(k).n;
    const double d = std::abs(static_cast<double>(ia - ib)) * g.axis(k).step();
    switch (metric) {
      case Metric::euclid: acc += d * d; break;
      case Metric::l1: acc += d; break;
      case Metric::linf: acc = std::max(acc, d); break;
    }
  }
  return metric == Metric::euclid ? std::sqrt(acc) : acc;
}

/// Diameter of the grid box in the given metric; the "infinitely far" cap.
inline double box_diameter(const ProductGrid& g, Metric metric) {
  double acc = 0.0;
  for (const Axis& a : g.axes()) {
    const double len = a.hi - a.lo;
    switch (metric) {
      case Metric::euclid: acc += len * len; break;
      case Metric::l1: acc += len; break;
      case Metric::linf: acc = std::max(acc, len); break;
    }
  }
  return metric == Metric::euclid ? std::sqrt(acc) : acc;
}

namespace detail {

constexpr std::int64_t kDistInf = std::int64_t{1} << 60;

// Enumerates the grid lines along one axis: base offset of line L plus the
// element stride. Lines are independent, so passes parallelize over them.
struct LineWalk {
  std::int64_t count;   // number of lines
  std::int64_t n;       // points per line
  std::int64_t stride;  // element stride within a line

  std::int64_t base(std::int64_t line) const {
    return (line / stride) * stride * n + (line % stride);
  }
};

inline LineWalk line_walk(const ProductGrid& g, std::int64_t axis) {
  LineWalk w;
  w.n = g.axis(axis).n;
  w.stride = g.stride(axis);
  w.count = g.size() / w.n;
  return w;
}

// ----- exact integer kernels (index space) -----

// rational a/b vs c/d with b,d > 0, or +/-inf encoded as b == 0 with sign of a.
inline bool rat_le(std::int64_t an, std::int64_t ad, std::int64_t bn, std::int64_t bd) {
  if (ad == 0) return an < 0;           // -inf <= x ; +inf <= x only if x = +inf
  if (bd == 0) return bn > 0;           // x <= +inf ; x <= -inf never for finite x
  return static_cast<__int128>(an) * bd <= static_cast<__int128>(bn) * ad;
}

inline bool rat_lt_int(std::int64_t an, std::int64_t ad, std::int64_t x) {
  if (ad == 0) return an < 0;
  return static_cast<__int128>(an) < static_cast<__int128>(x) * ad;
}

// One lower-envelope pass of the separable squared distance transform.
// Exact: envelope breakpoints are compared as integer rationals.
inline void edt_pass_sq(std::span<std::int64_t> f, std::span<std::int64_t> out,
                        std::span<std::int64_t> v, std::span<std::int64_t> zn,
                        std::span<std::int64_t> zd) {
  const std::int64_t n = static_cast<std::int64_t>(f.size());
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] >= kDistInf) continue;
    std::int64_t sn = 0, sd = 0;
    while (k >= 0) {
      const std::int64_t r = v[k];
      sn = (f[q] + q * q) - (f[r] + r * r);
      sd = 2 * (q - r);
      if (k > 0 && rat_le(sn, sd, zn[k], zd[k])) {
        --k;
        continue;
      }
      break;
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      zn[0] = -1;
      zd[0] = 0;  // -inf
    } else {
      ++k;
      v[k] = q;
      zn[k] = sn;
      zd[k] = sd;
    }
  }
  if (k < 0) {
    for (std::int64_t x = 0; x < n; ++x) out[x] = kDistInf;
    return;
  }
  const std::int64_t top = k;
  k = 0;
  for (std::int64_t x = 0; x < n; ++x) {
    while (k < top && rat_lt_int(zn[k + 1], zd[k + 1], x)) ++k;
    const std::int64_t d = x - v[k];
    out[x] = d * d + f[v[k]];
  }
}

// min-plus sweeps: out[x] = min_q (|x-q| + f[q]), exact integers.
inline void l1_pass(std::span<std::int64_t> f, std::span<std::int64_t> out) {
  const std::int64_t n = static_cast<std::int64_t>(f.size());
  std::int64_t run = kDistInf;
  for (std::int64_t x = 0; x < n; ++x) {
    if (run < kDistInf) ++run;
    run = std::min(run, f[x]);
    out[x] = run;
  }
  run = kDistInf;
  for (std::int64_t x = n; x-- > 0;) {
    if (run < kDistInf) ++run;
    run = std::min(run, f[x]);
    out[x] = std::min(out[x], run);
  }
}

// max-composition pass: out[x] = min_q max(|x-q|, f[q]); outward scan with
// cutoff once the cone term alone exceeds the best candidate.
inline void linf_pass(std::span<std::int64_t> f, std::span<std::int64_t> out) {
  const std::int64_t n = static_cast<std::int64_t>(f.size());
  bool finite = false;
  for (std::int64_t i = 0; i < n && !finite; ++i) finite = f[i] < kDistInf;
  if (!finite) {
    for (std::int64_t x = 0; x < n; ++x) out[x] = kDistInf;
    return;
  }
  for (std::int64_t x = 0; x < n; ++x) {
    std::int64_t best = f[x];
    for (std::int64_t r = 1; r < n; ++r) {
      if (r >= best) break;
      if (x - r >= 0) best = std::min(best, std::max(r, f[x - r]));
      if (x + r < n) best = std::min(best, std::max(r, f[x + r]));
    }
    out[x] = best;
  }
}

template <typename PassFn>
void run_index_passes(const ProductGrid& g, std::vector<std::int64_t>& field, int threads,
                      PassFn&& pass) {
  for (std::int64_t axis = 0; axis < g.dim(); ++axis) {
    const LineWalk w = line_walk(g, axis);
    parallel_for(w.count, threads, [&](std::int64_t lo, std::int64_t hi) {
      std::vector<std::int64_t> buf(static_cast<std::size_t>(w.n));
      std::vector<std::int64_t> res(static_cast<std::size_t>(w.n));
      std::vector<std::int64_t> v(static_cast<std::size_t>(w.n));
      std::vector<std::int64_t> zn(static_cast<std::size_t>(w.n) + 1);
      std::vector<std::int64_t> zd(static_cast<std::size_t>(w.n) + 1);
      for (std::int64_t line = lo; line < hi; ++line) {
        const std::int64_t base = w.base(line);
        for (std::int64_t i = 0; i < w.n; ++i)
          buf[static_cast<std::size_t>(i)] = field[static_cast<std::size_t>(base + i * w.stride)];
        pass(std::span<std::int64_t>(buf), std::span<std::int64_t>(res),
             std::span<std::int64_t>(v), std::span<std::int64_t>(zn), std::span<std::int64_t>(zd));
        for (std::int64_t i = 0; i < w.n; ++i)
          field[static_cast<std::size_t>(base + i * w.stride)] = res[static_cast<std::size_t>(i)];
      }
    });
  }
}

inline std::vector<std::int64_t> index_seed(const CellMask& mask) {
  std::vector<std::int64_t> f(mask.bits.size());
  for (std::size_t i = 0; i < mask.bits.size(); ++i) f[i] = mask.bits[i] ? 0 : kDistInf;
  return f;
}

/// Exact min over mask points of sum of squared index offsets (uniform grids).
inline std::vector<std::int64_t> squared_euclid_index_transform(const CellMask& mask, int threads = 1) {
  auto f = index_seed(mask);
  run_index_passes(mask.grid, f, threads,
                   [](std::span<std::int64_t> in, std::span<std::int64_t> out,
                      std::span<std::int64_t> v, std::span<std::int64_t> zn,
                      std::span<std::int64_t> zd) { edt_pass_sq(in, out, v, zn, zd); });
  return f;
}

/// Exact min over mask points of sum of absolute index offsets.
inline std::vector<std::int64_t> l1_index_transform(const CellMask& mask, int threads = 1) {
  auto f = index_seed(mask);
  run_index_passes(mask.grid, f, threads,
                   [](std::span<std::int64_t> in, std::span<std::int64_t> out,
                      std::span<std::int64_t>, std::span<std::int64_t>,
                      std::span<std::int64_t>) { l1_pass(in, out); });
  return f;
}

/// Exact min over mask points of max absolute index offset.
inline std::vector<std::int64_t> linf_index_transform(const CellMask& mask, int threads = 1) {
  auto f = index_seed(mask);
  run_index_passes(mask.grid, f, threads,
                   [](std::span<std::int64_t> in, std::span<std::int64_t> out,
                      std::span<std::int64_t>, std::span<std::int64_t>,
                      std::span<std::int64_t>) { linf_pass(in, out); });
  return f;
}

// ----- anisotropic kernels (physical units, long double) -----

constexpr long double kDistInfL = std::numeric_limits<long double>::infinity();

template <typename PassFn>
void run_phys_passes(const ProductGrid& g, std::vector<long double>& field, int threads,
                     PassFn&& pass) {
  for (std::int64_t axis = 0; axis < g.dim(); ++axis) {
    const LineWalk w = line_walk(g, axis);
    const long double h = static_cast<long double>(g.axis(axis).step());
    parallel_for(w.count, threads, [&, h](std::int64_t lo, std::int64_t hi) {
      std::vector<long double> buf(static_cast<std::size_t>(w.n));
      std::vector<long double> res(static_cast<std::size_t>(w.n));
      for (std::int64_t line = lo; line < hi; ++line) {
        const std::int64_t base = w.base(line);
        for (std::int64_t i = 0; i < w.n; ++i)
          buf[static_cast<std::size_t>(i)] = field[static_cast<std::size_t>(base + i * w.stride)];
        pass(std::span<long double>(buf), std::span<long double>(res), h);
        for (std::int64_t i = 0; i < w.n; ++i)
          field[static_cast<std::size_t>(base + i * w.stride)] =
              res[static_cast<std::size_t>(i)];
      }
    });
  }
}

inline void euclid_pass_phys(std::span<long double> f, std::span<long double> out, long double h) {
  const std::int64_t n = static_cast<std::int64_t>(f.size());
  const long double w2 = h * h;
  bool finite = false;
  for (std::int64_t i = 0; i < n && !finite; ++i) finite = f[i] < kDistInfL;
  if (!finite) {
    for (std::int64_t x = 0; x < n; ++x) out[x] = kDistInfL;
    return;
  }
  for (std::int64_t x = 0; x < n; ++x) {
    long double best = f[x];
    for (std::int64_t r = 1; r < n; ++r) {
      const long double cone = w2 * static_cast<long double>(r) * static_cast<long double>(r);
      if (cone >= best) break;
      if (x - r >= 0) best = std::min(best, cone + f[x - r]);
      if (x + r < n) best = std::min(best, cone + f[x + r]);
    }
    out[x] = best;
  }
}

inline void l1_pass_phys(std::span<long double> f, std::span<long double> out, long double h) {
  const std::int64_t n = static_cast<std::int64_t>(f.size());
  // out[x] = w*x + min_{q<=x}(f[q] - w*q), then the mirrored sweep.
  long double m = kDistInfL;
  for (std::int64_t x = 0; x < n; ++x) {
    const long double t = h * static_cast<long double>(x);
    m = std::min(m, f[x] - t);
    out[x] = t + m;
  }
  m = kDistInfL;
  for (std::int64_t x = n; x-- > 0;) {
    const long double t = h * static_cast<long double>(x);
    m = std::min(m, f[x] + t);
    out[x] = std::max(std::min(out[x], m - t), 0.0L);
  }
}

inline void linf_pass_phys(std::span<long double> f, std::span<long double> out, long double h) {
  const std::int64_t n = static_cast<std::int64_t>(f.size());
  bool finite = false;
  for (std::int64_t i = 0; i < n && !finite; ++i) finite = f[i] < kDistInfL;
  if (!finite) {
    for (std::int64_t x = 0; x < n; ++x) out[x] = kDistInfL;
    return;
  }
  for (std::int64_t x = 0; x < n; ++x) {
    long double best = f[x];
    for (std::int64_t r = 1; r < n; ++r) {
      const long double cone = h * static_cast<long double>(r);
      if (cone >= best) break;
      if (x - r >= 0) best = std::min(best, std::max(cone, f[x - r]));
      if (x + r < n) best = std::min(best, std::max(cone, f[x + r]));
    }
    out[x] = best;
  }
}

inline std::vector<long double> phys_seed(const CellMask& mask) {
  std::vector<long double> f(mask.bits.size());
  for (std::size_t i = 0; i < mask.bits.size(); ++i) f[i] = mask.bits[i] ? 0.0L : kDistInfL;
  return f;
}

}  // namespace detail

/// Field of distances to the mask, in physical coordinates, min over mask points.
/// Exactly 0 on mask points. On grids whose axes share one step the result is
/// derived from exact integer index transforms; otherwise long-double sweeps.
inline ScalarField distance_transform(const CellMask& mask, Metric metric, int threads = 1) {
  if (mask.grid.empty()) throw std::invalid_argument("distance_transform: empty grid");
  if (!mask.any()) throw std::invalid_argument("empty set has no distance field");
  ScalarField out = make_field(mask.grid);
  if (mask.grid.uniform_step()) {
    const double h = mask.grid.axis(0).step();
    std::vector<std::int64_t> idx;
    switch (metric) {
      case Metric::euclid: idx = detail::squared_euclid_index_transform(mask, threads); break;
      case Metric::l1: idx = detail::l1_index_transform(mask, threads); break;
      case Metric::linf: idx = detail::linf_index_transform(mask, threads); break;
    }
    parallel_for(mask.grid.size(), threads, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t i = lo; i < hi; ++i) {
        const double v = static_cast<double>(idx[static_cast<std::size_t>(i)]);
        out.values[static_cast<std::size_t>(i)] =
            metric == Metric::euclid ? h * std::sqrt(v) : h * v;
      }
    });
    return out;
  }
  std::vector<long double> f = detail::phys_seed(mask);
  switch (metric) {
    case Metric::euclid:
      detail::run_phys_passes(mask.grid, f, threads, detail::euclid_pass_phys);
      break;
    case Metric::l1:
      detail::run_phys_passes(mask.grid, f, threads, detail::l1_pass_phys);
      break;
    case Metric::linf:
      detail::run_phys_passes(mask.grid, f, threads, detail::linf_pass_phys);
      break;
  }
  parallel_for(mask.grid.size(), threads, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const long double v = f[static_cast<std::size_t>(i)];
      out.values[static_cast<std::size_t>(i)] =
          metric == Metric::euclid ? static_cast<double>(sqrtl(v)) : static_cast<double>(v);
    }
  });
  return out;
}

}  // namespace invberge
