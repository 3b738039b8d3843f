#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "invberge/distance.hpp"
#include "invberge/grid.hpp"
#include "invberge/parallel.hpp"

namespace invberge {

/// A set-valued map stored by its graph on domain x codomain (domain axes first).
/// The codomain slice at a fixed domain point is a contiguous bit run.
struct Correspondence {
  ProductGrid domain;
  ProductGrid codomain;
  CellMask graph;

  std::span<const std::uint8_t> values_at(std::int64_t dom_lin) const {
    return std::span<const std::uint8_t>(graph.bits)
        .subspan(static_cast<std::size_t>(dom_lin * codomain.size()),
                 static_cast<std::size_t>(codomain.size()));
  }

  /// Linear index of the first domain point with an empty value set, -1 if none.
  std::int64_t first_empty_value() const {
    for (std::int64_t x = 0; x < domain.size(); ++x) {
      const auto s = values_at(x);
      bool nonempty = false;
      for (auto b : s)
        if (b) {
          nonempty = true;
          break;
        }
      if (!nonempty) return x;
    }
    return -1;
  }

  bool nonempty_valued() const { return first_empty_value() < 0; }
};

inline Correspondence make_correspondence(ProductGrid domain, ProductGrid codomain, CellMask graph) {
  if (!(graph.grid == product(domain, codomain)))
    throw std::invalid_argument("make_correspondence: graph grid must be domain x codomain");
  return Correspondence{std::move(domain), std::move(codomain), std::move(graph)};
}

/// Build a correspondence from a predicate over (domain coords..., codomain coords...).
template <typename Pred>
Correspondence correspondence_where(const ProductGrid& domain, const ProductGrid& codomain,
                                    Pred&& pred) {
  const ProductGrid full = product(domain, codomain);
  CellMask g = make_mask(full);
  std::vector<double> p(static_cast<std::size_t>(full.dim()));
  for (std::int64_t i = 0; i < full.size(); ++i) {
    full.point(i, p);
    g.bits[static_cast<std::size_t>(i)] = pred(std::span<const double>(p)) ? 1 : 0;
  }
  return Correspondence{domain, codomain, std::move(g)};
}

/// x -> { y in K(x) : theta(x,y) >= max over K(x) - tol }. Ties are all kept.
inline Correspondence argmax_correspondence(const Correspondence& K, const ScalarField& theta,
                                            double tol, int threads = 1) {
  if (!(theta.grid == K.graph.grid))
    throw std::invalid_argument("argmax_correspondence: theta not on the graph grid");
  if (tol < 0.0) throw std::invalid_argument("argmax_correspondence: tol must be >= 0");
  const std::int64_t empty = K.first_empty_value();
  if (empty >= 0)
    throw std::invalid_argument("argmax_correspondence: K has an empty value at " +
                                K.domain.describe_point(empty));
  Correspondence M{K.domain, K.codomain, make_mask(K.graph.grid)};
  const std::int64_t ny = K.codomain.size();
  parallel_for(K.domain.size(), threads, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t x = lo; x < hi; ++x) {
      const auto bits = K.values_at(x);
      const std::size_t base = static_cast<std::size_t>(x * ny);
      double best = -std::numeric_limits<double>::infinity();
      for (std::int64_t y = 0; y < ny; ++y)
        if (bits[static_cast<std::size_t>(y)])
          best = std::max(best, theta.values[base + static_cast<std::size_t>(y)]);
      const double cut = best - tol;
      for (std::int64_t y = 0; y < ny; ++y)
        M.graph.bits[base + static_cast<std::size_t>(y)] =
            bits[static_cast<std::size_t>(y)] && theta.values[base + static_cast<std::size_t>(y)] >= cut;
    }
  });
  return M;
}

/// m(x) = max of theta(x, .) over K(x); exact discrete maximum.
inline ScalarField value_function(const Correspondence& K, const ScalarField& theta,
                                  int threads = 1) {
  if (!(theta.grid == K.graph.grid))
    throw std::invalid_argument("value_function: theta not on the graph grid");
  const std::int64_t empty = K.first_empty_value();
  if (empty >= 0)
    throw std::invalid_argument("value_function: K has an empty value at " +
                                K.domain.describe_point(empty));
  ScalarField m = make_field(K.domain);
  const std::int64_t ny = K.codomain.size();
  parallel_for(K.domain.size(), threads, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t x = lo; x < hi; ++x) {
      const auto bits = K.values_at(x);
      const std::size_t base = static_cast<std::size_t>(x * ny);
      double best = -std::numeric_limits<double>::infinity();
      for (std::int64_t y = 0; y < ny; ++y)
        if (bits[static_cast<std::size_t>(y)])
          best = std::max(best, theta.values[base + static_cast<std::size_t>(y)]);
      m.values[static_cast<std::size_t>(x)] = best;
    }
  });
  return m;
}

enum class CorrespondenceProperty {
  usc,
  lsc,
  closed_graph,
  nonempty_values,
  compact_values,
  convex_values,
  quasi_concave,
};

inline std::string property_name(CorrespondenceProperty p) {
  switch (p) {
    case CorrespondenceProperty::usc: return "usc";
    case CorrespondenceProperty::lsc: return "lsc";
    case CorrespondenceProperty::closed_graph: return "closed_graph";
    case CorrespondenceProperty::nonempty_values: return "nonempty_values";
    case CorrespondenceProperty::compact_values: return "compact_values";
    case CorrespondenceProperty::convex_values: return "convex_values";
    case CorrespondenceProperty::quasi_concave: return "quasi_concave";
  }
  return "?";
}

struct PropertyWitness {
  std::int64_t point = -1;     // domain point (full-grid point for quasi_concave)
  std::int64_t neighbor = -1;  // offending second point, -1 when unused
  double radius = 0.0;
};

struct ContinuityReport {
  CorrespondenceProperty property{};
  bool holds = true;
  std::optional<PropertyWitness> witness;
  double delta_used = 0.0;
  std::string note;
};

namespace detail {

// Offsets of domain points within metric distance delta (excluding the origin).
inline std::vector<std::vector<std::int64_t>> neighbor_offsets(const ProductGrid& g, double delta,
                                                               Metric metric) {
  const std::int64_t d = g.dim();
  std::vector<std::int64_t> radius(static_cast<std::size_t>(d));
  std::vector<std::int64_t> cur(static_cast<std::size_t>(d));
  for (std::int64_t k = 0; k < d; ++k) {
    radius[static_cast<std::size_t>(k)] =
        static_cast<std::int64_t>(std::floor(delta / g.axis(k).step() + 1e-12));
    cur[static_cast<std::size_t>(k)] = -radius[static_cast<std::size_t>(k)];
  }
  std::vector<std::vector<std::int64_t>> out;
  while (true) {
    double acc = 0.0;
    bool zero = true;
    for (std::int64_t k = 0; k < d; ++k) {
      const double t = std::abs(static_cast<double>(cur[static_cast<std::size_t>(k)])) *
                       g.axis(k).step();
      if (cur[static_cast<std::size_t>(k)] != 0) zero = false;
      switch (metric) {
        case Metric::euclid: acc += t * t; break;
        case Metric::l1: acc += t; break;
        case Metric::linf: acc = std::max(acc, t); break;
      }
    }
    const double dist = metric == Metric::euclid ? std::sqrt(acc) : acc;
    if (!zero && dist <= delta + 1e-12) out.push_back(cur);
    std::int64_t k;
    for (k = d - 1; k >= 0; --k) {
      if (++cur[static_cast<std::size_t>(k)] <= radius[static_cast<std::size_t>(k)]) break;
      cur[static_cast<std::size_t>(k)] = -radius[static_cast<std::size_t>(k)];
    }
    if (k < 0) break;
  }
  return out;
}

// T(w) subset of the delta-expansion of T(z)? dist_z is the codomain distance
// field of T(z), null when T(z) is empty.
inline bool expansion_covers(const Correspondence& T, std::int64_t w, const ScalarField* dist_z,
                             double delta) {
  const auto bits = T.values_at(w);
  for (std::int64_t y = 0; y < T.codomain.size(); ++y) {
    if (!bits[static_cast<std::size_t>(y)]) continue;
    if (dist_z == nullptr) return false;
    if (dist_z->values[static_cast<std::size_t>(y)] > delta + 1e-12) return false;
  }
  return true;
}

struct HullPoint {
  std::int64_t x, y;
};

inline std::int64_t cross(const HullPoint& o, const HullPoint& a, const HullPoint& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew monotone chain; returns hull in counterclockwise order without repeats.
inline std::vector<HullPoint> convex_hull(std::vector<HullPoint> pts) {
  std::sort(pts.begin(), pts.end(), [](const HullPoint& a, const HullPoint& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const HullPoint& a, const HullPoint& b) {
                          return a.x == b.x && a.y == b.y;
                        }),
            pts.end());
  if (pts.size() <= 2) return pts;
  std::vector<HullPoint> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = pts.size() - 1; i-- > 0;) {
    while (k >= lower && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

inline bool in_hull(const std::vector<HullPoint>& hull, const HullPoint& p) {
  if (hull.empty()) return false;
  if (hull.size() == 1) return hull[0].x == p.x && hull[0].y == p.y;
  if (hull.size() == 2) {
    const auto& a = hull[0];
    const auto& b = hull[1];
    if (cross(a, b, p) != 0) return false;
    const std::int64_t dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
    const std::int64_t len2 = (b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y);
    return dot >= 0 && dot <= len2;
  }
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    if (cross(a, b, p) < 0) return false;
  }
  return true;
}

// Is the set bit pattern equal to its integer convex hull on the slice grid?
inline bool slice_grid_convex(const ProductGrid& cod, std::span<const std::uint8_t> bits,
                              std::int64_t* offender) {
  if (cod.dim() == 1) {
    std::int64_t first = -1, last = -1;
    for (std::int64_t y = 0; y < cod.size(); ++y)
      if (bits[static_cast<std::size_t>(y)]) {
        if (first < 0) first = y;
        last = y;
      }
    for (std::int64_t y = first; y >= 0 && y <= last; ++y)
      if (!bits[static_cast<std::size_t>(y)]) {
        if (offender) *offender = y;
        return false;
      }
    return true;
  }
  if (cod.dim() == 2) {
    std::vector<HullPoint> pts;
    const std::int64_t n1 = cod.axis(1).n;
    for (std::int64_t y = 0; y < cod.size(); ++y)
      if (bits[static_cast<std::size_t>(y)]) pts.push_back(HullPoint{y / n1, y % n1});
    if (pts.empty()) return true;
    const auto hull = convex_hull(pts);
    for (std::int64_t y = 0; y < cod.size(); ++y) {
      if (bits[static_cast<std::size_t>(y)]) continue;
      if (in_hull(hull, HullPoint{y / n1, y % n1})) {
        if (offender) *offender = y;
        return false;
      }
    }
    return true;
  }
  throw std::invalid_argument("convex-value check supports codomain dimension <= 2");
}

}  // namespace detail

/// Discrete surrogate continuity checks at resolution delta. Reports, never
/// throws on a mathematical failure; a false verdict carries a witness.
inline ContinuityReport check_property(const Correspondence& T, CorrespondenceProperty property,
                                       double delta, Metric metric = Metric::euclid) {
  ContinuityReport rep;
  rep.property = property;
  rep.delta_used = delta;
  rep.note = "discrete surrogate at resolution delta";

  switch (property) {
    case CorrespondenceProperty::closed_graph:
      rep.holds = true;
      rep.note = "grid masks are closed at grid resolution";
      return rep;
    case CorrespondenceProperty::compact_values:
      rep.note = "grid subsets of a compact box are compact";
      return rep;
    case CorrespondenceProperty::nonempty_values: {
      const std::int64_t empty = T.first_empty_value();
      if (empty >= 0) {
        rep.holds = false;
        rep.witness = PropertyWitness{empty, -1, 0.0};
      }
      rep.note = "slice scan";
      return rep;
    }
    case CorrespondenceProperty::convex_values: {
      for (std::int64_t x = 0; x < T.domain.size(); ++x) {
        std::int64_t offender = -1;
        if (!detail::slice_grid_convex(T.codomain, T.values_at(x), &offender)) {
          rep.holds = false;
          rep.witness = PropertyWitness{x, offender, 0.0};
          rep.note = "grid convex hull membership differs from the slice";
          return rep;
        }
      }
      rep.note = "grid convex hull membership equals every slice";
      return rep;
    }
    case CorrespondenceProperty::quasi_concave:
      throw std::invalid_argument("check_property: use quasiconcavity_check for fields");
    case CorrespondenceProperty::usc:
    case CorrespondenceProperty::lsc:
      break;
  }

  if (delta < T.domain.min_step() * (1.0 - 1e-12))
    throw std::invalid_argument("check_property: delta must be at least one domain grid step");
  const auto offsets = detail::neighbor_offsets(T.domain, delta, metric);
  std::vector<std::int64_t> zm(static_cast<std::size_t>(T.domain.dim()));
  std::vector<std::int64_t> wm(static_cast<std::size_t>(T.domain.dim()));
  for (std::int64_t z = 0; z < T.domain.size(); ++z) {
    // codomain distance field of T(z); empty slice handled as a null field
    CellMask slice = make_mask(T.codomain);
    const auto bits = T.values_at(z);
    bool nonempty = false;
    for (std::int64_t y = 0; y < T.codomain.size(); ++y) {
      slice.bits[static_cast<std::size_t>(y)] = bits[static_cast<std::size_t>(y)];
      nonempty = nonempty || bits[static_cast<std::size_t>(y)];
    }
    std::optional<ScalarField> dist;
    if (nonempty) dist = distance_transform(slice, metric);
    T.domain.multi_index(z, zm);
    for (const auto& off : offsets) {
      bool valid = true;
      for (std::int64_t k = 0; k < T.domain.dim(); ++k) {
        wm[static_cast<std::size_t>(k)] = zm[static_cast<std::size_t>(k)] + off[static_cast<std::size_t>(k)];
        if (wm[static_cast<std::size_t>(k)] < 0 || wm[static_cast<std::size_t>(k)] >= T.domain.axis(k).n) {
          valid = false;
          break;
        }
      }
      if (!valid) continue;
      const std::int64_t w = T.domain.linear_index(wm);
      if (!detail::expansion_covers(T, w, dist ? &*dist : nullptr, delta)) {
        rep.holds = false;
        // usc fails at the center z (its neighbor escapes the expansion of T(z));
        // lsc fails at the neighbor w (T(w) is not reached by T(z)).
        if (property == CorrespondenceProperty::usc)
          rep.witness = PropertyWitness{z, w, delta};
        else
          rep.witness = PropertyWitness{w, z, delta};
        return rep;
      }
    }
  }
  return rep;
}

/// Re-run the failed pair recorded in a usc/lsc report.
inline bool witness_reproduces(const Correspondence& T, const ContinuityReport& rep,
                               Metric metric = Metric::euclid) {
  if (!rep.witness) return false;
  const std::int64_t z = rep.property == CorrespondenceProperty::usc ? rep.witness->point
                                                                     : rep.witness->neighbor;
  const std::int64_t w = rep.property == CorrespondenceProperty::usc ? rep.witness->neighbor
                                                                     : rep.witness->point;
  CellMask slice = make_mask(T.codomain);
  const auto bits = T.values_at(z);
  bool nonempty = false;
  for (std::int64_t y = 0; y < T.codomain.size(); ++y) {
    slice.bits[static_cast<std::size_t>(y)] = bits[static_cast<std::size_t>(y)];
    nonempty = nonempty || bits[static_cast<std::size_t>(y)];
  }
  std::optional<ScalarField> dist;
  if (nonempty) dist = distance_transform(slice, metric);
  return !detail::expansion_covers(T, w, dist ? &*dist : nullptr, rep.delta_used);
}

/// Pointwise AND of masks on one shared grid.
inline CellMask graph_intersection(std::span<const CellMask> masks) {
  if (masks.empty()) throw std::invalid_argument("graph_intersection: no masks");
  CellMask out = masks.front();
  for (std::size_t i = 1; i < masks.size(); ++i) {
    if (!(masks[i].grid == out.grid))
      throw std::invalid_argument("graph_intersection: grid mismatch");
    for (std::size_t j = 0; j < out.bits.size(); ++j)
      out.bits[j] = out.bits[j] && masks[i].bits[j];
  }
  return out;
}

inline CellMask graph_intersection(const std::vector<CellMask>& masks) {
  return graph_intersection(std::span<const CellMask>(masks));
}

/// Intersection of correspondence graphs sharing one product grid.
inline CellMask graph_intersection(std::span<const Correspondence> maps) {
  std::vector<CellMask> masks;
  for (const Correspondence& t : maps) masks.push_back(t.graph);
  return graph_intersection(std::span<const CellMask>(masks));
}

/// Quasi-concavity of theta restricted to an axis block, slice by slice.
/// 1-D blocks get the exact contiguous-superlevel test; higher blocks a sampled
/// on-grid midpoint test.
inline ContinuityReport quasiconcavity_check(const ScalarField& theta, std::int64_t block_begin,
                                             std::int64_t block_len, double tol = 0.0) {
  ContinuityReport rep;
  rep.property = CorrespondenceProperty::quasi_concave;
  rep.delta_used = tol;
  const auto shape = detail::block_shape(theta.grid, block_begin, block_len);
  const ProductGrid block = block_grid(theta.grid, block_begin, block_len);

  if (block_len == 1) {
    rep.note = "exact contiguous superlevel runs on every slice";
    const std::int64_t n = block.size();
    for (std::int64_t hi = 0; hi < shape.hi_count; ++hi)
      for (std::int64_t lo = 0; lo < shape.lo_count; ++lo) {
        std::int64_t peak = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::int64_t b = 0; b < n; ++b) {
          const double v = theta.values[static_cast<std::size_t>(shape.full(hi, b, lo))];
          if (v > best) {
            best = v;
            peak = b;
          }
        }
        for (std::int64_t b = 0; b + 1 <= peak; ++b) {
          const double a = theta.values[static_cast<std::size_t>(shape.full(hi, b, lo))];
          const double c = theta.values[static_cast<std::size_t>(shape.full(hi, b + 1, lo))];
          if (c < a - tol) {
            rep.holds = false;
            rep.witness = PropertyWitness{shape.full(hi, b, lo), shape.full(hi, peak, lo), tol};
            return rep;
          }
        }
        for (std::int64_t b = peak; b + 1 < n; ++b) {
          const double a = theta.values[static_cast<std::size_t>(shape.full(hi, b, lo))];
          const double c = theta.values[static_cast<std::size_t>(shape.full(hi, b + 1, lo))];
          if (c > a + tol) {
            rep.holds = false;
            rep.witness = PropertyWitness{shape.full(hi, peak, lo), shape.full(hi, b + 1, lo), tol};
            return rep;
          }
        }
      }
    return rep;
  }

  rep.note = "sampled on-grid midpoint test";
  std::mt19937_64 rng(0x5eedULL);
  std::vector<std::int64_t> y1(static_cast<std::size_t>(block_len));
  std::vector<std::int64_t> y2(static_cast<std::size_t>(block_len));
  std::vector<std::int64_t> ym(static_cast<std::size_t>(block_len));
  for (std::int64_t hi = 0; hi < shape.hi_count; ++hi)
    for (std::int64_t lo = 0; lo < shape.lo_count; ++lo) {
      for (int it = 0; it < 256; ++it) {
        for (std::int64_t k = 0; k < block_len; ++k) {
          const std::int64_t nk = block.axis(k).n;
          std::int64_t a = std::uniform_int_distribution<std::int64_t>(0, nk - 1)(rng);
          std::int64_t b = std::uniform_int_distribution<std::int64_t>(0, nk - 1)(rng);
          if ((a + b) % 2 != 0) {
            if (b + 1 < nk) ++b;
            else --b;
          }
          y1[static_cast<std::size_t>(k)] = a;
          y2[static_cast<std::size_t>(k)] = b;
          ym[static_cast<std::size_t>(k)] = (a + b) / 2;
        }
        const std::int64_t l1 = block.linear_index(y1);
        const std::int64_t l2 = block.linear_index(y2);
        const std::int64_t lm = block.linear_index(ym);
        const double v1 = theta.values[static_cast<std::size_t>(shape.full(hi, l1, lo))];
        const double v2 = theta.values[static_cast<std::size_t>(shape.full(hi, l2, lo))];
        const double vm = theta.values[static_cast<std::size_t>(shape.full(hi, lm, lo))];
        if (vm < std::min(v1, v2) - tol - 1e-12) {
          rep.holds = false;
          rep.witness = PropertyWitness{shape.full(hi, l1, lo), shape.full(hi, l2, lo), tol};
          return rep;
        }
      }
    }
  return rep;
}

}  // namespace invberge
