#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "invberge/correspondence.hpp"
#include "invberge/distance.hpp"
#include "invberge/grid.hpp"

namespace invberge {

/// Nested open expansions U_{t_1} subset U_{t_2} subset ... around a base graph.
/// Distance-generated families satisfy U_t = { d(., gra M) < t } exactly.
struct ExpansionFamily {
  Correspondence base;
  std::vector<double> levels;
  std::vector<CellMask> masks;
  Metric metric = Metric::euclid;
};

/// Axis-aligned physical sub-box, inclusive bounds per axis.
struct BoxWindow {
  std::vector<std::pair<double, double>> bounds;
};

namespace detail {

inline void require_nonempty_values(const Correspondence& M, const std::string& op) {
  const std::int64_t x = M.first_empty_value();
  if (x >= 0)
    throw std::invalid_argument(op + ": construction requires non-empty values, but M is empty at " +
                                M.domain.describe_point(x));
}

inline std::pair<std::int64_t, std::int64_t> window_axis_range(const Axis& a, double lo, double hi) {
  std::int64_t i0 = -1, i1 = -1;
  for (std::int64_t k = 0; k < a.n; ++k) {
    const double c = a.coord(k);
    if (c >= lo - 1e-12 && c <= hi + 1e-12) {
      if (i0 < 0) i0 = k;
      i1 = k;
    }
  }
  if (i0 < 0 || i1 - i0 + 1 < 2)
    throw std::invalid_argument("window: sub-box keeps fewer than 2 grid points on an axis");
  return {i0, i1};
}

}  // namespace detail

/// Restrict a correspondence to the grid points inside an axis-aligned sub-box.
/// The windowed axes are rebuilt from their end coordinates; steps can drift by
/// one ulp relative to the host grid.
inline Correspondence window_correspondence(const Correspondence& M, const BoxWindow& window) {
  const ProductGrid& g = M.graph.grid;
  if (window.bounds.size() != static_cast<std::size_t>(g.dim()))
    throw std::invalid_argument("window: one (lo,hi) pair per axis required");
  std::vector<std::int64_t> i0(static_cast<std::size_t>(g.dim()));
  std::vector<Axis> axes(static_cast<std::size_t>(g.dim()));
  for (std::int64_t k = 0; k < g.dim(); ++k) {
    const auto [lo, hi] = window.bounds[static_cast<std::size_t>(k)];
    const auto [a, b] = detail::window_axis_range(g.axis(k), lo, hi);
    i0[static_cast<std::size_t>(k)] = a;
    axes[static_cast<std::size_t>(k)] = Axis{g.axis(k).coord(a), g.axis(k).coord(b), b - a + 1};
  }
  const std::int64_t ddim = M.domain.dim();
  ProductGrid dom(std::vector<Axis>(axes.begin(), axes.begin() + ddim));
  ProductGrid cod(std::vector<Axis>(axes.begin() + ddim, axes.end()));
  const ProductGrid full = product(dom, cod);
  CellMask bits = make_mask(full);
  std::vector<std::int64_t> m(static_cast<std::size_t>(g.dim()));
  for (std::int64_t i = 0; i < full.size(); ++i) {
    full.multi_index(i, m);
    for (std::int64_t k = 0; k < g.dim(); ++k) m[static_cast<std::size_t>(k)] += i0[static_cast<std::size_t>(k)];
    bits.bits[static_cast<std::size_t>(i)] = M.graph.bits[static_cast<std::size_t>(g.linear_index(m))];
  }
  return Correspondence{std::move(dom), std::move(cod), std::move(bits)};
}

/// theta = 1 - min(d(., gra M), 1). Equals 1 exactly on gra(M), is below 1 off
/// it, 1-Lipschitz in the chosen metric, with range in [0, 1].
inline ScalarField synth_distance_payoff(const Correspondence& M, Metric metric, int threads = 1) {
  detail::require_nonempty_values(M, "synth_distance_payoff");
  ScalarField theta = distance_transform(M.graph, metric, threads);
  for (double& v : theta.values) v = 1.0 - std::min(v, 1.0);
  return theta;
}

inline ScalarField synth_distance_payoff(const Correspondence& M, Metric metric,
                                         const BoxWindow& window,
                                         Correspondence* windowed_out = nullptr, int threads = 1) {
  Correspondence W = window_correspondence(M, window);
  ScalarField theta = synth_distance_payoff(W, metric, threads);
  if (windowed_out) *windowed_out = std::move(W);
  return theta;
}

/// Strict sublevel masks U_t = { d(., gra M) < t } for strictly increasing levels.
inline ExpansionFamily expansion_family(const Correspondence& M, std::vector<double> levels,
                                        Metric metric, int threads = 1) {
  if (levels.empty()) throw std::invalid_argument("expansion_family: no levels");
  for (std::size_t j = 0; j < levels.size(); ++j) {
    if (!(levels[j] > 0.0)) throw std::invalid_argument("expansion_family: levels must be positive");
    if (j && !(levels[j - 1] < levels[j]))
      throw std::invalid_argument("expansion_family: levels must be strictly increasing");
  }
  const ScalarField d = distance_transform(M.graph, metric, threads);
  ExpansionFamily fam{M, std::move(levels), {}, metric};
  for (const double t : fam.levels) {
    CellMask u = make_mask(M.graph.grid);
    for (std::size_t i = 0; i < u.bits.size(); ++i) u.bits[i] = d.values[i] < t;
    fam.masks.push_back(std::move(u));
  }
  return fam;
}

/// tau(p) = smallest provided level whose mask contains p (0 on the base graph,
/// 1 + max level when p lies in none); theta = 1 - tau ^ 1. The finite family
/// approximates the continuum infimum with error at most the level spacing.
inline ScalarField synth_tau_payoff(const ExpansionFamily& family) {
  if (family.masks.empty() || family.masks.size() != family.levels.size())
    throw std::invalid_argument("synth_tau_payoff: malformed family");
  for (std::size_t j = 0; j + 1 < family.masks.size(); ++j)
    if (!mask_subset(family.masks[j], family.masks[j + 1]))
      throw std::invalid_argument("synth_tau_payoff: non-nested family");
  if (!mask_subset(family.base.graph, family.masks.front()))
    throw std::invalid_argument("synth_tau_payoff: family does not contain the base graph");
  detail::require_nonempty_values(family.base, "synth_tau_payoff");
  const double cap = 1.0 + family.levels.back();
  ScalarField theta = make_field(family.base.graph.grid);
  for (std::size_t i = 0; i < theta.values.size(); ++i) {
    double tau = cap;
    if (family.base.graph.bits[i]) {
      tau = 0.0;
    } else {
      for (std::size_t j = 0; j < family.masks.size(); ++j)
        if (family.masks[j].bits[i]) {
          tau = family.levels[j];
          break;
        }
    }
    theta.values[i] = 1.0 - std::min(tau, 1.0);
  }
  return theta;
}

/// Truncated dyadic sum of metric Urysohn functions
///   theta_n(p) = d(p, gra K \ U_n) / (d(p, gra K \ U_n) + d(p, gra M)),
/// renormalized by 1/(1 - 2^-N) so the sum attains exactly 1 on gra(M).
/// d(., empty) is the box diameter, which keeps theta_n well defined and < 1
/// off gra(M). U_n for n beyond the provided list repeats the finest open.
inline ScalarField synth_urysohn_sum(const Correspondence& M, const Correspondence& K,
                                     const std::vector<CellMask>& shrinking_opens, int terms,
                                     Metric metric = Metric::euclid, int threads = 1) {
  detail::require_nonempty_values(M, "synth_urysohn_sum");
  if (shrinking_opens.empty()) throw std::invalid_argument("synth_urysohn_sum: no opens");
  if (terms < 1) throw std::invalid_argument("synth_urysohn_sum: terms must be >= 1");
  terms = std::min(terms, 52);  // dyadic weights below 2^-52 would not change doubles
  if (!(K.graph.grid == M.graph.grid))
    throw std::invalid_argument("synth_urysohn_sum: M and K live on different grids");
  for (std::size_t j = 0; j < shrinking_opens.size(); ++j) {
    if (!mask_subset(shrinking_opens[j], K.graph))
      throw std::invalid_argument("synth_urysohn_sum: U_" + std::to_string(j + 1) +
                                  " is not contained in gra(K)");
    if (!mask_subset(M.graph, shrinking_opens[j]))
      throw std::invalid_argument("synth_urysohn_sum: gra(M) is not contained in U_" +
                                  std::to_string(j + 1));
    if (j && !mask_subset(shrinking_opens[j], shrinking_opens[j - 1]))
      throw std::invalid_argument("synth_urysohn_sum: opens must be non-increasing");
  }
  const double cap = box_diameter(K.graph.grid, metric);
  const ScalarField dM = distance_transform(M.graph, metric, threads);
  ScalarField acc = make_field(K.graph.grid);
  for (int n = 1; n <= terms; ++n) {
    const CellMask& U = shrinking_opens[std::min<std::size_t>(static_cast<std::size_t>(n) - 1,
                                                              shrinking_opens.size() - 1)];
    const CellMask far_set = mask_minus(K.graph, U);
    std::optional<ScalarField> far;
    if (far_set.any()) far = distance_transform(far_set, metric, threads);
    const double w = std::ldexp(1.0, -n);
    for (std::size_t i = 0; i < acc.values.size(); ++i) {
      const double fa = far ? far->values[i] : cap;
      const double de = fa + dM.values[i];
      if (de == 0.0)
        throw std::runtime_error("synth_urysohn_sum: gra(M) meets gra(K) \\ U_n");
      acc.values[i] += w * (fa / de);
    }
  }
  const double norm = 1.0 - std::ldexp(1.0, -terms);
  for (double& v : acc.values) v /= norm;
  return acc;
}

/// Replace every codomain slice of every mask (and of the base graph) by its
/// grid convex hull. Nesting is preserved; with convex slices the tau payoff
/// becomes quasi-concave on the codomain block.
inline ExpansionFamily convexify_slices(const ExpansionFamily& family) {
  const std::int64_t cdim = family.base.codomain.dim();
  if (cdim > 2)
    throw std::invalid_argument("convexify_slices: hull computation in codomain dimension > 2 rejected");
  ExpansionFamily out = family;
  const std::int64_t ny = family.base.codomain.size();
  const std::int64_t nx = family.base.domain.size();

  auto hull_fill = [&](CellMask& mask) {
    for (std::int64_t x = 0; x < nx; ++x) {
      std::uint8_t* bits = mask.bits.data() + x * ny;
      if (cdim == 1) {
        std::int64_t first = -1, last = -1;
        for (std::int64_t y = 0; y < ny; ++y)
          if (bits[y]) {
            if (first < 0) first = y;
            last = y;
          }
        for (std::int64_t y = first; y >= 0 && y <= last; ++y) bits[y] = 1;
      } else {
        std::vector<detail::HullPoint> pts;
        const std::int64_t n1 = family.base.codomain.axis(1).n;
        for (std::int64_t y = 0; y < ny; ++y)
          if (bits[y]) pts.push_back(detail::HullPoint{y / n1, y % n1});
        if (pts.empty()) continue;
        const auto hull = detail::convex_hull(pts);
        for (std::int64_t y = 0; y < ny; ++y)
          if (!bits[y] && detail::in_hull(hull, detail::HullPoint{y / n1, y % n1})) bits[y] = 1;
      }
    }
  };

  hull_fill(out.base.graph);
  for (auto& m : out.masks) hull_fill(m);
  return out;
}

/// Comparison of the argmax correspondence of theta over K with a target M.
struct InverseReport {
  bool equal = true;
  std::int64_t only_in_argmax_count = 0;
  std::int64_t only_in_target_count = 0;
  std::vector<std::int64_t> only_in_argmax;  // up to 16 sample graph points
  std::vector<std::int64_t> only_in_target;
};

inline InverseReport verify_inverse(const ScalarField& theta, const Correspondence& M,
                                    const Correspondence& K, double tol, int threads = 1) {
  if (!(M.graph.grid == K.graph.grid))
    throw std::invalid_argument("verify_inverse: M and K live on different grids");
  const Correspondence A = argmax_correspondence(K, theta, tol, threads);
  InverseReport rep;
  for (std::size_t i = 0; i < A.graph.bits.size(); ++i) {
    const bool a = A.graph.bits[i] != 0;
    const bool m = M.graph.bits[i] != 0;
    if (a && !m) {
      ++rep.only_in_argmax_count;
      if (rep.only_in_argmax.size() < 16) rep.only_in_argmax.push_back(static_cast<std::int64_t>(i));
    } else if (m && !a) {
      ++rep.only_in_target_count;
      if (rep.only_in_target.size() < 16) rep.only_in_target.push_back(static_cast<std::int64_t>(i));
    }
  }
  rep.equal = rep.only_in_argmax_count == 0 && rep.only_in_target_count == 0;
  return rep;
}

}  // namespace invberge
