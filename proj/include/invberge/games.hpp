#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "invberge/correspondence.hpp"
#include "invberge/distance.hpp"
#include "invberge/expr.hpp"
#include "invberge/grid.hpp"
#include "invberge/synthesis.hpp"

namespace invberge {

/// A player's payoff: a compiled expression over the full profile coordinates,
/// or a tabulated field on the full grid (extended fields may carry -inf).
struct PayoffSpec {
  bool analytic = false;
  ExprPtr expr;
  std::string source;
  ScalarField table;

  static PayoffSpec from_expression(const std::string& text, int n_coords) {
    PayoffSpec p;
    p.analytic = true;
    p.source = text;
    p.expr = parse_expression(text, n_coords);
    return p;
  }

  static PayoffSpec from_field(ScalarField f) {
    PayoffSpec p;
    p.analytic = false;
    p.table = std::move(f);
    return p;
  }

  ScalarField materialize(const ProductGrid& full, int threads = 1) const {
    if (analytic) return tabulate_expression(*expr, full, threads);
    if (!(table.grid == full))
      throw std::invalid_argument("PayoffSpec: tabulated payoff lives on a different grid");
    return table;
  }
};

struct NepProblem {
  std::vector<ProductGrid> strategy_boxes;
  std::vector<PayoffSpec> payoffs;
  ProductGrid full;
  std::vector<std::pair<std::int64_t, std::int64_t>> blocks;  // (axis begin, axis count)

  int players() const { return static_cast<int>(strategy_boxes.size()); }
};

inline NepProblem make_nep(std::vector<ProductGrid> boxes, std::vector<PayoffSpec> payoffs) {
  if (boxes.empty()) throw std::invalid_argument("make_nep: at least one player required");
  if (boxes.size() != payoffs.size())
    throw std::invalid_argument("make_nep: one payoff per player required");
  std::vector<Axis> axes;
  std::vector<std::pair<std::int64_t, std::int64_t>> blocks;
  for (const auto& b : boxes) {
    blocks.emplace_back(static_cast<std::int64_t>(axes.size()), b.dim());
    axes.insert(axes.end(), b.axes().begin(), b.axes().end());
  }
  NepProblem P;
  P.strategy_boxes = std::move(boxes);
  P.payoffs = std::move(payoffs);
  P.full = ProductGrid(std::move(axes));
  P.blocks = std::move(blocks);
  return P;
}

/// Generalized game: per-player feasibility graphs gra(K_i) stored aligned on
/// the full profile grid (player blocks in natural order).
struct GnepProblem {
  NepProblem nep;
  std::vector<CellMask> feasible;
};

/// Destination-to-source axis map taking K_i's (rivals ascending, then own
/// block) layout onto the full grid's natural player order.
inline std::vector<std::int64_t> alignment_perm(const NepProblem& P, int player) {
  const std::int64_t own_begin = P.blocks[static_cast<std::size_t>(player)].first;
  const std::int64_t own_len = P.blocks[static_cast<std::size_t>(player)].second;
  std::vector<std::int64_t> perm(static_cast<std::size_t>(P.full.dim()));
  std::int64_t rival_axis = 0;
  for (int j = 0; j < P.players(); ++j) {
    const auto [begin, len] = P.blocks[static_cast<std::size_t>(j)];
    if (j == static_cast<int>(player)) continue;
    for (std::int64_t o = 0; o < len; ++o)
      perm[static_cast<std::size_t>(begin + o)] = rival_axis++;
  }
  const std::int64_t own_src = rival_axis;
  for (std::int64_t o = 0; o < own_len; ++o)
    perm[static_cast<std::size_t>(own_begin + o)] = own_src + o;
  return perm;
}

inline CellMask align_constraint_graph(const NepProblem& P, int player, const Correspondence& K) {
  const auto perm = alignment_perm(P, player);
  CellMask aligned = permute_axes(K.graph, perm);
  if (!(aligned.grid == P.full))
    throw std::invalid_argument("align_constraint_graph: constraint axes do not match the game");
  return aligned;
}

inline GnepProblem make_gnep(NepProblem nep, std::vector<CellMask> aligned_graphs) {
  if (aligned_graphs.size() != static_cast<std::size_t>(nep.players()))
    throw std::invalid_argument("make_gnep: one constraint graph per player required");
  for (std::size_t i = 0; i < aligned_graphs.size(); ++i) {
    if (!(aligned_graphs[i].grid == nep.full))
      throw std::invalid_argument("make_gnep: constraint graph " + std::to_string(i + 1) +
                                  " is not on the full grid");
    const auto shape = detail::block_shape(nep.full, nep.blocks[i].first, nep.blocks[i].second);
    for (std::int64_t hi = 0; hi < shape.hi_count; ++hi)
      for (std::int64_t lo = 0; lo < shape.lo_count; ++lo) {
        bool nonempty = false;
        for (std::int64_t k = 0; k < shape.block_count && !nonempty; ++k)
          nonempty = aligned_graphs[i].test(shape.full(hi, k, lo));
        if (!nonempty)
          throw std::invalid_argument("make_gnep: K_" + std::to_string(i + 1) +
                                      " has an empty value at rival index " +
                                      std::to_string(shape.rest(hi, lo)));
      }
  }
  return GnepProblem{std::move(nep), std::move(aligned_graphs)};
}

inline GnepProblem make_gnep(NepProblem nep, const std::vector<Correspondence>& constraints) {
  std::vector<CellMask> aligned;
  for (int i = 0; i < nep.players(); ++i)
    aligned.push_back(align_constraint_graph(nep, i, constraints[static_cast<std::size_t>(i)]));
  return make_gnep(std::move(nep), std::move(aligned));
}

struct EquilibriumSet {
  std::vector<std::int64_t> profiles;             // ascending full-grid indices
  std::vector<std::vector<double>> residuals;     // [profile][player], all <= epsilon
  double epsilon = 0.0;
  CellMask mask;
};

struct SolveOptions {
  std::int64_t budget = 10'000'000;  // profile-deviation pairs
  int threads = 1;
};

namespace detail {

struct GameTables {
  std::vector<ScalarField> payoff;
  std::vector<BlockShape> shape;
  std::vector<std::vector<double>> value;  // m_i indexed by rival index
};

inline void check_budget(const NepProblem& P, const SolveOptions& opts) {
  __int128 pairs = 0;
  for (const auto& b : P.strategy_boxes)
    pairs += static_cast<__int128>(P.full.size()) * b.size();
  if (pairs > opts.budget) {
    const double approx = static_cast<double>(pairs);
    throw std::invalid_argument(
        "enumeration budget exceeded: about " + std::to_string(approx) +
        " profile-deviation pairs, budget " + std::to_string(opts.budget) +
        "; raise the budget or coarsen the grid");
  }
}

// Per-rival maxima (and the feasibility-restricted variant for GNEPs).
inline GameTables build_tables(const NepProblem& P, const std::vector<CellMask>* feasible,
                               int threads) {
  GameTables t;
  for (int i = 0; i < P.players(); ++i) {
    t.payoff.push_back(P.payoffs[static_cast<std::size_t>(i)].materialize(P.full, threads));
    t.shape.push_back(block_shape(P.full, P.blocks[static_cast<std::size_t>(i)].first,
                                  P.blocks[static_cast<std::size_t>(i)].second));
  }
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < P.players(); ++i) {
    const BlockShape& s = t.shape[static_cast<std::size_t>(i)];
    std::vector<double>& m = t.value.emplace_back(static_cast<std::size_t>(s.rest_count()), neg_inf);
    const ScalarField& theta = t.payoff[static_cast<std::size_t>(i)];
    const CellMask* K = feasible ? &(*feasible)[static_cast<std::size_t>(i)] : nullptr;
    parallel_for(s.hi_count, threads, [&](std::int64_t lo_hi, std::int64_t hi_hi) {
      for (std::int64_t hi = lo_hi; hi < hi_hi; ++hi)
        for (std::int64_t lo = 0; lo < s.lo_count; ++lo) {
          double best = neg_inf;
          for (std::int64_t k = 0; k < s.block_count; ++k) {
            const std::int64_t lin = s.full(hi, k, lo);
            if (K && !K->test(lin)) continue;
            best = std::max(best, theta.values[static_cast<std::size_t>(lin)]);
          }
          m[static_cast<std::size_t>(s.rest(hi, lo))] = best;
        }
    });
  }
  return t;
}

inline EquilibriumSet enumerate_equilibria(const NepProblem& P,
                                           const std::vector<CellMask>* feasible, double epsilon,
                                           const SolveOptions& opts) {
  if (epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
  check_budget(P, opts);
  const GameTables t = build_tables(P, feasible, opts.threads);
  EquilibriumSet out;
  out.epsilon = epsilon;
  out.mask = make_mask(P.full);
  const int p = P.players();
  parallel_for(P.full.size(), opts.threads, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t lin = lo; lin < hi; ++lin) {
      bool ok = true;
      for (int i = 0; ok && i < p; ++i) {
        if (feasible && !(*feasible)[static_cast<std::size_t>(i)].test(lin)) {
          ok = false;
          break;
        }
        const BlockShape& s = t.shape[static_cast<std::size_t>(i)];
        std::int64_t h, k, l;
        s.split(lin, h, k, l);
        const double resid = t.value[static_cast<std::size_t>(i)][static_cast<std::size_t>(s.rest(h, l))] -
                             t.payoff[static_cast<std::size_t>(i)].values[static_cast<std::size_t>(lin)];
        ok = resid <= epsilon;
      }
      out.mask.bits[static_cast<std::size_t>(lin)] = ok;
    }
  });
  for (std::int64_t lin = 0; lin < P.full.size(); ++lin) {
    if (!out.mask.test(lin)) continue;
    out.profiles.push_back(lin);
    std::vector<double> r(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) {
      const BlockShape& s = t.shape[static_cast<std::size_t>(i)];
      std::int64_t h, k, l;
      s.split(lin, h, k, l);
      r[static_cast<std::size_t>(i)] =
          t.value[static_cast<std::size_t>(i)][static_cast<std::size_t>(s.rest(h, l))] -
          t.payoff[static_cast<std::size_t>(i)].values[static_cast<std::size_t>(lin)];
    }
    out.residuals.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

/// Exactly the grid profiles whose every unilateral grid deviation gains at
/// most epsilon.
inline EquilibriumSet brute_force_nash(const NepProblem& P, double epsilon,
                                       const SolveOptions& opts = {}) {
  return detail::enumerate_equilibria(P, nullptr, epsilon, opts);
}

/// As brute_force_nash, with deviations restricted to K_i(x_{-i}) and
/// feasibility x_i in K_i(x_{-i}) required of the profile itself.
inline EquilibriumSet brute_force_gnash(const GnepProblem& P, double epsilon,
                                        const SolveOptions& opts = {}) {
  return detail::enumerate_equilibria(P.nep, &P.feasible, epsilon, opts);
}

/// Aligned gra(M_i) for every player: the per-rival argmax marked on the full
/// grid. tol <= 0 keeps exact float maxima only.
inline std::vector<CellMask> aligned_argmax_graphs(const GnepProblem& P,
                                                   std::span<const double> tols,
                                                   const SolveOptions& opts = {}) {
  const detail::GameTables t = detail::build_tables(P.nep, &P.feasible, opts.threads);
  std::vector<CellMask> graphs;
  for (int i = 0; i < P.nep.players(); ++i) {
    const double tol = tols.empty() ? 0.0 : tols[static_cast<std::size_t>(i)];
    CellMask g = make_mask(P.nep.full);
    const detail::BlockShape& s = t.shape[static_cast<std::size_t>(i)];
    parallel_for(P.nep.full.size(), opts.threads, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t lin = lo; lin < hi; ++lin) {
        if (!P.feasible[static_cast<std::size_t>(i)].test(lin)) continue;
        std::int64_t h, k, l;
        s.split(lin, h, k, l);
        const double m = t.value[static_cast<std::size_t>(i)][static_cast<std::size_t>(s.rest(h, l))];
        g.bits[static_cast<std::size_t>(lin)] =
            t.payoff[static_cast<std::size_t>(i)].values[static_cast<std::size_t>(lin)] >= m - tol;
      }
    });
    graphs.push_back(std::move(g));
  }
  return graphs;
}

/// Default argmax tolerance policy: exact for tabulated payoffs, machine-scale
/// times the field range for analytic ones (grid sampling perturbs maxima).
inline std::vector<double> default_argmax_tols(const GnepProblem& P, int threads = 1) {
  std::vector<double> tols;
  for (int i = 0; i < P.nep.players(); ++i) {
    const PayoffSpec& spec = P.nep.payoffs[static_cast<std::size_t>(i)];
    if (!spec.analytic) {
      tols.push_back(0.0);
      continue;
    }
    const ScalarField f = spec.materialize(P.nep.full, threads);
    double lo = f.values.front(), hi = f.values.front();
    for (double v : f.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    tols.push_back(1e-12 * std::max(1.0, hi - lo));
  }
  return tols;
}

struct ReductionCertificate {
  EquilibriumSet gnep;
  EquilibriumSet nep;
  bool match = false;
};

struct ReductionResult {
  NepProblem reduced;
  std::vector<CellMask> argmax_graphs;
  ReductionCertificate certificate;
};

/// Replace each payoff/constraint pair by a synthesized payoff that peaks at 1
/// exactly on gra(M_i); the generalized equilibria of the input coincide with
/// the classical equilibria of the result (certificate computed at epsilon 0).
inline ReductionResult reduce_gnep_to_nep(const GnepProblem& P, Metric metric = Metric::euclid,
                                          std::optional<std::vector<double>> tols = std::nullopt,
                                          const SolveOptions& opts = {}) {
  const std::vector<double> use_tols = tols ? *tols : default_argmax_tols(P, opts.threads);
  ReductionResult out;
  out.argmax_graphs = aligned_argmax_graphs(P, use_tols, opts);
  std::vector<PayoffSpec> payoffs;
  for (int i = 0; i < P.nep.players(); ++i) {
    ScalarField v = distance_transform(out.argmax_graphs[static_cast<std::size_t>(i)], metric,
                                       opts.threads);
    for (double& x : v.values) x = 1.0 - std::min(x, 1.0);
    payoffs.push_back(PayoffSpec::from_field(std::move(v)));
  }
  out.reduced = make_nep(P.nep.strategy_boxes, std::move(payoffs));
  out.certificate.gnep = brute_force_gnash(P, 0.0, opts);
  out.certificate.nep = brute_force_nash(out.reduced, 0.0, opts);
  out.certificate.match = mask_equal(out.certificate.gnep.mask, out.certificate.nep.mask);
  return out;
}

struct InverseNashResult {
  std::vector<PayoffSpec> payoffs;
  EquilibriumSet equilibria;
  bool match = false;
  std::int64_t mismatch_count = 0;
  std::vector<std::int64_t> mismatches;  // up to 16 sample profiles
};

/// Payoffs theta_i = 1 - d(., target) ^ 1 whose generalized game returns the
/// target as its equilibrium set; the certificate re-solves and compares.
inline InverseNashResult inverse_nash(const std::vector<ProductGrid>& boxes,
                                      const std::vector<CellMask>& aligned_graphs,
                                      const CellMask& target, Metric metric = Metric::euclid,
                                      double epsilon = 0.0, const SolveOptions& opts = {}) {
  if (!target.any()) throw std::invalid_argument("inverse_nash: target set is empty");
  std::vector<CellMask> graphs = aligned_graphs;
  CellMask inter = graph_intersection(std::span<const CellMask>(graphs));
  if (!(target.grid == inter.grid))
    throw std::invalid_argument("inverse_nash: target not on the full grid");
  std::string offenders;
  int shown = 0;
  for (std::int64_t i = 0; i < target.grid.size() && shown < 8; ++i)
    if (target.test(i) && !inter.test(i)) {
      offenders += (shown ? ", " : "") + target.grid.describe_point(i);
      ++shown;
    }
  if (shown > 0)
    throw std::invalid_argument(
        "inverse_nash: target leaves the intersection of the constraint graphs at " + offenders);

  ScalarField theta = distance_transform(target, metric, opts.threads);
  for (double& v : theta.values) v = 1.0 - std::min(v, 1.0);

  InverseNashResult out;
  std::vector<PayoffSpec> payoffs;
  for (std::size_t i = 0; i < boxes.size(); ++i) payoffs.push_back(PayoffSpec::from_field(theta));
  out.payoffs = payoffs;
  GnepProblem G = make_gnep(make_nep(boxes, std::move(payoffs)), graphs);
  out.equilibria = brute_force_gnash(G, epsilon, opts);
  for (std::int64_t i = 0; i < target.grid.size(); ++i) {
    if (out.equilibria.mask.test(i) != target.test(i)) {
      ++out.mismatch_count;
      if (out.mismatches.size() < 16) out.mismatches.push_back(i);
    }
  }
  out.match = out.mismatch_count == 0;
  return out;
}

/// Constraint correspondences given as K_i: C_{-i} => C_i are aligned first.
inline InverseNashResult inverse_nash(const std::vector<ProductGrid>& boxes,
                                      const std::vector<Correspondence>& constraints,
                                      const CellMask& target, Metric metric = Metric::euclid,
                                      double epsilon = 0.0, const SolveOptions& opts = {}) {
  std::vector<PayoffSpec> dummy;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    dummy.push_back(PayoffSpec::from_expression("0", 1));
  const NepProblem shell = make_nep(boxes, std::move(dummy));
  std::vector<CellMask> aligned;
  for (int i = 0; i < shell.players(); ++i)
    aligned.push_back(align_constraint_graph(shell, i, constraints[static_cast<std::size_t>(i)]));
  return inverse_nash(boxes, aligned, target, metric, epsilon, opts);
}

/// Restriction of a full-grid field to one player's block at fixed rivals.
inline ScalarField player_slice(const NepProblem& P, const ScalarField& f, int player,
                                std::span<const std::int64_t> rival_multi) {
  return slice_block(f, P.blocks[static_cast<std::size_t>(player)].first,
                     P.blocks[static_cast<std::size_t>(player)].second, rival_multi);
}

inline CellMask player_slice(const NepProblem& P, const CellMask& m, int player,
                             std::span<const std::int64_t> rival_multi) {
  return slice_block(m, P.blocks[static_cast<std::size_t>(player)].first,
                     P.blocks[static_cast<std::size_t>(player)].second, rival_multi);
}

struct IndicatorResult {
  NepProblem reformulated;
  EquilibriumSet gnep;
  EquilibriumSet nep;
  bool match = false;
};

/// phi_i = theta_i on gra(K_i) and -inf off it; the classical game over the
/// extended payoffs has exactly the generalized equilibria.
inline IndicatorResult indicator_reformulation(const GnepProblem& P, double epsilon = 0.0,
                                               const SolveOptions& opts = {}) {
  std::vector<PayoffSpec> payoffs;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < P.nep.players(); ++i) {
    ScalarField phi = P.nep.payoffs[static_cast<std::size_t>(i)].materialize(P.nep.full, opts.threads);
    phi.extended = true;
    for (std::size_t j = 0; j < phi.values.size(); ++j)
      if (!P.feasible[static_cast<std::size_t>(i)].bits[j]) phi.values[j] = neg_inf;
    payoffs.push_back(PayoffSpec::from_field(std::move(phi)));
  }
  IndicatorResult out;
  out.reformulated = make_nep(P.nep.strategy_boxes, std::move(payoffs));
  out.gnep = brute_force_gnash(P, epsilon, opts);
  out.nep = brute_force_nash(out.reformulated, epsilon, opts);
  out.match = mask_equal(out.gnep.mask, out.nep.mask);
  return out;
}

struct GdeltaReport {
  std::vector<int> levels;
  std::vector<std::int64_t> sizes;   // |S_n|
  std::vector<std::int64_t> excess;  // |S_n \ GNG|
  bool nested = true;
  bool superset = true;
  bool excess_nonincreasing = true;
  bool final_equals_gng = false;
  CellMask gng;
  std::vector<CellMask> s_masks;
};

/// Sets S_n = intersection over players of { theta_i > (1 - 1/n) m_i(x_{-i}) },
/// compared against the exact generalized equilibrium set.
inline GdeltaReport gng_gdelta_check(const GnepProblem& P, std::vector<int> n_levels,
                                     const SolveOptions& opts = {}) {
  if (n_levels.empty()) throw std::invalid_argument("gng_gdelta_check: no levels");
  for (int n : n_levels)
    if (n < 1) throw std::invalid_argument("gng_gdelta_check: levels must be >= 1");
  const detail::GameTables t = detail::build_tables(P.nep, &P.feasible, opts.threads);
  GdeltaReport rep;
  rep.levels = std::move(n_levels);
  rep.gng = brute_force_gnash(P, 0.0, opts).mask;
  const int p = P.nep.players();
  for (std::size_t li = 0; li < rep.levels.size(); ++li) {
    const double scale = 1.0 - 1.0 / static_cast<double>(rep.levels[li]);
    CellMask s = make_mask(P.nep.full);
    parallel_for(P.nep.full.size(), opts.threads, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t lin = lo; lin < hi; ++lin) {
        bool in = true;
        for (int i = 0; in && i < p; ++i) {
          const detail::BlockShape& sh = t.shape[static_cast<std::size_t>(i)];
          std::int64_t h, k, l;
          sh.split(lin, h, k, l);
          const double m =
              t.value[static_cast<std::size_t>(i)][static_cast<std::size_t>(sh.rest(h, l))];
          in = t.payoff[static_cast<std::size_t>(i)].values[static_cast<std::size_t>(lin)] >
               scale * m;
        }
        s.bits[static_cast<std::size_t>(lin)] = in;
      }
    });
    rep.sizes.push_back(s.count());
    rep.excess.push_back(mask_minus(s, rep.gng).count());
    if (li > 0) {
      rep.nested = rep.nested && mask_subset(s, rep.s_masks.back());
      rep.excess_nonincreasing = rep.excess_nonincreasing && rep.excess[li] <= rep.excess[li - 1];
    }
    rep.superset = rep.superset && mask_subset(rep.gng, s);
    rep.s_masks.push_back(std::move(s));
  }
  rep.final_equals_gng = mask_equal(rep.s_masks.back(), rep.gng);
  return rep;
}

struct BrIterationResult {
  std::vector<std::int64_t> trajectory;  // profile after each sweep, start first
  bool converged = false;
  std::int64_t sweeps = 0;
};

namespace detail {

inline BrIterationResult br_iterate(const GnepProblem& P, std::int64_t start,
                                    std::int64_t max_iter, double tol, const SolveOptions& opts,
                                    bool require_feasible) {
  const int p = P.nep.players();
  if (start < 0 || start >= P.nep.full.size())
    throw std::out_of_range("best_response_iteration: start outside the grid");
  if (require_feasible)
    for (int i = 0; i < p; ++i)
      if (!P.feasible[static_cast<std::size_t>(i)].test(start))
        throw std::invalid_argument("best_response_iteration: infeasible start");
  const GameTables t = build_tables(P.nep, &P.feasible, opts.threads);
  BrIterationResult out;
  std::int64_t cur = start;
  out.trajectory.push_back(cur);
  for (std::int64_t sweep = 0; sweep < max_iter; ++sweep) {
    const std::int64_t before = cur;
    for (int i = 0; i < p; ++i) {
      const BlockShape& s = t.shape[static_cast<std::size_t>(i)];
      std::int64_t h, k, l;
      s.split(cur, h, k, l);
      double best = -std::numeric_limits<double>::infinity();
      std::int64_t arg = k;
      for (std::int64_t kk = 0; kk < s.block_count; ++kk) {
        const std::int64_t lin = s.full(h, kk, l);
        if (!P.feasible[static_cast<std::size_t>(i)].test(lin)) continue;
        const double v = t.payoff[static_cast<std::size_t>(i)].values[static_cast<std::size_t>(lin)];
        if (v > best) {
          best = v;
          arg = kk;
        }
      }
      cur = s.full(h, arg, l);
    }
    if (cur == before) {
      out.converged = true;  // fixed profile: an exact equilibrium
      break;
    }
    out.trajectory.push_back(cur);
    ++out.sweeps;
    bool all_small = true;
    for (int i = 0; all_small && i < p; ++i) {
      if (!P.feasible[static_cast<std::size_t>(i)].test(cur)) {
        all_small = false;
        break;
      }
      const BlockShape& s = t.shape[static_cast<std::size_t>(i)];
      std::int64_t h, k, l;
      s.split(cur, h, k, l);
      all_small =
          t.value[static_cast<std::size_t>(i)][static_cast<std::size_t>(s.rest(h, l))] -
              t.payoff[static_cast<std::size_t>(i)].values[static_cast<std::size_t>(cur)] <=
          tol;
    }
    if (all_small) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Cyclic exact grid best response with lowest-index tie break. Stops at a
/// fixed profile, or earlier when every residual is at most tol; never claims
/// nonexistence. sweeps counts profile-changing sweeps, so a start that is
/// already an equilibrium reports zero.
inline BrIterationResult best_response_iteration(const GnepProblem& P, std::int64_t start,
                                                 std::int64_t max_iter, double tol,
                                                 const SolveOptions& opts = {}) {
  return detail::br_iterate(P, start, max_iter, tol, opts, /*require_feasible=*/true);
}

/// Same dynamics started from any grid profile; the first sweep restores
/// feasibility player by player.
inline BrIterationResult best_response_iteration_from_any(const GnepProblem& P, std::int64_t start,
                                                          std::int64_t max_iter, double tol,
                                                          const SolveOptions& opts = {}) {
  return detail::br_iterate(P, start, max_iter, tol, opts, /*require_feasible=*/false);
}

/// Convenience wrapper: a classical game is a generalized game whose every
/// constraint graph is the whole grid.
inline GnepProblem as_gnep(const NepProblem& P) {
  std::vector<CellMask> all;
  for (int i = 0; i < P.players(); ++i) all.push_back(make_mask(P.full, true));
  return GnepProblem{P, std::move(all)};
}

}  // namespace invberge
