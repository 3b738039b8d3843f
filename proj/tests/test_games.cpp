#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "invberge/games.hpp"

using namespace invberge;

namespace {

ProductGrid unit_axis(std::int64_t n) { return build_grid({{0.0, 1.0, n}}); }

PayoffSpec expr_payoff(const std::string& text, int n) {
  return PayoffSpec::from_expression(text, n);
}

CellMask predicate_mask(const ProductGrid& g, const std::string& text) {
  return mask_of_expression(*parse_expression(text, static_cast<int>(g.dim())), g);
}

// the triangle constraints of the two-player example
GnepProblem triangle_gnep(std::int64_t n, const std::string& p1, const std::string& p2) {
  NepProblem nep = make_nep({unit_axis(n), unit_axis(n)}, {expr_payoff(p1, 2), expr_payoff(p2, 2)});
  return make_gnep(std::move(nep),
                   std::vector<CellMask>{predicate_mask(product(unit_axis(n), unit_axis(n)), "x1 <= x2"),
                                         predicate_mask(product(unit_axis(n), unit_axis(n)), "x2 <= 1 - x1")});
}

std::vector<double> profile_point(const EquilibriumSet& eq, const ProductGrid& g, std::size_t i) {
  return g.point(eq.profiles[i]);
}

}  // namespace

TEST_CASE("single player enumeration reduces to the argmax") {
  NepProblem P = make_nep({unit_axis(9)}, {expr_payoff("-(x1 - 0.5) ^ 2", 1)});
  const EquilibriumSet eq = brute_force_nash(P, 0.0);
  REQUIRE(eq.profiles == std::vector<std::int64_t>{4});
  REQUIRE(eq.residuals[0][0] == 0.0);
}

TEST_CASE("strictly decreasing payoffs pin the equilibrium at the origin") {
  NepProblem P = make_nep({unit_axis(5), unit_axis(5)},
                          {expr_payoff("-x1", 2), expr_payoff("-x2", 2)});
  const EquilibriumSet eq = brute_force_nash(P, 0.0);
  REQUIRE(eq.profiles.size() == 1);
  REQUIRE(profile_point(eq, P.full, 0) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("identically zero payoffs make every profile an equilibrium") {
  NepProblem P = make_nep({unit_axis(4), unit_axis(4)},
                          {expr_payoff("0", 2), expr_payoff("0", 2)});
  const EquilibriumSet eq = brute_force_nash(P, 0.0);
  REQUIRE(static_cast<std::int64_t>(eq.profiles.size()) == P.full.size());
}

TEST_CASE("unconstrained generalized game agrees with the classical solver") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 4; ++rep) {
    NepProblem P = make_nep({unit_axis(6), unit_axis(7)},
                            {expr_payoff("x2 - (x1 - 0.3)^2", 2), expr_payoff("-abs(x2 - x1)", 2)});
    const EquilibriumSet nash = brute_force_nash(P, 0.0);
    const EquilibriumSet gnash = brute_force_gnash(as_gnep(P), 0.0);
    REQUIRE(mask_equal(nash.mask, gnash.mask));
    REQUIRE(nash.profiles == gnash.profiles);
  }
}

TEST_CASE("the constrained two-payoff game has the origin as its equilibrium") {
  const GnepProblem P = triangle_gnep(21, "x2 - x1^2", "2*x1 - x2^2");
  const EquilibriumSet eq = brute_force_gnash(P, 0.0);
  REQUIRE(eq.profiles.size() == 1);
  REQUIRE(profile_point(eq, P.nep.full, 0) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("distance payoffs to the constraint graphs solve to the feasible triangle") {
  const std::int64_t n = 21;
  const ProductGrid full = product(unit_axis(n), unit_axis(n));
  const CellMask g1 = predicate_mask(full, "x1 <= x2");
  const CellMask g2 = predicate_mask(full, "x2 <= 1 - x1");
  const CellMask xhat = graph_intersection(std::vector<CellMask>{g1, g2});
  std::vector<PayoffSpec> payoffs;
  for (const CellMask& g : {g1, g2}) {
    ScalarField t = distance_transform(g, Metric::euclid);
    for (double& v : t.values) v = 1.0 - std::min(v, 1.0);
    payoffs.push_back(PayoffSpec::from_field(std::move(t)));
  }
  GnepProblem P = make_gnep(make_nep({unit_axis(n), unit_axis(n)}, std::move(payoffs)),
                            std::vector<CellMask>{g1, g2});
  const EquilibriumSet eq = brute_force_gnash(P, 0.0);
  REQUIRE(mask_equal(eq.mask, xhat));
}

TEST_CASE("equilibria are the intersection of the aligned argmax graphs") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 6; ++rep) {
    // random tabulated payoffs, random interval constraints
    const std::int64_t n1 = 7, n2 = 8;
    NepProblem nep = make_nep(
        {unit_axis(n1), unit_axis(n2)},
        {expr_payoff("0", 2), expr_payoff("0", 2)});
    for (int i = 0; i < 2; ++i) {
      ScalarField f = make_field(nep.full);
      for (auto& v : f.values)
        v = std::ldexp(static_cast<double>(std::uniform_int_distribution<int>(0, 1 << 16)(rng)), -16);
      nep.payoffs[static_cast<std::size_t>(i)] = PayoffSpec::from_field(std::move(f));
    }
    // constraints: x1 in [0, a(x2)], x2 in [0, b(x1)] with positive bounds
    CellMask k1 = make_mask(nep.full), k2 = make_mask(nep.full);
    for (std::int64_t i = 0; i < nep.full.size(); ++i) {
      const auto p = nep.full.point(i);
      k1.bits[static_cast<std::size_t>(i)] = p[0] <= 0.4 + 0.6 * p[1] + 1e-12;
      k2.bits[static_cast<std::size_t>(i)] = p[1] <= 1.0 - 0.5 * p[0] + 1e-12;
    }
    GnepProblem P = make_gnep(std::move(nep), std::vector<CellMask>{k1, k2});
    const EquilibriumSet eq = brute_force_gnash(P, 0.0);
    const auto graphs = aligned_argmax_graphs(P, std::vector<double>{0.0, 0.0});
    const CellMask inter = graph_intersection(std::span<const CellMask>(graphs));
    REQUIRE(mask_equal(eq.mask, inter));
  }
}

TEST_CASE("reduction to a classical game preserves the equilibrium set") {
  SECTION("the constrained two-payoff game") {
    const GnepProblem P = triangle_gnep(26, "x2 - x1^2", "2*x1 - x2^2");
    const ReductionResult r = reduce_gnep_to_nep(P);
    REQUIRE(r.certificate.match);
    REQUIRE(r.certificate.nep.profiles.size() == 1);
    REQUIRE(P.nep.full.point(r.certificate.nep.profiles[0]) == std::vector<double>{0.0, 0.0});
    // synthesized payoffs attain exactly 1 on their argmax graphs
    for (int i = 0; i < 2; ++i) {
      const ScalarField& v = r.reduced.payoffs[static_cast<std::size_t>(i)].table;
      for (std::size_t j = 0; j < v.values.size(); ++j)
        REQUIRE((v.values[j] == 1.0) ==
                (r.argmax_graphs[static_cast<std::size_t>(i)].bits[j] != 0));
    }
  }
  SECTION("unconstrained games reduce without changing equilibria") {
    std::mt19937_64 rng(3);
    NepProblem nep = make_nep({unit_axis(6), unit_axis(6)},
                              {expr_payoff("0", 2), expr_payoff("0", 2)});
    for (int i = 0; i < 2; ++i) {
      ScalarField f = make_field(nep.full);
      for (auto& v : f.values)
        v = std::ldexp(static_cast<double>(std::uniform_int_distribution<int>(0, 1 << 16)(rng)), -16);
      nep.payoffs[static_cast<std::size_t>(i)] = PayoffSpec::from_field(std::move(f));
    }
    const GnepProblem P = as_gnep(nep);
    const ReductionResult r = reduce_gnep_to_nep(P);
    REQUIRE(r.certificate.match);
  }
  SECTION("one player is inverse synthesis of its solution set") {
    NepProblem nep = make_nep({unit_axis(9)}, {expr_payoff("-(x1 - 0.5)^2", 1)});
    GnepProblem P = as_gnep(nep);
    const ReductionResult r = reduce_gnep_to_nep(P);
    REQUIRE(r.certificate.match);
    REQUIRE(r.certificate.nep.profiles == std::vector<std::int64_t>{4});
  }
}

TEST_CASE("inverse payoff synthesis returns the prescribed equilibrium set") {
  const std::int64_t n = 21;
  const ProductGrid full = product(unit_axis(n), unit_axis(n));
  const CellMask g1 = predicate_mask(full, "x1 <= x2");
  const CellMask g2 = predicate_mask(full, "x2 <= 1 - x1");
  const std::vector<ProductGrid> boxes{unit_axis(n), unit_axis(n)};

  SECTION("target equal to the whole feasible triangle") {
    const CellMask xhat = graph_intersection(std::vector<CellMask>{g1, g2});
    const InverseNashResult r = inverse_nash(boxes, {g1, g2}, xhat, Metric::euclid);
    REQUIRE(r.match);
    REQUIRE(mask_equal(r.equilibria.mask, xhat));
  }
  SECTION("a single feasible point becomes the unique equilibrium") {
    CellMask target = make_mask(full);
    const std::int64_t at[2] = {5, 10};  // (0.25, 0.5), feasible
    target.bits[static_cast<std::size_t>(full.linear_index(at))] = 1;
    const InverseNashResult r = inverse_nash(boxes, {g1, g2}, target, Metric::euclid);
    REQUIRE(r.match);
    REQUIRE(r.equilibria.profiles == std::vector<std::int64_t>{full.linear_index(at)});
  }
  SECTION("targets outside the feasible intersection are rejected") {
    CellMask target = make_mask(full);
    const std::int64_t at[2] = {20, 20};  // (1,1) infeasible
    target.bits[static_cast<std::size_t>(full.linear_index(at))] = 1;
    REQUIRE_THROWS_WITH(inverse_nash(boxes, {g1, g2}, target, Metric::euclid),
                        Catch::Matchers::ContainsSubstring("leaves the intersection"));
  }
  SECTION("empty targets are rejected") {
    REQUIRE_THROWS_WITH(inverse_nash(boxes, {g1, g2}, make_mask(full), Metric::euclid),
                        Catch::Matchers::ContainsSubstring("empty"));
  }
}

TEST_CASE("indicator reformulation keeps the equilibrium mask") {
  SECTION("the constrained two-payoff game") {
    const GnepProblem P = triangle_gnep(16, "x2 - x1^2", "2*x1 - x2^2");
    const IndicatorResult r = indicator_reformulation(P, 0.0);
    REQUIRE(r.match);
    REQUIRE(r.gnep.profiles.size() == 1);
    // infeasible profiles carry -inf and are never equilibria
    const ScalarField& phi1 = r.reformulated.payoffs[0].table;
    REQUIRE(phi1.extended);
    for (std::int64_t i = 0; i < P.nep.full.size(); ++i)
      if (!P.feasible[0].test(i)) {
        REQUIRE(phi1.values[static_cast<std::size_t>(i)] ==
                -std::numeric_limits<double>::infinity());
        REQUIRE_FALSE(r.nep.mask.test(i));
      }
  }
  SECTION("identity reformulation for unconstrained games") {
    NepProblem nep = make_nep({unit_axis(7), unit_axis(7)},
                              {expr_payoff("x1 * x2", 2), expr_payoff("-x2 + x1", 2)});
    const GnepProblem P = as_gnep(nep);
    const IndicatorResult r = indicator_reformulation(P, 0.0);
    REQUIRE(r.match);
    REQUIRE(r.reformulated.payoffs[0].table.values ==
            nep.payoffs[0].materialize(nep.full).values);
  }
}

TEST_CASE("the shrinkage sets trap the equilibria for unit-range payoffs") {
  // payoffs 1 - d(., X) ^ 1 attain their maxima exactly at 1, so the
  // multiplicative levels close onto the equilibrium set
  const std::int64_t n = 11;  // h = 0.1 > 1/16
  const ProductGrid full = product(unit_axis(n), unit_axis(n));
  const CellMask g1 = predicate_mask(full, "x1 <= x2");
  const CellMask g2 = predicate_mask(full, "x2 <= 1 - x1");
  const CellMask xhat = graph_intersection(std::vector<CellMask>{g1, g2});
  const InverseNashResult inv = inverse_nash({unit_axis(n), unit_axis(n)}, {g1, g2}, xhat);
  GnepProblem P = make_gnep(make_nep({unit_axis(n), unit_axis(n)}, inv.payoffs),
                            std::vector<CellMask>{g1, g2});
  const GdeltaReport rep = gng_gdelta_check(P, {1, 2, 4, 8, 16});
  REQUIRE(rep.nested);
  REQUIRE(rep.superset);
  REQUIRE(rep.excess_nonincreasing);
  REQUIRE(rep.final_equals_gng);
  REQUIRE(rep.excess.back() == 0);
  REQUIRE(rep.sizes.front() >= rep.sizes.back());
}

TEST_CASE("constant payoffs make every level set the whole grid") {
  NepProblem nep = make_nep({unit_axis(5), unit_axis(5)},
                            {expr_payoff("1", 2), expr_payoff("1", 2)});
  const GnepProblem P = as_gnep(nep);
  const GdeltaReport rep = gng_gdelta_check(P, {1, 2, 4});
  for (std::int64_t s : rep.sizes) REQUIRE(s == P.nep.full.size());
  REQUIRE(rep.final_equals_gng);  // GNG is also everything
}

TEST_CASE("best response iteration walks the two-payoff game to the origin") {
  const GnepProblem P = triangle_gnep(21, "x2 - x1^2", "2*x1 - x2^2");
  const std::int64_t corner[2] = {20, 20};  // (1,1): feasible for K1, not for K2
  const std::int64_t start = P.nep.full.linear_index(corner);
  SECTION("feasibility of the start is enforced by default") {
    REQUIRE_THROWS_WITH(best_response_iteration(P, start, 10, 0.0),
                        Catch::Matchers::ContainsSubstring("infeasible start"));
  }
  SECTION("the documented walk runs with the relaxed start policy") {
    SolveOptions opts;
    BrIterationResult r = best_response_iteration_from_any(P, start, 10, 0.0, opts);
    REQUIRE(r.converged);
    REQUIRE(r.sweeps <= 2);
    REQUIRE(P.nep.full.point(r.trajectory.back()) == std::vector<double>{0.0, 0.0});
    // the fixed profile is in the brute-force set at the same tolerance
    const EquilibriumSet eq = brute_force_gnash(P, 0.0);
    REQUIRE(eq.mask.test(r.trajectory.back()));
  }
}

TEST_CASE("matching pennies cycles and reports no convergence") {
  ProductGrid coin = build_grid({{0.0, 1.0, 2}});
  NepProblem nep = make_nep({coin, coin}, {expr_payoff("0", 2), expr_payoff("0", 2)});
  ScalarField u1 = make_field(nep.full), u2 = make_field(nep.full);
  for (std::int64_t i = 0; i < nep.full.size(); ++i) {
    const auto p = nep.full.point(i);
    const bool same = p[0] == p[1];
    u1.values[static_cast<std::size_t>(i)] = same ? 1.0 : -1.0;
    u2.values[static_cast<std::size_t>(i)] = same ? -1.0 : 1.0;
  }
  nep.payoffs[0] = PayoffSpec::from_field(std::move(u1));
  nep.payoffs[1] = PayoffSpec::from_field(std::move(u2));
  const GnepProblem P = as_gnep(nep);
  const BrIterationResult r = best_response_iteration(P, 0, 50, 0.0);
  REQUIRE_FALSE(r.converged);
  REQUIRE(brute_force_gnash(P, 0.0).profiles.empty());
}

TEST_CASE("a start that is already an equilibrium does not move") {
  const GnepProblem P = triangle_gnep(11, "x2 - x1^2", "2*x1 - x2^2");
  const BrIterationResult r = best_response_iteration(P, 0, 10, 0.0);
  REQUIRE(r.converged);
  REQUIRE(r.sweeps == 0);
  REQUIRE(r.trajectory.back() == 0);
}

TEST_CASE("existence smoke: concave instances keep a Lipschitz-step equilibrium") {
  std::mt19937_64 rng(2718);
  for (int rep = 0; rep < 8; ++rep) {
    const std::int64_t n = 17 + 2 * (rep % 3);
    const double h = 1.0 / static_cast<double>(n - 1);
    std::uniform_real_distribution<double> coef(0.1, 0.45);
    const double a1 = coef(rng), b1 = coef(rng);
    const double a2 = coef(rng), b2 = coef(rng);
    // theta_i = -(x_i - (a_i + b_i x_{-i}))^2: continuous equilibrium inside the box
    const std::string t1 = "-(x1 - (" + std::to_string(a1) + " + " + std::to_string(b1) + " * x2))^2";
    const std::string t2 = "-(x2 - (" + std::to_string(a2) + " + " + std::to_string(b2) + " * x1))^2";
    NepProblem P = make_nep({unit_axis(n), unit_axis(n)}, {expr_payoff(t1, 2), expr_payoff(t2, 2)});
    const double lipschitz = 3.0;  // |d theta / d x_i| <= 2 |x_i - target| <= 2 on the box
    const EquilibriumSet eq = brute_force_nash(P, lipschitz * h);
    REQUIRE_FALSE(eq.profiles.empty());

    // generalized variant with interval constraints still nonempty
    CellMask k1 = make_mask(P.full), k2 = make_mask(P.full);
    for (std::int64_t i = 0; i < P.full.size(); ++i) {
      const auto p = P.full.point(i);
      k1.bits[static_cast<std::size_t>(i)] = p[0] <= 0.6 + 0.4 * p[1] + 1e-12;
      k2.bits[static_cast<std::size_t>(i)] = p[1] <= 0.9 - 0.2 * p[0] + 1e-12;
    }
    GnepProblem G = make_gnep(std::move(P), std::vector<CellMask>{k1, k2});
    const EquilibriumSet geq = brute_force_gnash(G, lipschitz * h);
    REQUIRE_FALSE(geq.profiles.empty());
  }
}

TEST_CASE("the enumeration budget guards against oversized grids") {
  NepProblem P = make_nep({unit_axis(101), unit_axis(101)},
                          {expr_payoff("0", 2), expr_payoff("0", 2)});
  SolveOptions opts;
  opts.budget = 1000;
  REQUIRE_THROWS_WITH(brute_force_nash(P, 0.0, opts),
                      Catch::Matchers::ContainsSubstring("budget"));
}

TEST_CASE("gnep constructor rejects empty constraint slices") {
  NepProblem nep = make_nep({unit_axis(5), unit_axis(5)},
                            {expr_payoff("0", 2), expr_payoff("0", 2)});
  CellMask k1 = predicate_mask(nep.full, "x1 <= x2 - 0.8");  // empty for small x2
  CellMask k2 = make_mask(nep.full, true);
  REQUIRE_THROWS_WITH(make_gnep(std::move(nep), std::vector<CellMask>{k1, k2}),
                      Catch::Matchers::ContainsSubstring("empty value"));
}

TEST_CASE("constraint correspondences align into the full grid") {
  // K1 given on (rival y, own x): x <= y/2; aligned graph must be x1 <= x2/2
  const ProductGrid x = unit_axis(5), y = unit_axis(9);
  NepProblem nep = make_nep({x, y}, {expr_payoff("0", 2), expr_payoff("0", 2)});
  const Correspondence K1 = correspondence_where(
      y, x, [](std::span<const double> p) { return p[1] <= p[0] / 2.0 + 1e-12; });
  const CellMask aligned = align_constraint_graph(nep, 0, K1);
  for (std::int64_t i = 0; i < nep.full.size(); ++i) {
    const auto p = nep.full.point(i);
    REQUIRE((aligned.test(i)) == (p[0] <= p[1] / 2.0 + 1e-12));
  }
}

TEST_CASE("inverse synthesis accepts constraints in correspondence form") {
  const std::int64_t n = 11;
  const ProductGrid box = unit_axis(n);
  // K1: (rival y, own x): x <= y; K2: (rival x, own y): y <= 1 - x
  const Correspondence K1 = correspondence_where(
      box, box, [](std::span<const double> p) { return p[1] <= p[0] + 1e-12; });
  const Correspondence K2 = correspondence_where(
      box, box, [](std::span<const double> p) { return p[1] <= 1.0 - p[0] + 1e-12; });
  const ProductGrid full = product(box, box);
  const CellMask xhat = graph_intersection(
      std::vector<CellMask>{predicate_mask(full, "x1 <= x2 + 0.000000000001"),
                            predicate_mask(full, "x2 <= 1 - x1 + 0.000000000001")});
  const InverseNashResult r =
      inverse_nash({box, box}, std::vector<Correspondence>{K1, K2}, xhat, Metric::euclid);
  REQUIRE(r.match);
}

TEST_CASE("player slices restrict payoff fields at fixed rivals") {
  NepProblem P = make_nep({unit_axis(4), unit_axis(5)},
                          {expr_payoff("x1 + 10 * x2", 2), expr_payoff("0", 2)});
  const ScalarField f = P.payoffs[0].materialize(P.full);
  const std::int64_t rival[1] = {2};  // x2 index
  const ScalarField s0 = player_slice(P, f, 0, rival);
  REQUIRE(s0.grid.size() == 4);
  for (std::int64_t k = 0; k < 4; ++k) {
    const std::int64_t at[2] = {k, 2};
    REQUIRE(s0.values[static_cast<std::size_t>(k)] ==
            f.values[static_cast<std::size_t>(P.full.linear_index(at))]);
  }
  const std::int64_t rival1[1] = {3};  // x1 index
  const ScalarField s1 = player_slice(P, f, 1, rival1);
  REQUIRE(s1.grid.size() == 5);
  REQUIRE(s1.values[4] == f.values[static_cast<std::size_t>(P.full.linear_index(
                              std::array<std::int64_t, 2>{3, 4}))]);
}

TEST_CASE("solvers are thread-count independent") {
  const GnepProblem P = triangle_gnep(16, "x2 - x1^2", "2*x1 - x2^2");
  SolveOptions one, eight;
  one.threads = 1;
  eight.threads = 8;
  const EquilibriumSet a = brute_force_gnash(P, 0.05, one);
  const EquilibriumSet b = brute_force_gnash(P, 0.05, eight);
  REQUIRE(a.profiles == b.profiles);
  REQUIRE(a.residuals == b.residuals);
  REQUIRE(mask_equal(a.mask, b.mask));
}
