#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "invberge/distance.hpp"
#include "invberge/grid.hpp"

using namespace invberge;

namespace {

// O(N^2) reference: exact integer index distances, min over mask points.
std::vector<std::int64_t> brute_index(const CellMask& m, Metric metric) {
  const ProductGrid& g = m.grid;
  std::vector<std::int64_t> out(static_cast<std::size_t>(g.size()), detail::kDistInf);
  std::vector<std::int64_t> a(static_cast<std::size_t>(g.dim()));
  std::vector<std::int64_t> b(static_cast<std::size_t>(g.dim()));
  for (std::int64_t p = 0; p < g.size(); ++p) {
    g.multi_index(p, a);
    std::int64_t best = detail::kDistInf;
    for (std::int64_t q = 0; q < g.size(); ++q) {
      if (!m.test(q)) continue;
      g.multi_index(q, b);
      std::int64_t acc = 0;
      for (std::int64_t k = 0; k < g.dim(); ++k) {
        const std::int64_t d = std::abs(a[static_cast<std::size_t>(k)] - b[static_cast<std::size_t>(k)]);
        switch (metric) {
          case Metric::euclid: acc += d * d; break;
          case Metric::l1: acc += d; break;
          case Metric::linf: acc = std::max(acc, d); break;
        }
      }
      best = std::min(best, acc);
    }
    out[static_cast<std::size_t>(p)] = best;
  }
  return out;
}

CellMask random_mask(const ProductGrid& g, double density, std::mt19937_64& rng) {
  CellMask m = make_mask(g);
  std::bernoulli_distribution coin(density);
  for (auto& b : m.bits) b = coin(rng);
  if (!m.any())
    m.bits[static_cast<std::size_t>(
        std::uniform_int_distribution<std::int64_t>(0, g.size() - 1)(rng))] = 1;
  return m;
}

std::vector<std::int64_t> index_transform(const CellMask& m, Metric metric, int threads = 1) {
  switch (metric) {
    case Metric::euclid: return detail::squared_euclid_index_transform(m, threads);
    case Metric::l1: return detail::l1_index_transform(m, threads);
    case Metric::linf: return detail::linf_index_transform(m, threads);
  }
  throw std::logic_error("unreachable");
}

}  // namespace

TEST_CASE("full mask has an identically zero distance field") {
  const ProductGrid g = build_grid({{0.0, 1.0, 7}, {0.0, 1.0, 7}});
  const CellMask m = make_mask(g, true);
  for (Metric metric : {Metric::euclid, Metric::l1, Metric::linf}) {
    const ScalarField d = distance_transform(m, metric);
    for (double v : d.values) REQUIRE(v == 0.0);
  }
}

TEST_CASE("one dimensional distances from the left endpoint") {
  const ProductGrid g = build_grid({{0.0, 1.0, 3}});
  CellMask m = make_mask(g);
  m.bits[0] = 1;
  const ScalarField d = distance_transform(m, Metric::euclid);
  REQUIRE(d.values == std::vector<double>{0.0, 0.5, 1.0});
}

TEST_CASE("distance to a halfplane mask matches the brute-force minimum") {
  const ProductGrid g = build_grid({{0.0, 1.0, 5}, {0.0, 1.0, 5}});
  CellMask m = make_mask(g);
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const auto p = g.point(i);
    m.bits[static_cast<std::size_t>(i)] = p[0] <= p[1];
  }
  const ScalarField d = distance_transform(m, Metric::euclid);
  const std::int64_t corner[2] = {4, 0};  // (1, 0)
  const double got = d.values[static_cast<std::size_t>(g.linear_index(corner))];
  REQUIRE_THAT(got, Catch::Matchers::WithinAbs(std::sqrt(2.0) / 2.0, 1e-15));
  // same value the brute-force oracle produces
  const auto ref = brute_index(m, Metric::euclid);
  REQUIRE(got == 0.25 * std::sqrt(static_cast<double>(ref[static_cast<std::size_t>(g.linear_index(corner))])));
}

TEST_CASE("distance field vanishes exactly on the mask and only there") {
  std::mt19937_64 rng(11);
  const ProductGrid g = build_grid({{-1.0, 1.0, 17}, {0.0, 2.0, 17}});
  for (int rep = 0; rep < 5; ++rep) {
    const CellMask m = random_mask(g, 0.07, rng);
    for (Metric metric : {Metric::euclid, Metric::l1, Metric::linf}) {
      const ScalarField d = distance_transform(m, metric);
      for (std::int64_t i = 0; i < g.size(); ++i)
        REQUIRE((d.values[static_cast<std::size_t>(i)] == 0.0) == m.test(i));
    }
  }
}

TEST_CASE("index transforms equal brute force exactly on random masks") {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 12; ++rep) {
    const std::int64_t nx = std::uniform_int_distribution<std::int64_t>(2, 24)(rng);
    const std::int64_t ny = std::uniform_int_distribution<std::int64_t>(2, 24)(rng);
    const ProductGrid g = build_grid({{0.0, 1.0, nx}, {0.0, 1.0, ny}});
    const CellMask m = random_mask(g, std::uniform_real_distribution<double>(0.01, 0.4)(rng), rng);
    for (Metric metric : {Metric::euclid, Metric::l1, Metric::linf}) {
      REQUIRE(index_transform(m, metric) == brute_index(m, metric));
    }
  }
  // a 3-D sample as well
  const ProductGrid g3 = build_grid({{0.0, 1.0, 7}, {0.0, 1.0, 6}, {0.0, 1.0, 5}});
  const CellMask m3 = random_mask(g3, 0.05, rng);
  for (Metric metric : {Metric::euclid, Metric::l1, Metric::linf})
    REQUIRE(index_transform(m3, metric) == brute_index(m3, metric));
}

TEST_CASE("anisotropic grids agree with a long-double reference") {
  std::mt19937_64 rng(5);
  const ProductGrid g = build_grid({{0.0, 1.0, 9}, {0.0, 2.0, 13}});
  REQUIRE_FALSE(g.uniform_step());
  for (int rep = 0; rep < 4; ++rep) {
    const CellMask m = random_mask(g, 0.1, rng);
    for (Metric metric : {Metric::euclid, Metric::l1, Metric::linf}) {
      const ScalarField d = distance_transform(m, metric);
      for (std::int64_t p = 0; p < g.size(); ++p) {
        long double best = 1e30L;
        for (std::int64_t q = 0; q < g.size(); ++q) {
          if (!m.test(q)) continue;
          long double acc = 0.0L;
          for (std::int64_t k = 0; k < g.dim(); ++k) {
            const std::int64_t ia = (p / g.stride(k)) % g.axis(k).n;
            const std::int64_t ib = (q / g.stride(k)) % g.axis(k).n;
            const long double dk =
                static_cast<long double>(g.axis(k).step()) * std::abs(static_cast<long double>(ia - ib));
            if (metric == Metric::euclid) acc += dk * dk;
            else if (metric == Metric::l1) acc += dk;
            else acc = std::max(acc, dk);
          }
          best = std::min(best, acc);
        }
        const double ref = metric == Metric::euclid ? static_cast<double>(sqrtl(best))
                                                    : static_cast<double>(best);
        REQUIRE_THAT(d.values[static_cast<std::size_t>(p)], Catch::Matchers::WithinAbs(ref, 1e-12));
      }
    }
  }
}

TEST_CASE("sampled triangle inequality for all metrics") {
  std::mt19937_64 rng(99);
  const ProductGrid g = build_grid({{0.0, 1.0, 21}, {0.0, 1.0, 21}});
  const CellMask m = random_mask(g, 0.03, rng);
  for (Metric metric : {Metric::euclid, Metric::l1, Metric::linf}) {
    const ScalarField d = distance_transform(m, metric);
    std::uniform_int_distribution<std::int64_t> pick(0, g.size() - 1);
    for (int it = 0; it < 2000; ++it) {
      const std::int64_t p = pick(rng), q = pick(rng);
      const double lhs = std::abs(d.values[static_cast<std::size_t>(p)] -
                                  d.values[static_cast<std::size_t>(q)]);
      REQUIRE(lhs <= metric_distance(g, p, q, metric) + 1e-12);
    }
  }
}

TEST_CASE("distance transform is bit-identical for any worker count") {
  std::mt19937_64 rng(17);
  const ProductGrid uni = build_grid({{0.0, 1.0, 33}, {0.0, 1.0, 33}});
  const ProductGrid ani = build_grid({{0.0, 1.0, 33}, {0.0, 3.0, 17}});
  for (const ProductGrid& g : {uni, ani}) {
    const CellMask m = random_mask(g, 0.05, rng);
    for (Metric metric : {Metric::euclid, Metric::l1, Metric::linf}) {
      const ScalarField d1 = distance_transform(m, metric, 1);
      const ScalarField d3 = distance_transform(m, metric, 3);
      const ScalarField d8 = distance_transform(m, metric, 8);
      REQUIRE(d1.values == d3.values);
      REQUIRE(d1.values == d8.values);
    }
  }
}

TEST_CASE("empty mask is rejected with the documented message") {
  const CellMask m = make_mask(build_grid({{0.0, 1.0, 4}}));
  REQUIRE_THROWS_WITH(distance_transform(m, Metric::euclid), "empty set has no distance field");
}
