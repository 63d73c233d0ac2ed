#include <random>

#include "doctest.h"
#include "emfv/oracle.hpp"
#include "emfv/synthetic.hpp"
#include "fixtures.hpp"

using namespace emfv;

TEST_CASE("verify_disjoint") {
  const std::vector<Band> reported{{PersonId("p1"), 0.85, 1.12},
                                   {PersonId("p2"), 1.18, 1.32},
                                   {PersonId("p3"), 0.39, 0.68}};
  CHECK(oracle::verify_disjoint(reported).empty());

  using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;
  const std::vector<Band> overlap{{PersonId("a"), 0.0, 1.0},
                                  {PersonId("b"), 0.5, 2.0}};
  CHECK(oracle::verify_disjoint(overlap) == Pairs{{0, 1}});
  const std::vector<Band> touching{{PersonId("a"), 0.0, 1.0},
                                   {PersonId("b"), 1.0, 2.0}};
  CHECK(oracle::verify_disjoint(touching) == Pairs{{0, 1}});
}

TEST_CASE("linear scan on the reported bands") {
  const auto idx = fixture::reported_bands();
  const auto bands = idx.bands();
  for (double d : {0.0, 0.2, 0.39, 0.5, 0.68, 0.7, 0.95, 1.12, 1.15, 1.149,
                   1.151, 1.18, 1.25, 1.32, 5.0}) {
    CHECK(oracle::linear_scan_classify_distance(bands, d) ==
          idx.classify_distance(d));
  }
  CHECK(std::holds_alternative<EmptyIndex>(
      oracle::linear_scan_classify_distance({}, 0.3).outcome));
}

TEST_CASE("oracle agrees with the index on random galleries") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::size_t dim = seed % 2 == 0 ? 4 : 16;
    const auto rg = synthetic::random_gallery(seed, dim);
    std::mt19937_64 rng(seed + 100);
    const auto probes = synthetic::random_probes(rg.gallery, 10000, rng);
    const auto report =
        oracle::compare_with_index(rg.index, rg.gallery, probes, 5);
    CHECK(report.agreed);
    CHECK(report.mismatches.empty());
    CHECK(report.probes == 10000);
  }
}

TEST_CASE("relative error floor") {
  CHECK(oracle::relative_error(1.0, 1.0) == 0.0);
  CHECK(oracle::relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(oracle::relative_error(0.0, 1e-9) == doctest::Approx(1e-3));
}
