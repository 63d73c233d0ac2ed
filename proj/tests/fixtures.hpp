#pragma once

#include <random>
#include <vector>

#include "emfv/banded_index.hpp"
#include "emfv/synthetic.hpp"

namespace fixture {

// The three reported bands, exactly, over a one-coordinate mean.
inline emfv::BandedIndex reported_bands(emfv::IndexOptions options = {}) {
  using emfv::Band;
  using emfv::PersonId;
  std::vector<Band> bands{{PersonId("p1"), 0.85, 1.12},
                          {PersonId("p2"), 1.18, 1.32},
                          {PersonId("p3"), 0.39, 0.68}};
  return emfv::BandedIndex::from_bands(emfv::MeanVector({0.0}, 1),
                                       std::move(bands), options, 1);
}

// A 256-dim gallery whose distances to its own mean span the reported ranges.
inline emfv::Gallery reported_gallery(std::uint64_t seed,
                                      std::size_t samples = 20) {
  emfv::synthetic::DistanceShell shell(256);
  std::mt19937_64 rng(seed);
  const auto ranges = emfv::synthetic::reported_ranges(samples);
  return emfv::synthetic::gallery_from_ranges(shell, ranges, rng);
}

}  // namespace fixture
