#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace emfv {

struct BenchRow {
  std::size_t bands = 0;
  std::size_t queries = 0;
  double mean_comparisons = 0.0;
  std::size_t max_comparisons = 0;
  std::size_t bound = 0;  // ceil(log2 m) + 2
  double nanos_per_query = 0.0;
};

std::size_t comparison_bound(std::size_t bands);

// For each size, classifies `queries` random distances against random
// disjoint bands and records the interval comparisons used.
std::vector<BenchRow> run_bench(std::span<const std::size_t> sizes,
                                std::size_t queries, std::uint64_t seed);

// Least-squares slope of mean comparisons against log2(bands).
double log_slope(std::span<const BenchRow> rows);

// 2, 8, 64, 512, ... up to `max_bands`, plus `max_bands` itself.
std::vector<std::size_t> bench_sizes(std::size_t max_bands);

}  // namespace emfv
