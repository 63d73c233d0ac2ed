#include "emfv/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "emfv/banded_index.hpp"
#include "emfv/errors.hpp"
#include "emfv/synthetic.hpp"

namespace emfv {

std::size_t comparison_bound(std::size_t bands) {
  std::size_t ceil_log = 0;
  while ((std::size_t{1} << ceil_log) < bands) ++ceil_log;
  return ceil_log + 2;
}

std::vector<BenchRow> run_bench(std::span<const std::size_t> sizes,
                                std::size_t queries, std::uint64_t seed) {
  if (queries == 0) throw InvalidArgumentError("bench needs >= 1 query");
  std::vector<BenchRow> rows;
  for (std::size_t m : sizes) {
    if (m == 0) throw InvalidArgumentError("bench sizes must be >= 1");
    std::mt19937_64 rng(seed ^ (m * 0x9e3779b97f4a7c15ull));
    auto bands = synthetic::random_disjoint_bands(m, rng);
    const double top = bands.back().high + 1.0;
    BandedIndex index = BandedIndex::from_bands(
        MeanVector({0.0}, 1), std::move(bands), IndexOptions{}, 1);

    std::uniform_real_distribution<double> where(0.0, top);
    std::vector<double> probes(queries);
    for (double& d : probes) d = where(rng);

    BenchRow row;
    row.bands = m;
    row.queries = queries;
    row.bound = comparison_bound(m);
    std::size_t total = 0;
    for (double d : probes) {
      const std::size_t c = index.lookup_cost_distance(d);
      total += c;
      row.max_comparisons = std::max(row.max_comparisons, c);
    }
    row.mean_comparisons =
        static_cast<double>(total) / static_cast<double>(queries);

    const auto start = std::chrono::steady_clock::now();
    volatile std::size_t sink = 0;
    for (double d : probes) sink = sink + index.classify_distance(d).outcome.index();
    const auto elapsed = std::chrono::steady_clock::now() - start;
    row.nanos_per_query =
        std::chrono::duration<double, std::nano>(elapsed).count() /
        static_cast<double>(queries);
    rows.push_back(row);
  }
  return rows;
}

double log_slope(std::span<const BenchRow> rows) {
  if (rows.size() < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : rows) {
    const double x = std::log2(static_cast<double>(r.bands));
    sx += x;
    sy += r.mean_comparisons;
    sxx += x * x;
    sxy += x * r.mean_comparisons;
  }
  const auto n = static_cast<double>(rows.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<std::size_t> bench_sizes(std::size_t max_bands) {
  std::vector<std::size_t> sizes;
  if (max_bands >= 2) sizes.push_back(2);
  for (std::size_t m = 8; m <= max_bands; m *= 8) sizes.push_back(m);
  if (sizes.empty() || sizes.back() != max_bands) sizes.push_back(max_bands);
  return sizes;
}

}  // namespace emfv
