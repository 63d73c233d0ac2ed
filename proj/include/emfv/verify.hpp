#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "emfv/oracle.hpp"
#include "emfv/store.hpp"

namespace emfv {

struct VerifyReport {
  std::size_t persons = 0;
  std::size_t samples = 0;
  std::vector<std::pair<std::string, std::string>> overlaps;
  std::vector<std::string> samples_outside_band;  // person ids
  std::string load_error;  // empty when the strict load succeeded
  oracle::OracleReport oracle;

  bool ok() const {
    return overlaps.empty() && samples_outside_band.empty() &&
           load_error.empty() && oracle.agreed;
  }
};

// Audits a parsed snapshot without trusting it: raw pairwise overlap check,
// every stored sample inside its own band, then (if the strict load works)
// index vs linear scan on the stored samples plus `random_probes` probes.
VerifyReport verify_snapshot(const SnapshotDocument& doc,
                             std::size_t random_probes, std::uint64_t seed);

}  // namespace emfv
