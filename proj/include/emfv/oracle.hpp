#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emfv/banded_index.hpp"
#include "emfv/neuralnet.hpp"

// Brute-force reference implementations. Nothing here calls into the
// banded index's search or the core distance routine; agreement between the
// two is the point of the exercise.
namespace emfv::oracle {

// Exhaustive O(m) classification: every band is examined. Same outcome
// semantics as BandedIndex::classify.
ClassificationResult linear_scan_classify(const Gallery& gallery,
                                          const MeanVector& mean,
                                          std::span<const Band> bands,
                                          const FeatureVector& probe,
                                          double tie_tolerance = 0.0);

ClassificationResult linear_scan_classify_distance(std::span<const Band> bands,
                                                   double distance,
                                                   double tie_tolerance = 0.0);

// Classification first, then every remaining band by a full sort on
// (interval distance, person id).
IdentifyResult linear_scan_identify_distance(std::span<const Band> bands,
                                             double distance,
                                             std::size_t max_neighbors,
                                             double tie_tolerance = 0.0);

// Index pairs (i, j), i < j, of closed intervals that intersect. Plain
// O(m^2) pairwise check in the given order.
std::vector<std::pair<std::size_t, std::size_t>> verify_disjoint(
    std::span<const Band> bands);

struct Mismatch {
  std::string probe;  // short description, never the vector itself
  std::string fast;
  std::string reference;
};

struct OracleReport {
  bool agreed = true;
  std::size_t probes = 0;
  std::vector<Mismatch> mismatches;

  void add(Mismatch m) {
    mismatches.push_back(std::move(m));
    agreed = false;
  }
};

// Classifies and identifies each probe with the index and with the linear
// scan and records every disagreement.
OracleReport compare_with_index(const BandedIndex& index,
                                const Gallery& gallery,
                                std::span<const FeatureVector> probes,
                                std::size_t max_neighbors);

std::string describe(const ClassificationResult& result);
std::string describe(const IdentifyResult& result);

// Central difference (L(w + eps) - L(w - eps)) / (2 eps) of the
// cross-entropy loss for every weight and bias.
Gradients finite_difference_gradient(const Network& network,
                                     const Tensor& input, std::size_t label,
                                     double epsilon);

// |a - b| / max(|a|, |b|, floor). The floor keeps gradients that are zero
// in exact arithmetic from dividing finite-difference rounding by zero.
double relative_error(double analytic, double numeric, double floor = 1e-6);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
  std::size_t worst_layer = 0;
  std::size_t worst_index = 0;
};

GradientCheck compare_gradients(const Gradients& analytic,
                                const Gradients& numeric,
                                double floor = 1e-6);

}  // namespace emfv::oracle
