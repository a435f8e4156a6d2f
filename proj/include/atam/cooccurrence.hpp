#pragma once

#include <cstddef>
#include <vector>

#include "atam/labels.hpp"
#include "atam/matrix.hpp"
#include "atam/model.hpp"

namespace atam {

// Raw pair counts A over known positives, the normalized adjacency
// Â = D^-1/2 (A + I) D^-1/2, and the same normalization applied to pair
// frequencies A / n (n = samples with a known positive).
struct CooccurrenceGraph {
  std::vector<std::size_t> counts;  // C x C, row-major
  std::size_t categories = 0;
  std::size_t labeled_samples = 0;
  Matrix normalized;
  Matrix frequency_normalized;

  std::size_t count(std::size_t i, std::size_t j) const { return counts[i * categories + j]; }
  const Matrix& propagation(Propagation p) const {
    return p == Propagation::kCounts ? normalized : frequency_normalized;
  }
};

// Counts use cells that are POSITIVE with HUMAN_OR_ORACLE provenance only.
// The diagonal of `counts` stays zero; self loops come from normalization.
CooccurrenceGraph build_cooccurrence(const PartialLabelMatrix& labels);

// Symmetric normalization with self loops; diagonal of `counts` is ignored.
Matrix normalize_adjacency(const std::vector<std::size_t>& counts, std::size_t categories);
// Same rule for real-valued weights.
Matrix normalize_weights(const Matrix& weights);

}  // namespace atam
