#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "atam/labels.hpp"
#include "atam/matrix.hpp"

namespace atam {

struct UlpConfig {
  double beta = 0.8;
  double alpha_temp = 10.0;
  std::size_t warmup_epochs = 10;
  std::size_t cap_epochs = 50;
  double t_min = 0.5;
  double t_max = 20.0;
};

void validate_ulp_config(const UlpConfig& config);

// T = clamp(alpha_temp * population-std({Â[m][j] : j in known}), t_min, t_max)
double compute_temperature(std::span<const std::size_t> known_categories, std::size_t unknown_category,
                           const Matrix& adjacency, const UlpConfig& config);

// 1 / (1 + exp(-z / T)); saturates cleanly for large |z / T|.
double temp_sigmoid(double z, double temperature);

enum class PseudoDecision { kNegative = -1, kAbstain = 0, kPositive = 1 };

// +1 if p >= beta, -1 if p < 1 - beta, abstain otherwise.
PseudoDecision select_pseudo_label(double probability, const UlpConfig& config);
std::vector<PseudoDecision> select_pseudo_labels(std::span<const double> probabilities,
                                                 const UlpConfig& config);

// Temperatures for every UNKNOWN or PSEUDO cell of samples with at least one
// known label, computed against that sample's known categories. Other cells
// hold 0 (undefined).
Matrix temperature_field(const PartialLabelMatrix& labels, const Matrix& adjacency,
                         const UlpConfig& config);

struct PseudoLabelStats {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t abstain = 0;
  double mean_t = 0.0;
  double min_t = 0.0;
  double max_t = 0.0;
};

// Step 2: clears existing PSEUDO cells and regenerates them from `logits`
// (rows aligned with label rows) through the temperature sigmoid. Samples
// without known labels are skipped.
PseudoLabelStats refresh_pseudo_labels(PartialLabelMatrix& labels, const Matrix& logits,
                                       const Matrix& temperatures, const UlpConfig& config);

// Every remaining UNKNOWN cell of a training sample (one with known labels)
// becomes NEGATIVE / FALLBACK_NEGATIVE.
// Throws kFailedPrecondition when epoch < cap_epochs. Returns the number of
// cells finalized.
std::size_t finalize_difficult_labels(PartialLabelMatrix& labels, std::size_t epoch,
                                      const UlpConfig& config);

}  // namespace atam
