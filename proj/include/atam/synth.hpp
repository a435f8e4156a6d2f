#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "atam/dataset.hpp"
#include "atam/labels.hpp"
#include "atam/matrix.hpp"

namespace atam {

struct SynthConfig {
  std::size_t samples = 2000;
  std::size_t categories = 10;
  std::size_t feature_dim = 64;
  // Strength of the planted co-occurrence structure in [0, 1].
  double kappa = 0.8;
  // Per-class positive rates; empty means evenly spaced in
  // [rate_min, rate_max].
  std::vector<double> positive_rates;
  double rate_min = 0.12;
  double rate_max = 0.30;
  // Norm of each class prototype relative to unit-variance noise.
  double separability = 5.0;
  double noise = 1.0;
  double val_fraction = 0.1;
  double test_fraction = 0.25;
  std::uint64_t seed = 7;
};

struct SynthDataset {
  DatasetManifest manifest;
  Matrix features;
  // Ground truth for every sample, manifest order.
  PartialLabelMatrix truth;
  // Planted latent correlation between categories (1 on the diagonal).
  Matrix planted_correlation;
  std::vector<double> rates;
  std::vector<double> thresholds;
};

std::vector<double> resolved_rates(const SynthConfig& config);

// Labels come from a Gaussian copula: categories are grouped in consecutive
// blocks of alternating size 2 and 3, latent scores within a block share
// correlation 0.9 * kappa, and a category is positive when its score
// exceeds the quantile matching its target rate. Samples left without any
// positive get their highest-margin category. Features are the sum of the
// positive classes' prototypes plus isotropic Gaussian noise.
SynthDataset generate(const SynthConfig& config);

// P(category i and j both positive) under the planted model, before the
// at-least-one-positive repair.
double planted_pair_probability(const SynthDataset& data, std::size_t i, std::size_t j);

// Picks round(keep * N * C) cells (at least one truth-positive per sample
// with positives); returns a mask over cells in row-major order.
std::vector<bool> choose_kept_cells(const PartialLabelMatrix& truth, double keep, std::uint64_t seed);

// Kept cells retain truth, every other cell is forced NEGATIVE; all cells
// carry HUMAN_OR_ORACLE provenance.
PartialLabelMatrix corrupt_missing_as_negative(const PartialLabelMatrix& truth, double keep,
                                               std::uint64_t seed);

// Same kept cells as corrupt_missing_as_negative, others left UNKNOWN.
PartialLabelMatrix keep_partial(const PartialLabelMatrix& truth, double keep, std::uint64_t seed);

}  // namespace atam
