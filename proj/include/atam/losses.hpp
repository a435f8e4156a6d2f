#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "atam/labels.hpp"
#include "atam/matrix.hpp"

namespace atam {

struct LossConfig {
  double alpha_focal = 0.25;
  double gamma = 2.0;
  double epsilon = 0.5;
  // Class proportions p_beta; empty means "derive from the label matrix".
  std::vector<double> class_weights;
};

void validate_loss_config(const LossConfig& config, std::size_t categories);

inline constexpr double kProbClamp = 1e-7;

// p_beta[c] = known positives of c / all known positives. Classes without
// positives get a floor of 0.01 / C before renormalization.
std::vector<double> class_proportions(const PartialLabelMatrix& labels);

// Weighted focal term for one cell, without the class weight. `positive`
// selects the alpha * (1-p)^gamma * -log p branch.
double focal_cell(double p, bool positive, double alpha, double gamma);
// d focal_cell / d z where p = sigmoid(z / temperature).
double focal_cell_grad(double p, bool positive, double alpha, double gamma, double temperature);

// Mean over cells of p_beta[c] * focal term. targets are +1/-1.
double focal_loss_known(std::span<const double> probabilities, std::span<const int> targets,
                        std::span<const std::size_t> categories, const LossConfig& config);
// Same form with p = temp_sigmoid(z, T) per cell. Throws when a temperature
// is missing (non-positive or NaN).
double focal_loss_pseudo(std::span<const double> logits, std::span<const double> temperatures,
                         std::span<const int> targets, std::span<const std::size_t> categories,
                         const LossConfig& config);

double total_loss(double known_loss, double pseudo_loss, double epsilon);

enum class LossMode {
  // Known (human/oracle) cells only.
  kKnownOnly,
  // Known cells through sigmoid plus PSEUDO cells through the temperature
  // sigmoid, mixed with epsilon.
  kWeighted,
  // Every labeled cell (known, pseudo and fallback) through sigmoid, as plain
  // known targets.
  kAllLabeled,
};

struct BatchLoss {
  double known = 0.0;
  double pseudo = 0.0;
  double total = 0.0;
  std::size_t known_cells = 0;
  std::size_t pseudo_cells = 0;
  Matrix dlogits;  // d total / d logits
};

// Loss and logit gradients for a batch. `rows[b]` maps batch row b to the
// label row. `temperatures` is only read in kWeighted mode.
BatchLoss batch_loss(const Matrix& logits, const PartialLabelMatrix& labels,
                     std::span<const std::size_t> rows, const Matrix& temperatures,
                     const std::vector<double>& class_weights, const LossConfig& config,
                     LossMode mode);

}  // namespace atam
