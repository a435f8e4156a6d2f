#include "atam/ulp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "atam/error.hpp"

namespace atam {

void validate_ulp_config(const UlpConfig& c) {
  if (!(c.beta > 0.5 && c.beta < 1.0)) throw Error(ErrorCode::kConfig, "ulp.beta must be in (0.5, 1)");
  if (!(c.alpha_temp > 0.0)) throw Error(ErrorCode::kConfig, "ulp.alpha_temp must be positive");
  if (!(c.t_min > 0.0 && c.t_min <= c.t_max))
    throw Error(ErrorCode::kConfig, "ulp temperature clamp needs 0 < t_min <= t_max");
  if (c.cap_epochs < c.warmup_epochs)
    throw Error(ErrorCode::kConfig, "ulp.cap_epochs must be >= ulp.warmup_epochs");
}

double compute_temperature(std::span<const std::size_t> known, std::size_t m, const Matrix& adjacency,
                           const UlpConfig& config) {
  if (known.empty()) throw Error(ErrorCode::kFailedPrecondition, "no known labels for temperature");
  const double n = static_cast<double>(known.size());
  double mean = 0.0;
  for (std::size_t j : known) mean += adjacency(m, j);
  mean /= n;
  double var = 0.0;
  for (std::size_t j : known) {
    const double d = adjacency(m, j) - mean;
    var += d * d;
  }
  const double std_dev = std::sqrt(var / n);
  return std::clamp(config.alpha_temp * std_dev, config.t_min, config.t_max);
}

double temp_sigmoid(double z, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  const double x = z / temperature;
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

PseudoDecision select_pseudo_label(double p, const UlpConfig& config) {
  if (p >= config.beta) return PseudoDecision::kPositive;
  if (p < 1.0 - config.beta) return PseudoDecision::kNegative;
  return PseudoDecision::kAbstain;
}

std::vector<PseudoDecision> select_pseudo_labels(std::span<const double> probabilities,
                                                 const UlpConfig& config) {
  std::vector<PseudoDecision> out;
  out.reserve(probabilities.size());
  for (double p : probabilities) out.push_back(select_pseudo_label(p, config));
  return out;
}

Matrix temperature_field(const PartialLabelMatrix& labels, const Matrix& adjacency,
                         const UlpConfig& config) {
  const std::size_t n = labels.samples(), n_cat = labels.categories();
  Matrix t(n, n_cat);
  const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    std::vector<std::size_t> known;
    for (std::size_t c = 0; c < n_cat; ++c)
      if (labels.is_known(i, c)) known.push_back(c);
    if (known.empty()) continue;
    for (std::size_t c = 0; c < n_cat; ++c) {
      const Provenance p = labels.provenance(i, c);
      if (p == Provenance::kNone || p == Provenance::kPseudo)
        t(i, c) = compute_temperature(known, c, adjacency, config);
    }
  }
  return t;
}

PseudoLabelStats refresh_pseudo_labels(PartialLabelMatrix& labels, const Matrix& logits,
                                       const Matrix& temperatures, const UlpConfig& config) {
  if (logits.rows() != labels.samples() || logits.cols() != labels.categories() ||
      !temperatures.same_shape(logits))
    throw Error(ErrorCode::kInvalidArgument, "logit/temperature shape does not match labels");
  PseudoLabelStats stats;
  double sum_t = 0.0;
  std::size_t cells = 0;
  stats.min_t = std::numeric_limits<double>::infinity();
  stats.max_t = 0.0;
  for (std::size_t i = 0; i < labels.samples(); ++i) {
    if (labels.known_in_sample(i) == 0) continue;
    for (std::size_t c = 0; c < labels.categories(); ++c) {
      const Provenance prov = labels.provenance(i, c);
      if (prov != Provenance::kNone && prov != Provenance::kPseudo) continue;
      labels.clear_pseudo(i, c);
      const double t = temperatures(i, c);
      const double p = temp_sigmoid(logits(i, c), t);
      sum_t += t;
      ++cells;
      stats.min_t = std::min(stats.min_t, t);
      stats.max_t = std::max(stats.max_t, t);
      switch (select_pseudo_label(p, config)) {
        case PseudoDecision::kPositive:
          labels.set_pseudo(i, c, LabelState::kPositive);
          ++stats.positive;
          break;
        case PseudoDecision::kNegative:
          labels.set_pseudo(i, c, LabelState::kNegative);
          ++stats.negative;
          break;
        case PseudoDecision::kAbstain:
          ++stats.abstain;
          break;
      }
    }
  }
  if (cells == 0) stats.min_t = 0.0;
  stats.mean_t = cells ? sum_t / static_cast<double>(cells) : 0.0;
  return stats;
}

std::size_t finalize_difficult_labels(PartialLabelMatrix& labels, std::size_t epoch,
                                      const UlpConfig& config) {
  if (epoch < config.cap_epochs) throw Error(ErrorCode::kFailedPrecondition, "cap not reached");
  std::size_t n = 0;
  for (std::size_t i = 0; i < labels.samples(); ++i) {
    if (labels.known_in_sample(i) == 0) continue;
    for (std::size_t c = 0; c < labels.categories(); ++c)
      if (labels.provenance(i, c) == Provenance::kNone) {
        labels.set_fallback_negative(i, c);
        ++n;
      }
  }
  return n;
}

}  // namespace atam
