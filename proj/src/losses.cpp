#include "atam/losses.hpp"

#include <algorithm>
#include <cmath>

#include "atam/error.hpp"
#include "atam/model.hpp"
#include "atam/ulp.hpp"

namespace atam {
namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

bool clamped(double p) { return p < kProbClamp || p > 1.0 - kProbClamp; }

}  // namespace

void validate_loss_config(const LossConfig& c, std::size_t categories) {
  if (!(c.alpha_focal >= 0.0 && c.alpha_focal <= 1.0))
    throw Error(ErrorCode::kConfig, "loss.alpha_focal must be in [0, 1]");
  if (!(c.gamma >= 0.0)) throw Error(ErrorCode::kConfig, "loss.gamma must be >= 0");
  if (!(c.epsilon >= 0.0)) throw Error(ErrorCode::kConfig, "loss.epsilon must be >= 0");
  if (!c.class_weights.empty()) {
    if (c.class_weights.size() != categories)
      throw Error(ErrorCode::kConfig, "class weight count must equal the category count");
    double sum = 0.0;
    for (double w : c.class_weights) {
      if (!(w > 0.0 && (w < 1.0 || categories == 1)))
        throw Error(ErrorCode::kConfig, "class proportions must lie in (0, 1)");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::kConfig, "class proportions must sum to 1");
  }
}

std::vector<double> class_proportions(const PartialLabelMatrix& labels) {
  const std::size_t n_cat = labels.categories();
  std::vector<double> counts(n_cat, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.samples(); ++i)
    for (std::size_t c = 0; c < n_cat; ++c)
      if (labels.is_known(i, c) && labels.state(i, c) == LabelState::kPositive) {
        counts[c] += 1.0;
        total += 1.0;
      }
  if (total == 0.0) throw Error(ErrorCode::kFailedPrecondition, "no known positives for class proportions");
  const double floor = 0.01 / static_cast<double>(n_cat);
  double sum = 0.0;
  for (double& v : counts) {
    v = v > 0.0 ? v / total : floor;
    sum += v;
  }
  for (double& v : counts) v /= sum;
  return counts;
}

double focal_cell(double p, bool positive, double alpha, double gamma) {
  p = clamp_prob(p);
  if (positive) return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
  return -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

double focal_cell_grad(double p, bool positive, double alpha, double gamma, double temperature) {
  if (clamped(p)) return 0.0;
  const double q = 1.0 - p;
  if (positive)
    return alpha * (gamma * p * std::pow(q, gamma) * std::log(p) - std::pow(q, gamma + 1.0)) / temperature;
  return (1.0 - alpha) * (-gamma * std::pow(p, gamma) * q * std::log(q) + std::pow(p, gamma + 1.0)) /
         temperature;
}

double focal_loss_known(std::span<const double> probabilities, std::span<const int> targets,
                        std::span<const std::size_t> categories, const LossConfig& config) {
  if (probabilities.size() != targets.size() || targets.size() != categories.size())
    throw Error(ErrorCode::kInvalidArgument, "focal loss inputs differ in length");
  if (probabilities.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < probabilities.size(); ++k) {
    const double w = config.class_weights.empty() ? 1.0 : config.class_weights.at(categories[k]);
    sum += w * focal_cell(probabilities[k], targets[k] > 0, config.alpha_focal, config.gamma);
  }
  return sum / static_cast<double>(probabilities.size());
}

double focal_loss_pseudo(std::span<const double> logits, std::span<const double> temperatures,
                         std::span<const int> targets, std::span<const std::size_t> categories,
                         const LossConfig& config) {
  if (logits.size() != temperatures.size())
    throw Error(ErrorCode::kInvalidArgument, "missing temperature for a pseudo cell");
  std::vector<double> p(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (!(temperatures[k] > 0.0))
      throw Error(ErrorCode::kInvalidArgument, "missing temperature for a pseudo cell");
    p[k] = temp_sigmoid(logits[k], temperatures[k]);
  }
  return focal_loss_known(p, targets, categories, config);
}

double total_loss(double known_loss, double pseudo_loss, double epsilon) {
  return known_loss + epsilon * pseudo_loss;
}

BatchLoss batch_loss(const Matrix& logits, const PartialLabelMatrix& labels,
                     std::span<const std::size_t> rows, const Matrix& temperatures,
                     const std::vector<double>& class_weights, const LossConfig& config, LossMode mode) {
  const std::size_t n_cat = labels.categories();
  if (logits.rows() != rows.size() || logits.cols() != n_cat)
    throw Error(ErrorCode::kInvalidArgument, "batch logits do not match the label matrix");
  if (class_weights.size() != n_cat)
    throw Error(ErrorCode::kInvalidArgument, "class weights do not match the category count");
  BatchLoss out;
  out.dlogits = Matrix(logits.rows(), n_cat);
  Matrix dknown(logits.rows(), n_cat), dpseudo(logits.rows(), n_cat);
  const double a = config.alpha_focal, g = config.gamma;
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const std::size_t i = rows[b];
    for (std::size_t c = 0; c < n_cat; ++c) {
      const Provenance prov = labels.provenance(i, c);
      if (prov == Provenance::kNone) continue;
      const bool positive = labels.state(i, c) == LabelState::kPositive;
      const double w = class_weights[c];
      const double z = logits(b, c);
      const bool as_known = prov == Provenance::kHumanOrOracle || mode == LossMode::kAllLabeled;
      if (as_known) {
        const double p = sigmoid(z);
        out.known += w * focal_cell(p, positive, a, g);
        dknown(b, c) = w * focal_cell_grad(p, positive, a, g, 1.0);
        ++out.known_cells;
      } else if (mode == LossMode::kWeighted && prov == Provenance::kPseudo) {
        const double t = temperatures(i, c);
        if (!(t > 0.0)) throw Error(ErrorCode::kInvalidArgument, "missing temperature for a pseudo cell");
        const double p = temp_sigmoid(z, t);
        out.pseudo += w * focal_cell(p, positive, a, g);
        dpseudo(b, c) = w * focal_cell_grad(p, positive, a, g, t);
        ++out.pseudo_cells;
      }
    }
  }
  const double nk = out.known_cells ? static_cast<double>(out.known_cells) : 1.0;
  const double ns = out.pseudo_cells ? static_cast<double>(out.pseudo_cells) : 1.0;
  out.known /= nk;
  out.pseudo /= ns;
  out.total = total_loss(out.known, out.pseudo, config.epsilon);
  for (std::size_t k = 0; k < out.dlogits.size(); ++k)
    out.dlogits.flat()[k] = dknown.flat()[k] / nk + config.epsilon * dpseudo.flat()[k] / ns;
  return out;
}

}  // namespace atam
