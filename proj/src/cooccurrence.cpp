#include "atam/cooccurrence.hpp"

#include <cmath>

#include "atam/error.hpp"

namespace atam {

CooccurrenceGraph build_cooccurrence(const PartialLabelMatrix& labels) {
  const std::size_t n_cat = labels.categories();
  CooccurrenceGraph graph;
  graph.categories = n_cat;
  graph.counts.assign(n_cat * n_cat, 0);
  bool any_positive = false;
  std::vector<std::size_t> positives;
  positives.reserve(n_cat);
  for (std::size_t i = 0; i < labels.samples(); ++i) {
    positives.clear();
    for (std::size_t c = 0; c < n_cat; ++c)
      if (labels.is_known(i, c) && labels.state(i, c) == LabelState::kPositive)
        positives.push_back(c);
    if (!positives.empty()) ++graph.labeled_samples;
    any_positive = any_positive || !positives.empty();
    for (std::size_t a : positives)
      for (std::size_t b : positives)
        if (a != b) ++graph.counts[a * n_cat + b];
  }
  if (!any_positive) throw Error(ErrorCode::kFailedPrecondition, "no known positives");
  graph.normalized = normalize_adjacency(graph.counts, n_cat);
  Matrix freq(n_cat, n_cat);
  const double n = static_cast<double>(graph.labeled_samples);
  for (std::size_t k = 0; k < graph.counts.size(); ++k) freq.flat()[k] = static_cast<double>(graph.counts[k]) / n;
  graph.frequency_normalized = normalize_weights(freq);
  return graph;
}

Matrix normalize_adjacency(const std::vector<std::size_t>& counts, std::size_t categories) {
  if (counts.size() != categories * categories)
    throw Error(ErrorCode::kInvalidArgument, "count matrix is not C x C");
  Matrix w(categories, categories);
  for (std::size_t k = 0; k < counts.size(); ++k) w.flat()[k] = static_cast<double>(counts[k]);
  return normalize_weights(w);
}

Matrix normalize_weights(const Matrix& weights) {
  if (weights.rows() != weights.cols()) throw Error(ErrorCode::kInvalidArgument, "weight matrix is not square");
  const std::size_t categories = weights.rows();
  Matrix a(categories, categories);
  for (std::size_t i = 0; i < categories; ++i)
    for (std::size_t j = 0; j < categories; ++j) {
      if (i != j && !(weights(i, j) >= 0.0 && std::isfinite(weights(i, j))))
        throw Error(ErrorCode::kInvalidArgument, "adjacency weights must be finite and >= 0");
      a(i, j) = i == j ? 1.0 : weights(i, j);
    }
  std::vector<double> inv_sqrt(categories);
  for (std::size_t i = 0; i < categories; ++i) {
    double degree = 0.0;
    for (std::size_t j = 0; j < categories; ++j) degree += a(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(degree);
  }
  for (std::size_t i = 0; i < categories; ++i)
    for (std::size_t j = 0; j < categories; ++j) a(i, j) *= inv_sqrt[i] * inv_sqrt[j];
  return a;
}

}  // namespace atam
