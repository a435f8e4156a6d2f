#pragma once

#include <cstddef>

#include <json.hpp>

#include "atam/labels.hpp"
#include "atam/matrix.hpp"

namespace atam {

struct MetricsReport {
  double op = 0.0;
  double orec = 0.0;  // overall recall; "or" is a reserved token
  double of1 = 0.0;
  double of2 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

// Builds the report from confusion totals.
MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

// Micro-averaged over every (sample, category) cell; a cell is predicted
// positive when p >= threshold. `truth` must be fully labeled.
MetricsReport evaluate(const Matrix& probabilities, const PartialLabelMatrix& truth,
                       double threshold = 0.5);

// Flat record with keys op, or, of1, of2, tp, fp, fn.
nlohmann::json metrics_to_json(const MetricsReport& m);
MetricsReport metrics_from_json(const nlohmann::json& j);

}  // namespace atam
