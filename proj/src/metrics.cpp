#include "atam/metrics.hpp"

#include "atam/error.hpp"

namespace atam {

MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  MetricsReport m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.op = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.orec = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  const double s = m.op + m.orec;
  m.of1 = s > 0.0 ? 2.0 * m.op * m.orec / s : 0.0;
  const double s2 = 4.0 * m.op + m.orec;
  m.of2 = s2 > 0.0 ? 5.0 * m.op * m.orec / s2 : 0.0;
  return m;
}

MetricsReport evaluate(const Matrix& probabilities, const PartialLabelMatrix& truth, double threshold) {
  if (probabilities.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "empty test set");
  if (probabilities.rows() != truth.samples() || probabilities.cols() != truth.categories())
    throw Error(ErrorCode::kInvalidArgument, "prediction shape does not match ground truth");
  if (truth.unknown_count() != 0)
    throw Error(ErrorCode::kInvalidArgument, "evaluation needs fully labeled ground truth");
  std::size_t tp = 0, fp = 0, fn = 0;
  const long rows = static_cast<long>(probabilities.rows());
#pragma omp parallel for schedule(static) reduction(+ : tp, fp, fn)
  for (long i = 0; i < rows; ++i) {
    for (std::size_t c = 0; c < probabilities.cols(); ++c) {
      const LabelState t = truth.state(i, c);
      const bool pred = probabilities(i, c) >= threshold;
      const bool pos = t == LabelState::kPositive;
      tp += pred && pos;
      fp += pred && !pos;
      fn += !pred && pos;
    }
  }
  return metrics_from_counts(tp, fp, fn);
}

nlohmann::json metrics_to_json(const MetricsReport& m) {
  return {{"op", m.op}, {"or", m.orec}, {"of1", m.of1}, {"of2", m.of2},
          {"tp", m.tp}, {"fp", m.fp},   {"fn", m.fn}};
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  return metrics_from_counts(j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
                             j.at("fn").get<std::size_t>());
}

}  // namespace atam
