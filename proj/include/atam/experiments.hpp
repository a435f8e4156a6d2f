#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "atam/config.hpp"
#include "atam/dataset.hpp"
#include "atam/metrics.hpp"
#include "atam/sampler.hpp"
#include "atam/trainer.hpp"

namespace atam {

// One (experiment, seed, arm) outcome.
struct ArmResult {
  std::string experiment;
  std::string arm;
  std::uint64_t seed = 0;
  // Budget fraction or keep fraction, depending on the experiment.
  double parameter = 0.0;
  MetricsReport test;
  std::size_t known_labels = 0;
  std::size_t budget = 0;
  std::size_t epochs = 0;
  // Validation OF1 after every epoch.
  std::vector<double> val_curve;
  // First epoch whose validation OF1 reaches 95% of the final value.
  std::size_t epochs_to_95 = 0;
};

struct ExperimentTable {
  std::string experiment;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  std::string input_hash;
  std::vector<ArmResult> rows;
};

struct ArmSummary {
  std::string arm;
  double parameter = 0.0;
  std::size_t runs = 0;
  double of1_mean = 0.0, of1_std = 0.0;
  double of2_mean = 0.0, of2_std = 0.0;
  double op_mean = 0.0, op_std = 0.0;
  double or_mean = 0.0, or_std = 0.0;
};

// round(fraction * N * C) over the split's cells.
std::size_t budget_for(double fraction, const SplitData& split);

// The synthetic dataset named by config.synth, or a loaded one.
Dataset experiment_dataset(const RunConfig& config);
std::string dataset_hash(const Dataset& dataset);

// Trains a fresh model on `labels` (rows aligned with the train split) and
// scores the test split; fills the metrics, curve and epoch fields.
ArmResult train_and_score(const RunConfig& config, const Dataset& dataset, const SplitData& train_split,
                          const PartialLabelMatrix& labels);

// Salient active annotation of the train split at the given budget.
ActiveLoopResult annotate_salient(const RunConfig& config, const SplitData& train_split,
                                  const std::vector<std::string>& categories, std::size_t budget);

// Arms: salient_partial (active loop at the budget), images_full (the same
// budget spent on fully labeled samples) and full (every train label).
ExperimentTable exp_budget_compare(const RunConfig& config, const Dataset& dataset, double fraction,
                                   const std::vector<std::uint64_t>& seeds);

// Arms: atam (true partial matrix, ULP on) and missing_as_negative (same
// kept cells, the rest forced negative, ULP off).
ExperimentTable exp_noise_sim(const RunConfig& config, const Dataset& dataset, double keep,
                              const std::vector<std::uint64_t>& seeds);

// Arms: salient and random at equal label counts, with validation curves.
ExperimentTable exp_sampling_compare(const RunConfig& config, const Dataset& dataset,
                                     const std::vector<std::uint64_t>& seeds);

// One salient arm per budget fraction.
ExperimentTable exp_label_proportion(const RunConfig& config, const Dataset& dataset,
                                     const std::vector<double>& fractions,
                                     const std::vector<std::uint64_t>& seeds);

// Per-arm mean and population std over seeds, in first-appearance order.
std::vector<ArmSummary> summarize(const ExperimentTable& table);

// Header row, then one row per result; comment lines carry provenance.
void write_results_csv(std::ostream& out, const ExperimentTable& table);
// Long format: experiment,arm,seed,parameter,epoch,val_of1.
void write_curves_csv(std::ostream& out, const ExperimentTable& table);
void write_summary_csv(std::ostream& out, const ExperimentTable& table);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

std::size_t epochs_to_fraction(const std::vector<double>& curve, double fraction);

}  // namespace atam
