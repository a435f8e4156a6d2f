#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "atam/error.hpp"
#include "atam/labels.hpp"
#include "atam/losses.hpp"
#include "atam/matrix.hpp"
#include "atam/metrics.hpp"
#include "atam/model.hpp"
#include "atam/ulp.hpp"

namespace atam {

enum class Phase { kWarmup, kAlternate, kPostUlp };
const char* phase_name(Phase p);

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t decay_every = 50;
  double decay_factor = 10.0;
};

struct TrainConfig {
  OptimizerConfig optimizer;
  std::size_t batch_size = 12;
  std::size_t max_epochs = 120;
  std::uint64_t seed = 1;
  // false trains on known cells only for every epoch (the missing-as-negative
  // baseline and other ablations).
  bool ulp_enabled = true;
  double plateau_tolerance = 1e-4;
  std::size_t plateau_window = 10;
  // Epochs of L_k fine-tuning per active-learning round.
  std::size_t finetune_epochs = 3;
  UlpConfig ulp;
  LossConfig loss;
};

void validate_train_config(const TrainConfig& config, std::size_t categories);

// lr for zero-based epoch index e: lr0 * decay_factor^-(e / decay_every).
double learning_rate(const OptimizerConfig& config, std::size_t epoch_index);

// Phase of one-based epoch e.
Phase phase_for_epoch(std::size_t epoch, const UlpConfig& ulp);

// SGD with momentum and L2 weight decay: v = mu v + (g + wd w); w -= lr v.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(const OptimizerConfig& config) : config_(config) {}
  void step(ParamSet& params, const ParamSet& grads, double lr);

 private:
  OptimizerConfig config_;
  std::vector<Matrix> velocity_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  Phase phase = Phase::kWarmup;
  double known_loss = 0.0;
  double pseudo_loss = 0.0;
  double total_loss = 0.0;
  double lr = 0.0;
  PseudoLabelStats pseudo;
  std::size_t finalized = 0;
  std::optional<MetricsReport> val;
};

struct TrainState {
  std::size_t epoch = 0;
  Phase phase = Phase::kWarmup;
  PartialLabelMatrix labels;
  std::vector<EpochRecord> history;
  std::string rng_state;
  bool converged = false;
};

struct TrainResult {
  MllModel model;
  TrainState state;
};

// Held-out split scored after every epoch.
struct EvalSet {
  const Matrix* features = nullptr;
  const PartialLabelMatrix* truth = nullptr;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// NaN/Inf during training. Carries the parameters from the last epoch that
// finished with finite values.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, MllModel last_good, std::size_t epoch)
      : Error(ErrorCode::kNumerical, what), last_good_(std::move(last_good)), epoch_(epoch) {}
  const MllModel& last_good() const { return last_good_; }
  std::size_t epoch() const { return epoch_; }

 private:
  MllModel last_good_;
  std::size_t epoch_;
};

// Three-step schedule: WARMUP minimizes L_k; each ALTERNATE epoch refreshes
// pseudo labels then minimizes L_w; at the ULP cap the remaining unknown
// cells are finalized negative and POST_ULP trains on every labeled cell
// until max_epochs or a loss plateau. Rows of `features` align with rows of
// `labels`; rows without known labels are ignored.
TrainResult train(MllModel model, const Matrix& features, PartialLabelMatrix labels,
                  const TrainConfig& config, const EvalSet& val = {},
                  const EpochCallback& on_epoch = {});

// A few epochs of L_k-only training at the base learning rate with a fresh
// optimizer; used between active-learning rounds.
void fine_tune(MllModel& model, const Matrix& features, const PartialLabelMatrix& labels,
               const TrainConfig& config, std::size_t epochs, std::mt19937_64& rng);

// Standard-sigmoid probabilities for every row; no temperature.
Matrix predict(const MllModel& model, const Matrix& features);

std::string rng_to_string(const std::mt19937_64& rng);
std::mt19937_64 rng_from_string(const std::string& state);

}  // namespace atam
