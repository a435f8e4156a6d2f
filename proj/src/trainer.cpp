#include "atam/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "atam/cooccurrence.hpp"

namespace atam {
namespace {

std::vector<std::size_t> trainable_rows(const PartialLabelMatrix& labels) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels.samples(); ++i)
    if (labels.known_in_sample(i) > 0) rows.push_back(i);
  return rows;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = m.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

struct EpochLoss {
  double known = 0.0;
  double pseudo = 0.0;
  double total = 0.0;
  bool finite = true;
};

// One pass over `rows` in a freshly shuffled order.
EpochLoss run_epoch(MllModel& model, const Matrix& features, const PartialLabelMatrix& labels,
                    std::vector<std::size_t> rows, const Matrix& temperatures,
                    const std::vector<double>& class_weights, const TrainConfig& config, LossMode mode,
                    double lr, SgdOptimizer& opt, std::mt19937_64& rng) {
  std::shuffle(rows.begin(), rows.end(), rng);
  EpochLoss out;
  std::size_t batches = 0;
  ParamSet grads = model.params().zeros_like();
  for (std::size_t start = 0; start < rows.size(); start += config.batch_size) {
    const std::size_t end = std::min(rows.size(), start + config.batch_size);
    const std::span<const std::size_t> batch_rows(rows.data() + start, end - start);
    const Matrix x = gather_rows(features, batch_rows);
    const ForwardCache cache = forward(model, x);
    const BatchLoss loss =
        batch_loss(cache.logits, labels, batch_rows, temperatures, class_weights, config.loss, mode);
    if (!std::isfinite(loss.total)) {
      out.finite = false;
      return out;
    }
    for (auto& g : grads.tensors) g.fill(0.0);
    backward(model, cache, loss.dlogits, grads);
    opt.step(model.params(), grads, lr);
    out.known += loss.known;
    out.pseudo += loss.pseudo;
    out.total += loss.total;
    ++batches;
  }
  if (batches > 0) {
    out.known /= static_cast<double>(batches);
    out.pseudo /= static_cast<double>(batches);
    out.total /= static_cast<double>(batches);
  }
  out.finite = model.params().all_finite();
  return out;
}

std::vector<double> resolve_class_weights(const PartialLabelMatrix& labels, const LossConfig& loss) {
  return loss.class_weights.empty() ? class_proportions(labels) : loss.class_weights;
}

}  // namespace

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::kWarmup: return "WARMUP";
    case Phase::kAlternate: return "ALTERNATE";
    case Phase::kPostUlp: return "POST_ULP";
  }
  return "?";
}

void validate_train_config(const TrainConfig& c, std::size_t categories) {
  if (!(c.optimizer.learning_rate > 0.0)) throw Error(ErrorCode::kConfig, "learning rate must be positive");
  if (!(c.optimizer.momentum >= 0.0 && c.optimizer.momentum < 1.0))
    throw Error(ErrorCode::kConfig, "momentum must be in [0, 1)");
  if (!(c.optimizer.weight_decay >= 0.0)) throw Error(ErrorCode::kConfig, "weight decay must be >= 0");
  if (c.optimizer.decay_every == 0 || !(c.optimizer.decay_factor >= 1.0))
    throw Error(ErrorCode::kConfig, "lr decay needs decay_every >= 1 and decay_factor >= 1");
  if (c.batch_size == 0) throw Error(ErrorCode::kConfig, "batch size must be >= 1");
  if (c.max_epochs == 0) throw Error(ErrorCode::kConfig, "max_epochs must be >= 1");
  if (c.plateau_window == 0) throw Error(ErrorCode::kConfig, "plateau_window must be >= 1");
  validate_ulp_config(c.ulp);
  validate_loss_config(c.loss, categories);
}

double learning_rate(const OptimizerConfig& config, std::size_t epoch_index) {
  const auto steps = static_cast<double>(epoch_index / config.decay_every);
  return config.learning_rate * std::pow(config.decay_factor, -steps);
}

Phase phase_for_epoch(std::size_t epoch, const UlpConfig& ulp) {
  if (epoch <= ulp.warmup_epochs) return Phase::kWarmup;
  if (epoch <= ulp.cap_epochs) return Phase::kAlternate;
  return Phase::kPostUlp;
}

void SgdOptimizer::step(ParamSet& params, const ParamSet& grads, double lr) {
  if (velocity_.empty()) {
    for (const auto& t : params.tensors) velocity_.emplace_back(t.rows(), t.cols());
  }
  const double mu = config_.momentum, wd = config_.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params.tensors[k].flat();
    auto g = grads.tensors[k].flat();
    auto v = velocity_[k].flat();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mu * v[i] + (g[i] + wd * w[i]);
      w[i] -= lr * v[i];
    }
  }
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_string(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw Error(ErrorCode::kIo, "bad rng state");
  return rng;
}

TrainResult train(MllModel model, const Matrix& features, PartialLabelMatrix labels,
                  const TrainConfig& config, const EvalSet& val, const EpochCallback& on_epoch) {
  validate_train_config(config, labels.categories());
  if (features.rows() != labels.samples())
    throw Error(ErrorCode::kInvalidArgument, "feature rows do not match label rows");
  if (model.categories() != labels.categories())
    throw Error(ErrorCode::kInvalidArgument, "model category count does not match labels");
  if (const std::string err = labels.validate(); !err.empty())
    throw Error(ErrorCode::kFailedPrecondition, "invalid label matrix: " + err);
  const std::vector<std::size_t> rows = trainable_rows(labels);
  if (rows.empty()) throw Error(ErrorCode::kFailedPrecondition, "empty known set");

  const CooccurrenceGraph graph = build_cooccurrence(labels);
  model.set_adjacency(graph.propagation(model.config().gcn.propagation));
  const std::vector<double> weights = resolve_class_weights(labels, config.loss);
  std::mt19937_64 rng(config.seed);
  SgdOptimizer opt(config.optimizer);
  const Matrix train_features = gather_rows(features, rows);
  Matrix temperatures(labels.samples(), labels.categories());

  TrainState state;
  MllModel last_good = model;
  std::vector<double> post_losses;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const Phase phase = phase_for_epoch(epoch, config.ulp);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = phase;
    rec.lr = learning_rate(config.optimizer, epoch - 1);

    LossMode mode = LossMode::kKnownOnly;
    if (config.ulp_enabled && phase == Phase::kAlternate) {
      // Step 2: regenerate pseudo labels from the current model.
      const Matrix logits_rows = predict_logits(model, train_features);
      Matrix logits(labels.samples(), labels.categories());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        auto src = logits_rows.row(r);
        std::copy(src.begin(), src.end(), logits.row(rows[r]).begin());
      }
      temperatures = temperature_field(labels, graph.normalized, config.ulp);
      rec.pseudo = refresh_pseudo_labels(labels, logits, temperatures, config.ulp);
      mode = LossMode::kWeighted;
    } else if (config.ulp_enabled && phase == Phase::kPostUlp) {
      mode = LossMode::kAllLabeled;
    }

    const EpochLoss loss = run_epoch(model, features, labels, rows, temperatures, weights, config, mode,
                                     rec.lr, opt, rng);
    if (!loss.finite)
      throw TrainingAborted("non-finite loss or parameters at epoch " + std::to_string(epoch), last_good,
                            epoch);
    last_good = model;
    rec.known_loss = loss.known;
    rec.pseudo_loss = loss.pseudo;
    rec.total_loss = loss.total;

    if (config.ulp_enabled && epoch == config.ulp.cap_epochs)
      rec.finalized = finalize_difficult_labels(labels, epoch, config.ulp);

    if (val.features && val.truth) rec.val = evaluate(predict(model, *val.features), *val.truth);

    state.epoch = epoch;
    state.phase = phase;
    state.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (phase == Phase::kPostUlp) {
      post_losses.push_back(loss.total);
      const std::size_t w = config.plateau_window;
      if (post_losses.size() > w) {
        // Best loss of the last w epochs against the best before them, so
        // that mini-batch noise alone does not end training.
        const auto split = post_losses.end() - static_cast<long>(w);
        const double before = *std::min_element(post_losses.begin(), split);
        const double now = *std::min_element(split, post_losses.end());
        const double rel = before > 0.0 ? (before - now) / before : 0.0;
        if (rel < config.plateau_tolerance) {
          state.converged = true;
          break;
        }
      }
    }
  }
  state.labels = std::move(labels);
  state.rng_state = rng_to_string(rng);
  return {std::move(model), std::move(state)};
}

void fine_tune(MllModel& model, const Matrix& features, const PartialLabelMatrix& labels,
               const TrainConfig& config, std::size_t epochs, std::mt19937_64& rng) {
  const std::vector<std::size_t> rows = trainable_rows(labels);
  if (rows.empty()) throw Error(ErrorCode::kFailedPrecondition, "empty known set");
  const std::vector<double> weights = resolve_class_weights(labels, config.loss);
  SgdOptimizer opt(config.optimizer);
  const Matrix no_temperatures;
  for (std::size_t e = 0; e < epochs; ++e) {
    const EpochLoss loss = run_epoch(model, features, labels, rows, no_temperatures, weights, config,
                                     LossMode::kKnownOnly, config.optimizer.learning_rate, opt, rng);
    if (!loss.finite) throw Error(ErrorCode::kNumerical, "non-finite loss during fine-tuning");
  }
}

Matrix predict(const MllModel& model, const Matrix& features) { return predict_proba(model, features); }

}  // namespace atam
