#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "atam/annotators.hpp"
#include "atam/dataset.hpp"
#include "atam/labels.hpp"
#include "atam/matrix.hpp"
#include "atam/model.hpp"
#include "atam/trainer.hpp"

namespace atam {

enum class SamplingMode { kSalientActive, kRandom };
const char* sampling_mode_name(SamplingMode m);
SamplingMode parse_sampling_mode(const std::string& s);

struct SamplerConfig {
  double confidence_threshold = 0.8;
  std::size_t batch_size = 50;
  std::size_t seed_size = 50;
  AnnotationBudget budget;
  SamplingMode mode = SamplingMode::kSalientActive;
  std::uint64_t seed = 1;
  // Rebuild the co-occurrence graph before a fine-tune once the known set
  // has grown by more than this fraction since the last build.
  double adjacency_refresh = 0.05;
  // After the pool has been scanned once, revisit samples that still have
  // unknown cells. A pass that issues no query ends the loop.
  bool multi_pass = true;
  // Per-round model snapshots are written here when set.
  std::filesystem::path checkpoint_dir;
};

void validate_sampler_config(const SamplerConfig& config);

struct AnnotationRound {
  std::size_t t = 0;
  // Labels added to the known set this round (L_t).
  std::size_t queried = 0;
  std::size_t declined = 0;
  std::size_t forced = 0;
  // Known labels after the round.
  std::size_t cumulative = 0;
  double wall_seconds = 0.0;
  std::string checkpoint;
};

nlohmann::json round_to_json(const AnnotationRound& r);
AnnotationRound round_from_json(const nlohmann::json& j);

// Queries for one sample: every allowed category with p >= S (suggest +1,
// most confident first) then p <= 1 - S (suggest -1, most confident first).
// When `need_positive` is set and no category clears S, the highest-p
// allowed category is queried as a forced positive. `allowed` may be empty
// (all categories allowed).
std::vector<LabelQuery> salient_queries(std::span<const double> probabilities, double threshold,
                                        bool need_positive, const std::vector<bool>& allowed = {});

// Scores the candidate rows of `pool` and emits their salient queries in
// candidate order, truncated to `remaining` budget. Only UNKNOWN cells are
// queried; the forced positive applies to samples without a known positive.
std::vector<LabelQuery> query_step(const MllModel& model, const Matrix& pool,
                                   const PartialLabelMatrix& labels,
                                   std::span<const std::size_t> candidates,
                                   const std::vector<std::string>& sample_ids, double threshold,
                                   std::size_t remaining);

enum class QueryStatus { kPending, kAnswered, kSkipped };
const char* query_status_name(QueryStatus s);

struct BatchEntry {
  LabelQuery query;
  QueryStatus status = QueryStatus::kPending;
  // CELL answers.
  int value = 0;
  // SEED answers: what was submitted and what was kept after filtering.
  SeedAnswer submitted;
  std::vector<std::pair<std::size_t, int>> accepted;
  // Budget held by this entry.
  std::size_t charged = 0;
};

enum class SessionStage { kOpen, kTraining, kDone };
const char* session_stage_name(SessionStage s);

enum class SubmitResult { kAccepted, kDuplicate };

struct TrainerHandle {
  ModelConfig model;
  TrainConfig train;
};

// The querying loop as a step machine. A batch is opened, every query is
// answered (in any order), close_batch() applies the answers and
// advance_round() fine-tunes and opens the next batch. The headless loop and
// the annotation service drive the same object, so equal seeds and answers
// give equal label matrices.
//
// Budget is held by a CELL query from issue; SEED answers are charged when
// submitted. Declined queries are refunded. Answers stay pending until the
// batch closes; a sample that would end a CELL batch without any positive
// gets one follow-up SEED query, and if it still has none its answers are
// dropped and refunded.
class ActiveSession {
 public:
  ActiveSession(std::shared_ptr<const Matrix> pool, std::vector<std::string> sample_ids,
                std::vector<std::string> categories, const SamplerConfig& config,
                const TrainerHandle& trainer);

  SessionStage stage() const noexcept { return stage_; }
  const std::vector<BatchEntry>& batch() const noexcept { return batch_; }
  std::vector<LabelQuery> pending() const;
  bool batch_resolved() const;

  // nullopt declines. Throws kNotFound for ids outside the open batch and
  // kConflict when a resolved query gets a different answer.
  SubmitResult answer(std::size_t query_id, std::optional<int> value);
  SubmitResult answer_seed(std::size_t query_id, const SeedAnswer& answer);

  void close_batch();
  void advance_round();

  const PartialLabelMatrix& labels() const noexcept { return labels_; }
  const AnnotationBudget& budget() const noexcept { return budget_; }
  const std::vector<AnnotationRound>& rounds() const noexcept { return rounds_; }
  const MllModel& model() const noexcept { return model_; }
  const SamplerConfig& config() const noexcept { return config_; }
  const TrainerHandle& trainer() const noexcept { return trainer_; }
  const std::vector<std::string>& sample_ids() const noexcept { return ids_; }
  const std::vector<std::string>& categories() const noexcept { return categories_; }
  std::size_t round_index() const noexcept { return round_index_; }

  // Everything except the pool features.
  void save(std::ostream& out) const;
  static ActiveSession load(std::istream& in, std::shared_ptr<const Matrix> pool);

 private:
  struct PendingLabel {
    std::size_t sample;
    std::size_t category;
    int value;
  };

  ActiveSession() = default;
  void open_seed_batch();
  std::vector<std::size_t> next_candidates();
  BatchEntry* find_entry(std::size_t query_id);
  bool cell_pending(std::size_t sample, std::size_t category) const;
  void finish_round();

  std::shared_ptr<const Matrix> pool_;
  std::vector<std::string> ids_;
  std::vector<std::string> categories_;
  SamplerConfig config_;
  TrainerHandle trainer_;
  MllModel model_;
  PartialLabelMatrix labels_;
  AnnotationBudget budget_;
  std::mt19937_64 rng_;

  SessionStage stage_ = SessionStage::kOpen;
  std::vector<BatchEntry> batch_;
  bool followup_batch_ = false;
  bool seed_batch_ = false;
  std::vector<PendingLabel> carry_;
  std::size_t next_query_id_ = 0;
  std::size_t cursor_ = 0;
  std::size_t pass_queries_ = 0;
  std::size_t adjacency_known_ = 0;
  std::size_t round_index_ = 0;
  AnnotationRound current_;
  double round_started_ = 0.0;
  std::vector<AnnotationRound> rounds_;
};

// Seed set Y_0: sample-level queries for the first N_0 pool samples.
PartialLabelMatrix seed_round(const SamplerConfig& config, const SplitData& pool,
                              const std::vector<std::string>& categories, Annotator& annotator,
                              AnnotationBudget* budget_out = nullptr);

struct ActiveLoopResult {
  PartialLabelMatrix labels;
  std::vector<AnnotationRound> rounds;
  AnnotationBudget budget;
  MllModel model;
};

// Drives an ActiveSession with a simulated annotator until the budget is
// spent or the pool yields no more queries. RANDOM mode delegates to
// random_sample with the same budget.
ActiveLoopResult run_active_loop(const SamplerConfig& config, const SplitData& pool,
                                 const std::vector<std::string>& categories, Annotator& annotator,
                                 const TrainerHandle& trainer);

// Uniformly random known cells with at least one positive per touched
// sample: touched samples first get one random positive each, remaining
// budget is spread uniformly over their other cells. Samples without any
// positive are excluded (reported through `excluded`).
PartialLabelMatrix random_sample(const PartialLabelMatrix& truth, std::size_t budget, std::uint64_t seed,
                                 std::vector<std::size_t>* excluded = nullptr);

}  // namespace atam
