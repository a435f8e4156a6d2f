#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace atam {

enum class QueryKind {
  // "Does category c apply to this sample?" with a suggested value.
  kCell,
  // "Name the salient labels of this sample." Used for the seed set and for
  // samples that ended a round without a positive.
  kSeed,
};

struct LabelQuery {
  std::size_t query_id = 0;
  std::size_t sample = 0;  // row in the training pool
  std::string sample_id;
  QueryKind kind = QueryKind::kCell;
  std::size_t category = 0;
  int suggested = 1;
  double confidence = 0.0;
  // Issued by the at-least-one-positive rule rather than by the threshold.
  bool forced = false;
};

struct SeedAnswer {
  bool declined = false;
  // (category, +1/-1)
  std::vector<std::pair<std::size_t, int>> labels;
};

enum class AnnotatorKind { kOracle, kNoisy, kHuman };
const char* annotator_kind_name(AnnotatorKind k);
AnnotatorKind parse_annotator_kind(const std::string& s);

struct AnnotatorProfile {
  AnnotatorKind kind = AnnotatorKind::kOracle;
  double flip_rate = 0.0;
  double skip_rate = 0.0;
  std::uint64_t seed = 0;
  // Extra truth-negative labels volunteered per seed answer.
  std::size_t seed_negatives = 0;
};

void validate_profile(const AnnotatorProfile& profile);

class Annotator {
 public:
  virtual ~Annotator() = default;
  // nullopt means DECLINED.
  virtual std::optional<int> answer(const LabelQuery& query, int truth) = 0;
  // `truth` is the sample's dense +1/-1 row.
  virtual SeedAnswer answer_seed(const LabelQuery& query, std::span<const int> truth) = 0;
};

// ORACLE returns the truth; NOISY declines with probability skip_rate and
// otherwise inverts with probability flip_rate. Every answer draws the
// same number of variates so streams stay aligned across profiles.
class SimulatedAnnotator final : public Annotator {
 public:
  explicit SimulatedAnnotator(const AnnotatorProfile& profile);
  std::optional<int> answer(const LabelQuery& query, int truth) override;
  SeedAnswer answer_seed(const LabelQuery& query, std::span<const int> truth) override;

 private:
  std::optional<int> apply_noise(int truth);

  AnnotatorProfile profile_;
  std::mt19937_64 rng_;
};

// Delivers queries to a person. Implemented by the annotation service.
class HumanChannel {
 public:
  virtual ~HumanChannel() = default;
  virtual std::optional<int> ask(const LabelQuery& query) = 0;
  virtual SeedAnswer ask_seed(const LabelQuery& query) = 0;
};

class HumanAnnotator final : public Annotator {
 public:
  explicit HumanAnnotator(std::shared_ptr<HumanChannel> channel = nullptr)
      : channel_(std::move(channel)) {}
  std::optional<int> answer(const LabelQuery& query, int truth) override;
  SeedAnswer answer_seed(const LabelQuery& query, std::span<const int> truth) override;

 private:
  std::shared_ptr<HumanChannel> channel_;
};

std::unique_ptr<Annotator> make_annotator(const AnnotatorProfile& profile,
                                          std::shared_ptr<HumanChannel> channel = nullptr);

}  // namespace atam
