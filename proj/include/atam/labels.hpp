#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace atam {

enum class LabelState : std::int8_t { kNegative = -1, kUnknown = 0, kPositive = 1 };

enum class Provenance : std::uint8_t {
  kNone,
  kHumanOrOracle,
  kPseudo,
  kFallbackNegative,
};

inline int to_int(LabelState s) { return static_cast<int>(s); }
LabelState label_from_int(int v);

// Per-(sample, category) label states plus where each known value came from.
// Mutations go through record/set_pseudo/clear_pseudo/finalize so that the
// provenance rules are enforced in one place.
class PartialLabelMatrix {
 public:
  PartialLabelMatrix() = default;
  PartialLabelMatrix(std::size_t samples, std::size_t categories);

  std::size_t samples() const noexcept { return samples_; }
  std::size_t categories() const noexcept { return categories_; }

  LabelState state(std::size_t i, std::size_t c) const { return states_[i * categories_ + c]; }
  Provenance provenance(std::size_t i, std::size_t c) const {
    return provenance_[i * categories_ + c];
  }
  bool is_known(std::size_t i, std::size_t c) const {
    return provenance(i, c) == Provenance::kHumanOrOracle;
  }

  // Human/oracle annotation. Allowed on UNKNOWN cells and on PSEUDO cells.
  // Throws kConflict when the cell already holds a human/oracle answer.
  void record(std::size_t i, std::size_t c, LabelState value, Provenance provenance);

  void set_pseudo(std::size_t i, std::size_t c, LabelState value);
  void clear_pseudo(std::size_t i, std::size_t c);
  // UNKNOWN -> NEGATIVE with FALLBACK_NEGATIVE provenance.
  void set_fallback_negative(std::size_t i, std::size_t c);

  std::size_t known_count() const noexcept { return known_count_; }
  std::size_t count(Provenance p) const;
  std::size_t unknown_count() const { return count(Provenance::kNone); }
  std::size_t known_in_sample(std::size_t i) const;
  bool sample_has_known_positive(std::size_t i) const;
  bool sample_touched(std::size_t i) const;

  // Checks the structural invariants; returns an empty string when valid.
  std::string validate() const;

  bool operator==(const PartialLabelMatrix&) const = default;

 private:
  std::size_t samples_ = 0;
  std::size_t categories_ = 0;
  std::vector<LabelState> states_;
  std::vector<Provenance> provenance_;
  std::size_t known_count_ = 0;
};

struct AnnotationBudget {
  std::size_t limit = 0;
  std::size_t consumed = 0;

  std::size_t remaining() const noexcept { return limit - consumed; }
  bool exhausted() const noexcept { return consumed >= limit; }
};

// granted = min(requested, limit - consumed)
std::size_t consume_budget(AnnotationBudget& budget, std::size_t requested);
// Returns unused grants to the pool.
void refund_budget(AnnotationBudget& budget, std::size_t amount);

inline constexpr const char* kLabelsMagic = "ATAM-LABELS v1";

// Text format: magic line, "<N> <C>" line, then one line per sample holding
// the sample id, the state string over {+,-,0} and the provenance string
// over {.,H,P,F}.
void write_labels(std::ostream& out, const PartialLabelMatrix& labels,
                  const std::vector<std::string>& sample_ids);
PartialLabelMatrix read_labels(std::istream& in, std::vector<std::string>* sample_ids = nullptr);
void save_labels(const std::filesystem::path& path, const PartialLabelMatrix& labels,
                 const std::vector<std::string>& sample_ids);
PartialLabelMatrix load_labels(const std::filesystem::path& path,
                               std::vector<std::string>* sample_ids = nullptr);

}  // namespace atam
