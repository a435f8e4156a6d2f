#include "atam/annotators.hpp"

#include <algorithm>

#include "atam/error.hpp"

namespace atam {

const char* annotator_kind_name(AnnotatorKind k) {
  switch (k) {
    case AnnotatorKind::kOracle: return "oracle";
    case AnnotatorKind::kNoisy: return "noisy";
    case AnnotatorKind::kHuman: return "human";
  }
  return "?";
}

AnnotatorKind parse_annotator_kind(const std::string& s) {
  if (s == "oracle") return AnnotatorKind::kOracle;
  if (s == "noisy") return AnnotatorKind::kNoisy;
  if (s == "human") return AnnotatorKind::kHuman;
  throw Error(ErrorCode::kConfig, "unknown annotator kind '" + s + "'");
}

void validate_profile(const AnnotatorProfile& p) {
  if (!(p.flip_rate >= 0.0 && p.flip_rate <= 1.0) || !(p.skip_rate >= 0.0 && p.skip_rate <= 1.0))
    throw Error(ErrorCode::kConfig, "annotator flip/skip rates must be in [0, 1]");
  if (p.kind == AnnotatorKind::kOracle && (p.flip_rate != 0.0 || p.skip_rate != 0.0))
    throw Error(ErrorCode::kConfig, "the oracle annotator has no noise");
}

SimulatedAnnotator::SimulatedAnnotator(const AnnotatorProfile& profile)
    : profile_(profile), rng_(profile.seed) {
  validate_profile(profile_);
  if (profile_.kind == AnnotatorKind::kHuman)
    throw Error(ErrorCode::kInvalidArgument, "human profiles need a HumanAnnotator");
}

std::optional<int> SimulatedAnnotator::apply_noise(int truth) {
  if (profile_.kind == AnnotatorKind::kOracle) return truth;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double skip = u(rng_);
  const double flip = u(rng_);
  if (skip < profile_.skip_rate) return std::nullopt;
  return flip < profile_.flip_rate ? -truth : truth;
}

std::optional<int> SimulatedAnnotator::answer(const LabelQuery&, int truth) {
  if (truth != 1 && truth != -1) throw Error(ErrorCode::kInvalidArgument, "truth must be +1 or -1");
  return apply_noise(truth);
}

SeedAnswer SimulatedAnnotator::answer_seed(const LabelQuery&, std::span<const int> truth) {
  SeedAnswer out;
  std::vector<std::size_t> negatives;
  for (std::size_t c = 0; c < truth.size(); ++c) {
    if (truth[c] > 0) {
      if (auto v = apply_noise(1)) out.labels.emplace_back(c, *v);
    } else {
      negatives.push_back(c);
    }
  }
  if (profile_.seed_negatives > 0 && !negatives.empty()) {
    std::shuffle(negatives.begin(), negatives.end(), rng_);
    const std::size_t k = std::min(profile_.seed_negatives, negatives.size());
    std::sort(negatives.begin(), negatives.begin() + static_cast<long>(k));
    for (std::size_t n = 0; n < k; ++n)
      if (auto v = apply_noise(-1)) out.labels.emplace_back(negatives[n], *v);
  }
  out.declined = out.labels.empty();
  return out;
}

std::optional<int> HumanAnnotator::answer(const LabelQuery& query, int) {
  if (!channel_) throw Error(ErrorCode::kFailedPrecondition, "no human session");
  return channel_->ask(query);
}

SeedAnswer HumanAnnotator::answer_seed(const LabelQuery& query, std::span<const int>) {
  if (!channel_) throw Error(ErrorCode::kFailedPrecondition, "no human session");
  return channel_->ask_seed(query);
}

std::unique_ptr<Annotator> make_annotator(const AnnotatorProfile& profile,
                                          std::shared_ptr<HumanChannel> channel) {
  if (profile.kind == AnnotatorKind::kHuman) return std::make_unique<HumanAnnotator>(std::move(channel));
  return std::make_unique<SimulatedAnnotator>(profile);
}

}  // namespace atam
