#include "atam/labels.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "atam/error.hpp"

namespace atam {
namespace {

char state_char(LabelState s) {
  switch (s) {
    case LabelState::kPositive: return '+';
    case LabelState::kNegative: return '-';
    case LabelState::kUnknown: return '0';
  }
  return '?';
}

char provenance_char(Provenance p) {
  switch (p) {
    case Provenance::kNone: return '.';
    case Provenance::kHumanOrOracle: return 'H';
    case Provenance::kPseudo: return 'P';
    case Provenance::kFallbackNegative: return 'F';
  }
  return '?';
}

LabelState parse_state(char ch) {
  switch (ch) {
    case '+': return LabelState::kPositive;
    case '-': return LabelState::kNegative;
    case '0': return LabelState::kUnknown;
  }
  throw Error(ErrorCode::kIo, std::string("bad label state character '") + ch + "'");
}

Provenance parse_provenance(char ch) {
  switch (ch) {
    case '.': return Provenance::kNone;
    case 'H': return Provenance::kHumanOrOracle;
    case 'P': return Provenance::kPseudo;
    case 'F': return Provenance::kFallbackNegative;
  }
  throw Error(ErrorCode::kIo, std::string("bad provenance character '") + ch + "'");
}

}  // namespace

LabelState label_from_int(int v) {
  if (v == 1) return LabelState::kPositive;
  if (v == -1) return LabelState::kNegative;
  if (v == 0) return LabelState::kUnknown;
  throw Error(ErrorCode::kInvalidArgument, "label value must be -1, 0 or +1");
}

PartialLabelMatrix::PartialLabelMatrix(std::size_t samples, std::size_t categories)
    : samples_(samples),
      categories_(categories),
      states_(samples * categories, LabelState::kUnknown),
      provenance_(samples * categories, Provenance::kNone) {}

void PartialLabelMatrix::record(std::size_t i, std::size_t c, LabelState value,
                                Provenance provenance) {
  if (i >= samples_ || c >= categories_)
    throw Error(ErrorCode::kInvalidArgument, "label cell out of range");
  if (value == LabelState::kUnknown)
    throw Error(ErrorCode::kInvalidArgument, "cannot record an unknown label");
  const std::size_t k = i * categories_ + c;
  const Provenance current = provenance_[k];
  if (current == Provenance::kHumanOrOracle)
    throw Error(ErrorCode::kConflict, "annotation conflict");
  switch (provenance) {
    case Provenance::kHumanOrOracle:
      if (current == Provenance::kFallbackNegative)
        throw Error(ErrorCode::kConflict, "annotation conflict");
      ++known_count_;
      break;
    case Provenance::kPseudo:
      if (current == Provenance::kFallbackNegative)
        throw Error(ErrorCode::kConflict, "annotation conflict");
      break;
    case Provenance::kFallbackNegative:
      if (current != Provenance::kNone || value != LabelState::kNegative)
        throw Error(ErrorCode::kConflict, "fallback applies to unknown cells only");
      break;
    case Provenance::kNone:
      throw Error(ErrorCode::kInvalidArgument, "provenance NONE cannot carry a label");
  }
  states_[k] = value;
  provenance_[k] = provenance;
}

void PartialLabelMatrix::set_pseudo(std::size_t i, std::size_t c, LabelState value) {
  record(i, c, value, Provenance::kPseudo);
}

void PartialLabelMatrix::clear_pseudo(std::size_t i, std::size_t c) {
  const std::size_t k = i * categories_ + c;
  if (provenance_[k] != Provenance::kPseudo) return;
  states_[k] = LabelState::kUnknown;
  provenance_[k] = Provenance::kNone;
}

void PartialLabelMatrix::set_fallback_negative(std::size_t i, std::size_t c) {
  record(i, c, LabelState::kNegative, Provenance::kFallbackNegative);
}

std::size_t PartialLabelMatrix::count(Provenance p) const {
  return static_cast<std::size_t>(std::count(provenance_.begin(), provenance_.end(), p));
}

std::size_t PartialLabelMatrix::known_in_sample(std::size_t i) const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < categories_; ++c) n += is_known(i, c) ? 1 : 0;
  return n;
}

bool PartialLabelMatrix::sample_has_known_positive(std::size_t i) const {
  for (std::size_t c = 0; c < categories_; ++c)
    if (is_known(i, c) && state(i, c) == LabelState::kPositive) return true;
  return false;
}

bool PartialLabelMatrix::sample_touched(std::size_t i) const {
  for (std::size_t c = 0; c < categories_; ++c)
    if (state(i, c) != LabelState::kUnknown) return true;
  return false;
}

std::string PartialLabelMatrix::validate() const {
  std::size_t known = 0;
  for (std::size_t i = 0; i < samples_; ++i) {
    for (std::size_t c = 0; c < categories_; ++c) {
      const bool none = provenance(i, c) == Provenance::kNone;
      const bool unknown = state(i, c) == LabelState::kUnknown;
      if (none != unknown) {
        std::ostringstream os;
        os << "cell (" << i << "," << c << ") has inconsistent provenance";
        return os.str();
      }
      if (provenance(i, c) == Provenance::kFallbackNegative && state(i, c) != LabelState::kNegative)
        return "fallback cell is not negative";
      known += is_known(i, c) ? 1 : 0;
    }
    if (sample_touched(i) && !sample_has_known_positive(i)) {
      std::ostringstream os;
      os << "sample " << i << " is annotated without a known positive";
      return os.str();
    }
  }
  if (known != known_count_) return "known-label count out of sync";
  return {};
}

std::size_t consume_budget(AnnotationBudget& budget, std::size_t requested) {
  const std::size_t granted = std::min(requested, budget.limit - std::min(budget.consumed, budget.limit));
  budget.consumed += granted;
  return granted;
}

void refund_budget(AnnotationBudget& budget, std::size_t amount) {
  if (amount > budget.consumed)
    throw Error(ErrorCode::kInvalidArgument, "refund exceeds consumed budget");
  budget.consumed -= amount;
}

void write_labels(std::ostream& out, const PartialLabelMatrix& labels,
                  const std::vector<std::string>& sample_ids) {
  if (!sample_ids.empty() && sample_ids.size() != labels.samples())
    throw Error(ErrorCode::kInvalidArgument, "sample id count does not match label rows");
  out << kLabelsMagic << '\n' << labels.samples() << ' ' << labels.categories() << '\n';
  std::string states(labels.categories(), '0');
  std::string prov(labels.categories(), '.');
  for (std::size_t i = 0; i < labels.samples(); ++i) {
    for (std::size_t c = 0; c < labels.categories(); ++c) {
      states[c] = state_char(labels.state(i, c));
      prov[c] = provenance_char(labels.provenance(i, c));
    }
    const std::string id = sample_ids.empty() ? std::to_string(i) : sample_ids[i];
    out << id << ' ' << states << ' ' << prov << '\n';
  }
}

PartialLabelMatrix read_labels(std::istream& in, std::vector<std::string>* sample_ids) {
  std::string line;
  if (!std::getline(in, line) || line != kLabelsMagic)
    throw Error(ErrorCode::kIo, "missing ATAM-LABELS v1 header");
  std::size_t n = 0, c = 0;
  if (!std::getline(in, line)) throw Error(ErrorCode::kIo, "truncated label file");
  {
    std::istringstream dims(line);
    if (!(dims >> n >> c)) throw Error(ErrorCode::kIo, "bad label dimensions");
  }
  PartialLabelMatrix labels(n, c);
  if (sample_ids) sample_ids->clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw Error(ErrorCode::kIo, "truncated label file");
    std::istringstream row(line);
    std::string id, states, prov;
    if (!(row >> id >> states >> prov) || states.size() != c || prov.size() != c)
      throw Error(ErrorCode::kIo, "malformed label row " + std::to_string(i));
    for (std::size_t k = 0; k < c; ++k) {
      const LabelState s = parse_state(states[k]);
      const Provenance p = parse_provenance(prov[k]);
      if ((s == LabelState::kUnknown) != (p == Provenance::kNone))
        throw Error(ErrorCode::kIo, "inconsistent provenance in row " + std::to_string(i));
      if (p != Provenance::kNone) labels.record(i, k, s, p);
    }
    if (sample_ids) sample_ids->push_back(id);
  }
  return labels;
}

void save_labels(const std::filesystem::path& path, const PartialLabelMatrix& labels,
                 const std::vector<std::string>& sample_ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  write_labels(out, labels, sample_ids);
}

PartialLabelMatrix load_labels(const std::filesystem::path& path,
                               std::vector<std::string>* sample_ids) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path.string());
  return read_labels(in, sample_ids);
}

}  // namespace atam
