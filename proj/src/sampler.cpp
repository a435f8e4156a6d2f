#include "atam/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "atam/checkpoint.hpp"
#include "atam/cooccurrence.hpp"
#include "atam/error.hpp"

namespace atam {
namespace {

using nlohmann::json;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

json query_to_json(const LabelQuery& q) {
  return {{"id", q.query_id},     {"sample", q.sample},         {"sample_id", q.sample_id},
          {"kind", q.kind == QueryKind::kSeed ? "seed" : "cell"},  {"category", q.category},
          {"suggested", q.suggested}, {"confidence", q.confidence}, {"forced", q.forced}};
}

LabelQuery query_from_json(const json& j) {
  LabelQuery q;
  q.query_id = j.at("id").get<std::size_t>();
  q.sample = j.at("sample").get<std::size_t>();
  q.sample_id = j.at("sample_id").get<std::string>();
  q.kind = j.at("kind").get<std::string>() == "seed" ? QueryKind::kSeed : QueryKind::kCell;
  q.category = j.at("category").get<std::size_t>();
  q.suggested = j.at("suggested").get<int>();
  q.confidence = j.at("confidence").get<double>();
  q.forced = j.at("forced").get<bool>();
  return q;
}

QueryStatus parse_status(const std::string& s) {
  if (s == "PENDING") return QueryStatus::kPending;
  if (s == "ANSWERED") return QueryStatus::kAnswered;
  if (s == "SKIPPED") return QueryStatus::kSkipped;
  throw Error(ErrorCode::kIo, "bad query status '" + s + "'");
}

SessionStage parse_stage(const std::string& s) {
  if (s == "OPEN") return SessionStage::kOpen;
  if (s == "TRAINING") return SessionStage::kTraining;
  if (s == "DONE") return SessionStage::kDone;
  throw Error(ErrorCode::kIo, "bad session stage '" + s + "'");
}

json sampler_config_to_json(const SamplerConfig& c) {
  return {{"confidence_threshold", c.confidence_threshold},
          {"batch_size", c.batch_size},
          {"seed_size", c.seed_size},
          {"budget_limit", c.budget.limit},
          {"mode", sampling_mode_name(c.mode)},
          {"seed", c.seed},
          {"adjacency_refresh", c.adjacency_refresh},
          {"multi_pass", c.multi_pass},
          {"checkpoint_dir", c.checkpoint_dir.string()}};
}

SamplerConfig sampler_config_from_json(const json& j) {
  SamplerConfig c;
  c.confidence_threshold = j.at("confidence_threshold").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed_size = j.at("seed_size").get<std::size_t>();
  c.budget.limit = j.at("budget_limit").get<std::size_t>();
  c.mode = parse_sampling_mode(j.at("mode").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.adjacency_refresh = j.at("adjacency_refresh").get<double>();
  c.multi_pass = j.at("multi_pass").get<bool>();
  c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
  return c;
}

// Only what the loop needs from the trainer: seed, optimizer, batch size,
// fine-tune epochs and the loss settings.
json train_config_to_json(const TrainConfig& t) {
  return {{"lr", t.optimizer.learning_rate},
          {"momentum", t.optimizer.momentum},
          {"weight_decay", t.optimizer.weight_decay},
          {"decay_every", t.optimizer.decay_every},
          {"decay_factor", t.optimizer.decay_factor},
          {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},
          {"seed", t.seed},
          {"ulp_enabled", t.ulp_enabled},
          {"finetune_epochs", t.finetune_epochs},
          {"alpha_focal", t.loss.alpha_focal},
          {"gamma", t.loss.gamma},
          {"epsilon", t.loss.epsilon},
          {"class_weights", t.loss.class_weights},
          {"beta", t.ulp.beta},
          {"alpha_temp", t.ulp.alpha_temp},
          {"warmup_epochs", t.ulp.warmup_epochs},
          {"cap_epochs", t.ulp.cap_epochs}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig t;
  t.optimizer.learning_rate = j.at("lr").get<double>();
  t.optimizer.momentum = j.at("momentum").get<double>();
  t.optimizer.weight_decay = j.at("weight_decay").get<double>();
  t.optimizer.decay_every = j.at("decay_every").get<std::size_t>();
  t.optimizer.decay_factor = j.at("decay_factor").get<double>();
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.max_epochs = j.at("max_epochs").get<std::size_t>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.ulp_enabled = j.at("ulp_enabled").get<bool>();
  t.finetune_epochs = j.at("finetune_epochs").get<std::size_t>();
  t.loss.alpha_focal = j.at("alpha_focal").get<double>();
  t.loss.gamma = j.at("gamma").get<double>();
  t.loss.epsilon = j.at("epsilon").get<double>();
  t.loss.class_weights = j.at("class_weights").get<std::vector<double>>();
  t.ulp.beta = j.at("beta").get<double>();
  t.ulp.alpha_temp = j.at("alpha_temp").get<double>();
  t.ulp.warmup_epochs = j.at("warmup_epochs").get<std::size_t>();
  t.ulp.cap_epochs = j.at("cap_epochs").get<std::size_t>();
  return t;
}

}  // namespace

const char* sampling_mode_name(SamplingMode m) {
  return m == SamplingMode::kRandom ? "random" : "salient";
}

SamplingMode parse_sampling_mode(const std::string& s) {
  if (s == "salient" || s == "salient_active") return SamplingMode::kSalientActive;
  if (s == "random") return SamplingMode::kRandom;
  throw Error(ErrorCode::kConfig, "unknown sampling mode '" + s + "'");
}

const char* query_status_name(QueryStatus s) {
  switch (s) {
    case QueryStatus::kPending: return "PENDING";
    case QueryStatus::kAnswered: return "ANSWERED";
    case QueryStatus::kSkipped: return "SKIPPED";
  }
  return "?";
}

const char* session_stage_name(SessionStage s) {
  switch (s) {
    case SessionStage::kOpen: return "OPEN";
    case SessionStage::kTraining: return "TRAINING";
    case SessionStage::kDone: return "DONE";
  }
  return "?";
}

void validate_sampler_config(const SamplerConfig& c) {
  if (!(c.confidence_threshold > 0.5 && c.confidence_threshold < 1.0))
    throw Error(ErrorCode::kConfig, "confidence threshold must be in (0.5, 1)");
  if (c.batch_size == 0) throw Error(ErrorCode::kConfig, "batch size must be >= 1");
  if (c.seed_size == 0) throw Error(ErrorCode::kConfig, "seed size must be >= 1");
  if (!(c.adjacency_refresh >= 0.0)) throw Error(ErrorCode::kConfig, "adjacency_refresh must be >= 0");
  if (c.budget.consumed > c.budget.limit) throw Error(ErrorCode::kConfig, "budget already overspent");
}

json round_to_json(const AnnotationRound& r) {
  return {{"t", r.t},
          {"queried", r.queried},
          {"declined", r.declined},
          {"forced", r.forced},
          {"cumulative", r.cumulative},
          {"wall_seconds", r.wall_seconds},
          {"checkpoint", r.checkpoint}};
}

AnnotationRound round_from_json(const json& j) {
  AnnotationRound r;
  r.t = j.at("t").get<std::size_t>();
  r.queried = j.at("queried").get<std::size_t>();
  r.declined = j.at("declined").get<std::size_t>();
  r.forced = j.at("forced").get<std::size_t>();
  r.cumulative = j.at("cumulative").get<std::size_t>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.checkpoint = j.at("checkpoint").get<std::string>();
  return r;
}

std::vector<LabelQuery> salient_queries(std::span<const double> p, double threshold, bool need_positive,
                                        const std::vector<bool>& allowed) {
  if (!allowed.empty() && allowed.size() != p.size())
    throw Error(ErrorCode::kInvalidArgument, "allowed mask length does not match probabilities");
  auto ok = [&](std::size_t c) { return allowed.empty() || allowed[c]; };
  std::vector<LabelQuery> pos, neg;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (!ok(c)) continue;
    LabelQuery q;
    q.category = c;
    if (p[c] >= threshold) {
      q.suggested = 1;
      q.confidence = p[c];
      pos.push_back(q);
    } else if (p[c] <= 1.0 - threshold) {
      q.suggested = -1;
      q.confidence = 1.0 - p[c];
      neg.push_back(q);
    }
  }
  auto by_confidence = [](const LabelQuery& a, const LabelQuery& b) { return a.confidence > b.confidence; };
  std::stable_sort(pos.begin(), pos.end(), by_confidence);
  std::stable_sort(neg.begin(), neg.end(), by_confidence);
  if (pos.empty() && need_positive) {
    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < p.size(); ++c)
      if (ok(c) && (!best || p[c] > p[*best])) best = c;
    if (best) {
      LabelQuery q;
      q.category = *best;
      q.suggested = 1;
      q.confidence = p[*best];
      q.forced = true;
      pos.push_back(q);
      // A negative suggestion on the forced category would contradict it.
      std::erase_if(neg, [&](const LabelQuery& n) { return n.category == *best; });
    }
  }
  pos.insert(pos.end(), neg.begin(), neg.end());
  return pos;
}

std::vector<LabelQuery> query_step(const MllModel& model, const Matrix& pool, const PartialLabelMatrix& labels,
                                   std::span<const std::size_t> candidates,
                                   const std::vector<std::string>& sample_ids, double threshold,
                                   std::size_t remaining) {
  std::vector<LabelQuery> out;
  if (candidates.empty() || remaining == 0) return out;
  Matrix x(candidates.size(), pool.cols());
  for (std::size_t r = 0; r < candidates.size(); ++r) {
    auto src = pool.row(candidates[r]);
    std::copy(src.begin(), src.end(), x.row(r).begin());
  }
  const Matrix probs = predict_proba(model, x);
  const std::size_t C = labels.categories();
  for (std::size_t r = 0; r < candidates.size() && out.size() < remaining; ++r) {
    const std::size_t i = candidates[r];
    std::vector<bool> allowed(C);
    for (std::size_t c = 0; c < C; ++c) allowed[c] = labels.provenance(i, c) == Provenance::kNone;
    auto qs = salient_queries(probs.row(r), threshold, !labels.sample_has_known_positive(i), allowed);
    for (auto& q : qs) {
      if (out.size() == remaining) break;
      q.sample = i;
      q.sample_id = i < sample_ids.size() ? sample_ids[i] : std::string();
      out.push_back(std::move(q));
    }
  }
  return out;
}

ActiveSession::ActiveSession(std::shared_ptr<const Matrix> pool, std::vector<std::string> sample_ids,
                             std::vector<std::string> categories, const SamplerConfig& config,
                             const TrainerHandle& trainer)
    : pool_(std::move(pool)),
      ids_(std::move(sample_ids)),
      categories_(std::move(categories)),
      config_(config),
      trainer_(trainer) {
  validate_sampler_config(config_);
  if (!pool_ || pool_->rows() == 0) throw Error(ErrorCode::kInvalidArgument, "empty sample pool");
  if (ids_.size() != pool_->rows()) throw Error(ErrorCode::kInvalidArgument, "sample ids do not match pool rows");
  if (categories_.empty()) throw Error(ErrorCode::kInvalidArgument, "no categories");
  const std::size_t seed_need = std::min(config_.seed_size, pool_->rows());
  if (config_.budget.remaining() < seed_need) throw Error(ErrorCode::kFailedPrecondition, "budget below seed requirement");
  trainer_.model.categories = categories_.size();
  trainer_.model.frlm.input_dim = pool_->cols();
  validate_train_config(trainer_.train, categories_.size());
  model_ = MllModel(trainer_.model, categories_);
  labels_ = PartialLabelMatrix(pool_->rows(), categories_.size());
  budget_ = config_.budget;
  rng_.seed(trainer_.train.seed);
  open_seed_batch();
}

void ActiveSession::open_seed_batch() {
  current_ = AnnotationRound{};
  current_.t = 0;
  round_started_ = now_seconds();
  seed_batch_ = true;
  followup_batch_ = false;
  const std::size_t n = std::min(config_.seed_size, pool_->rows());
  for (std::size_t i = 0; i < n; ++i) {
    BatchEntry e;
    e.query.query_id = next_query_id_++;
    e.query.sample = i;
    e.query.sample_id = ids_[i];
    e.query.kind = QueryKind::kSeed;
    e.query.confidence = 0.0;
    batch_.push_back(std::move(e));
  }
  cursor_ = n;
  pass_queries_ = n;
  stage_ = SessionStage::kOpen;
}

std::vector<LabelQuery> ActiveSession::pending() const {
  std::vector<LabelQuery> out;
  for (const auto& e : batch_)
    if (e.status == QueryStatus::kPending) out.push_back(e.query);
  return out;
}

bool ActiveSession::batch_resolved() const {
  return std::none_of(batch_.begin(), batch_.end(),
                      [](const BatchEntry& e) { return e.status == QueryStatus::kPending; });
}

BatchEntry* ActiveSession::find_entry(std::size_t query_id) {
  for (auto& e : batch_)
    if (e.query.query_id == query_id) return &e;
  return nullptr;
}

bool ActiveSession::cell_pending(std::size_t sample, std::size_t category) const {
  for (const auto& l : carry_)
    if (l.sample == sample && l.category == category) return true;
  for (const auto& e : batch_) {
    if (e.query.sample != sample || e.status != QueryStatus::kAnswered) continue;
    if (e.query.kind == QueryKind::kCell && e.query.category == category) return true;
    for (const auto& [c, v] : e.accepted)
      if (c == category) return true;
  }
  return false;
}

SubmitResult ActiveSession::answer(std::size_t query_id, std::optional<int> value) {
  if (stage_ != SessionStage::kOpen) throw Error(ErrorCode::kFailedPrecondition, "no open batch");
  BatchEntry* e = find_entry(query_id);
  if (!e) throw Error(ErrorCode::kNotFound, "unknown query id " + std::to_string(query_id));
  if (e->query.kind != QueryKind::kCell)
    throw Error(ErrorCode::kInvalidArgument, "query " + std::to_string(query_id) + " expects a label list");
  if (value && *value != 1 && *value != -1) throw Error(ErrorCode::kInvalidArgument, "answer must be 1, -1 or skip");
  if (e->status != QueryStatus::kPending) {
    const bool same = value ? (e->status == QueryStatus::kAnswered && e->value == *value)
                            : e->status == QueryStatus::kSkipped;
    if (same) return SubmitResult::kDuplicate;
    throw Error(ErrorCode::kConflict, "query " + std::to_string(query_id) + " already answered differently");
  }
  if (value) {
    e->status = QueryStatus::kAnswered;
    e->value = *value;
  } else {
    e->status = QueryStatus::kSkipped;
    refund_budget(budget_, e->charged);
    e->charged = 0;
    ++current_.declined;
  }
  return SubmitResult::kAccepted;
}

SubmitResult ActiveSession::answer_seed(std::size_t query_id, const SeedAnswer& answer) {
  if (stage_ != SessionStage::kOpen) throw Error(ErrorCode::kFailedPrecondition, "no open batch");
  BatchEntry* e = find_entry(query_id);
  if (!e) throw Error(ErrorCode::kNotFound, "unknown query id " + std::to_string(query_id));
  if (e->query.kind != QueryKind::kSeed)
    throw Error(ErrorCode::kInvalidArgument, "query " + std::to_string(query_id) + " expects 1, -1 or skip");
  const bool declined = answer.declined || answer.labels.empty();
  for (const auto& [c, v] : answer.labels) {
    if (c >= categories_.size()) throw Error(ErrorCode::kInvalidArgument, "category index out of range");
    if (v != 1 && v != -1) throw Error(ErrorCode::kInvalidArgument, "label values must be 1 or -1");
  }
  if (e->status != QueryStatus::kPending) {
    const bool same = declined ? e->status == QueryStatus::kSkipped
                               : (e->status == QueryStatus::kAnswered && e->submitted.labels == answer.labels);
    if (same) return SubmitResult::kDuplicate;
    throw Error(ErrorCode::kConflict, "query " + std::to_string(query_id) + " already answered differently");
  }
  if (declined) {
    e->status = QueryStatus::kSkipped;
    ++current_.declined;
    return SubmitResult::kAccepted;
  }
  const std::size_t i = e->query.sample;
  std::vector<std::pair<std::size_t, int>> keep;
  for (const auto& [c, v] : answer.labels) {
    if (labels_.provenance(i, c) != Provenance::kNone || cell_pending(i, c)) continue;
    if (std::any_of(keep.begin(), keep.end(), [&](const auto& kv) { return kv.first == c; })) continue;
    keep.emplace_back(c, v);
  }
  // Positives first so that budget truncation keeps them.
  std::stable_partition(keep.begin(), keep.end(), [](const auto& kv) { return kv.second > 0; });
  const std::size_t granted = consume_budget(budget_, keep.size());
  keep.resize(granted);
  e->status = keep.empty() ? QueryStatus::kSkipped : QueryStatus::kAnswered;
  e->submitted = answer;
  e->accepted = std::move(keep);
  e->charged = granted;
  if (e->status == QueryStatus::kSkipped) ++current_.declined;
  return SubmitResult::kAccepted;
}

void ActiveSession::close_batch() {
  if (stage_ != SessionStage::kOpen) throw Error(ErrorCode::kFailedPrecondition, "no open batch");
  if (!batch_resolved()) throw Error(ErrorCode::kFailedPrecondition, "batch has pending queries");

  std::map<std::size_t, std::vector<PendingLabel>> by_sample;
  for (const auto& l : carry_) by_sample[l.sample].push_back(l);
  carry_.clear();
  bool cell_batch = false;
  for (const auto& e : batch_) {
    if (e.query.kind == QueryKind::kCell) cell_batch = true;
    if (e.status != QueryStatus::kAnswered) continue;
    if (e.query.kind == QueryKind::kCell) {
      by_sample[e.query.sample].push_back({e.query.sample, e.query.category, e.value});
    } else {
      for (const auto& [c, v] : e.accepted) by_sample[e.query.sample].push_back({e.query.sample, c, v});
    }
  }

  std::vector<std::size_t> followups;
  for (auto& [i, pend] : by_sample) {
    const bool has_positive = labels_.sample_has_known_positive(i) ||
                              std::any_of(pend.begin(), pend.end(), [](const PendingLabel& l) { return l.value > 0; });
    if (has_positive) {
      for (const auto& l : pend) labels_.record(l.sample, l.category, label_from_int(l.value), Provenance::kHumanOrOracle);
      current_.queried += pend.size();
    } else if (cell_batch && !followup_batch_ && budget_.remaining() > 0) {
      followups.push_back(i);
      carry_.insert(carry_.end(), pend.begin(), pend.end());
    } else {
      refund_budget(budget_, pend.size());
    }
  }

  batch_.clear();
  if (!followups.empty()) {
    followup_batch_ = true;
    for (std::size_t i : followups) {
      BatchEntry e;
      e.query.query_id = next_query_id_++;
      e.query.sample = i;
      e.query.sample_id = ids_[i];
      e.query.kind = QueryKind::kSeed;
      batch_.push_back(std::move(e));
    }
    return;
  }
  finish_round();
}

void ActiveSession::finish_round() {
  followup_batch_ = false;
  seed_batch_ = false;
  current_.cumulative = labels_.known_count();
  current_.wall_seconds = now_seconds() - round_started_;
  rounds_.push_back(current_);
  stage_ = budget_.exhausted() ? SessionStage::kDone : SessionStage::kTraining;
}

std::vector<std::size_t> ActiveSession::next_candidates() {
  const std::size_t n = pool_->rows(), C = labels_.categories();
  std::vector<std::size_t> out;
  while (out.size() < config_.batch_size) {
    if (cursor_ >= n) {
      if (!config_.multi_pass || pass_queries_ == 0 || !out.empty()) break;
      cursor_ = 0;
      pass_queries_ = 0;
    }
    const std::size_t i = cursor_++;
    if (labels_.known_in_sample(i) < C) out.push_back(i);
  }
  return out;
}

void ActiveSession::advance_round() {
  if (stage_ != SessionStage::kTraining) throw Error(ErrorCode::kFailedPrecondition, "session is not waiting for training");
  round_started_ = now_seconds();
  current_ = AnnotationRound{};
  current_.t = ++round_index_;

  const std::size_t known = labels_.known_count();
  if (adjacency_known_ == 0 ||
      static_cast<double>(known) > (1.0 + config_.adjacency_refresh) * static_cast<double>(adjacency_known_)) {
    model_.set_adjacency(build_cooccurrence(labels_).propagation(model_.config().gcn.propagation));
    adjacency_known_ = known;
  }
  fine_tune(model_, *pool_, labels_, trainer_.train, trainer_.train.finetune_epochs, rng_);

  if (!config_.checkpoint_dir.empty()) {
    char name[32];
    std::snprintf(name, sizeof name, "round_%03zu.ckpt", current_.t);
    const auto path = config_.checkpoint_dir / name;
    std::filesystem::create_directories(config_.checkpoint_dir);
    save_checkpoint(path, Checkpoint{model_, rng_to_string(rng_), {{"round", current_.t}}});
    current_.checkpoint = path.string();
  }

  while (budget_.remaining() > 0) {
    const std::vector<std::size_t> cands = next_candidates();
    if (cands.empty()) break;
    std::vector<LabelQuery> qs =
        query_step(model_, *pool_, labels_, cands, ids_, config_.confidence_threshold, budget_.remaining());
    if (qs.empty()) continue;
    const std::size_t granted = consume_budget(budget_, qs.size());
    qs.resize(granted);
    pass_queries_ += granted;
    for (auto& q : qs) {
      q.query_id = next_query_id_++;
      if (q.forced) ++current_.forced;
      BatchEntry e;
      e.query = std::move(q);
      e.charged = 1;
      batch_.push_back(std::move(e));
    }
    stage_ = SessionStage::kOpen;
    return;
  }
  stage_ = SessionStage::kDone;
}

void ActiveSession::save(std::ostream& out) const {
  json j;
  j["format"] = "ATAM-SESSION v1";
  j["sampler"] = sampler_config_to_json(config_);
  j["train"] = train_config_to_json(trainer_.train);
  j["ids"] = ids_;
  j["categories"] = categories_;
  j["budget"] = {{"limit", budget_.limit}, {"consumed", budget_.consumed}};
  j["rng"] = rng_to_string(rng_);
  j["stage"] = session_stage_name(stage_);
  j["followup_batch"] = followup_batch_;
  j["seed_batch"] = seed_batch_;
  j["next_query_id"] = next_query_id_;
  j["cursor"] = cursor_;
  j["pass_queries"] = pass_queries_;
  j["adjacency_known"] = adjacency_known_;
  j["round_index"] = round_index_;
  j["current"] = round_to_json(current_);
  j["rounds"] = json::array();
  for (const auto& r : rounds_) j["rounds"].push_back(round_to_json(r));
  j["carry"] = json::array();
  for (const auto& l : carry_) j["carry"].push_back({l.sample, l.category, l.value});
  j["batch"] = json::array();
  for (const auto& e : batch_) {
    json je = {{"query", query_to_json(e.query)},
               {"status", query_status_name(e.status)},
               {"value", e.value},
               {"charged", e.charged},
               {"declined", e.submitted.declined},
               {"submitted", e.submitted.labels},
               {"accepted", e.accepted}};
    j["batch"].push_back(std::move(je));
  }
  std::ostringstream lab;
  write_labels(lab, labels_, ids_);
  j["labels"] = lab.str();
  out << j.dump() << '\n';
  write_checkpoint(out, Checkpoint{model_, {}, {}});
}

ActiveSession ActiveSession::load(std::istream& in, std::shared_ptr<const Matrix> pool) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kIo, "empty session state");
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("corrupt session state: ") + e.what());
  }
  if (j.value("format", "") != "ATAM-SESSION v1") throw Error(ErrorCode::kIo, "not a session state file");
  ActiveSession s;
  try {
    s.pool_ = std::move(pool);
    s.config_ = sampler_config_from_json(j.at("sampler"));
    s.trainer_.train = train_config_from_json(j.at("train"));
    s.ids_ = j.at("ids").get<std::vector<std::string>>();
    s.categories_ = j.at("categories").get<std::vector<std::string>>();
    s.budget_.limit = j.at("budget").at("limit").get<std::size_t>();
    s.budget_.consumed = j.at("budget").at("consumed").get<std::size_t>();
    s.rng_ = rng_from_string(j.at("rng").get<std::string>());
    s.stage_ = parse_stage(j.at("stage").get<std::string>());
    s.followup_batch_ = j.at("followup_batch").get<bool>();
    s.seed_batch_ = j.at("seed_batch").get<bool>();
    s.next_query_id_ = j.at("next_query_id").get<std::size_t>();
    s.cursor_ = j.at("cursor").get<std::size_t>();
    s.pass_queries_ = j.at("pass_queries").get<std::size_t>();
    s.adjacency_known_ = j.at("adjacency_known").get<std::size_t>();
    s.round_index_ = j.at("round_index").get<std::size_t>();
    s.current_ = round_from_json(j.at("current"));
    for (const auto& r : j.at("rounds")) s.rounds_.push_back(round_from_json(r));
    for (const auto& l : j.at("carry"))
      s.carry_.push_back({l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>(), l.at(2).get<int>()});
    for (const auto& je : j.at("batch")) {
      BatchEntry e;
      e.query = query_from_json(je.at("query"));
      e.status = parse_status(je.at("status").get<std::string>());
      e.value = je.at("value").get<int>();
      e.charged = je.at("charged").get<std::size_t>();
      e.submitted.declined = je.at("declined").get<bool>();
      e.submitted.labels = je.at("submitted").get<std::vector<std::pair<std::size_t, int>>>();
      e.accepted = je.at("accepted").get<std::vector<std::pair<std::size_t, int>>>();
      s.batch_.push_back(std::move(e));
    }
    std::istringstream lab(j.at("labels").get<std::string>());
    s.labels_ = read_labels(lab);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("corrupt session state: ") + e.what());
  }
  Checkpoint ck = read_checkpoint(in);
  s.model_ = std::move(ck.model);
  s.trainer_.model = s.model_.config();
  s.round_started_ = now_seconds();
  if (!s.pool_ || s.pool_->rows() != s.ids_.size())
    throw Error(ErrorCode::kInvalidArgument, "pool does not match the stored session");
  return s;
}

namespace {

// Answers every pending query of the open batch in query order.
void answer_open_batch(ActiveSession& session, const PartialLabelMatrix& truth, Annotator& annotator) {
  const std::size_t C = truth.categories();
  std::vector<int> row(C);
  for (const LabelQuery& q : session.pending()) {
    if (q.kind == QueryKind::kCell) {
      session.answer(q.query_id, annotator.answer(q, to_int(truth.state(q.sample, q.category))));
    } else {
      for (std::size_t c = 0; c < C; ++c) row[c] = to_int(truth.state(q.sample, c));
      session.answer_seed(q.query_id, annotator.answer_seed(q, row));
    }
  }
}

TrainerHandle default_trainer() {
  TrainerHandle h;
  h.model.frlm.backbone = Backbone::kMlpOnFeatures;
  return h;
}

}  // namespace

PartialLabelMatrix seed_round(const SamplerConfig& config, const SplitData& pool,
                              const std::vector<std::string>& categories, Annotator& annotator,
                              AnnotationBudget* budget_out) {
  ActiveSession session(std::make_shared<const Matrix>(pool.features), pool.ids, categories, config,
                        default_trainer());
  answer_open_batch(session, pool.truth, annotator);
  session.close_batch();
  if (budget_out) *budget_out = session.budget();
  return session.labels();
}

ActiveLoopResult run_active_loop(const SamplerConfig& config, const SplitData& pool,
                                 const std::vector<std::string>& categories, Annotator& annotator,
                                 const TrainerHandle& trainer) {
  if (config.mode == SamplingMode::kRandom) {
    validate_sampler_config(config);
    ActiveLoopResult out;
    out.labels = random_sample(pool.truth, config.budget.remaining(), config.seed);
    out.budget = config.budget;
    out.budget.consumed += out.labels.known_count();
    AnnotationRound r;
    r.queried = r.cumulative = out.labels.known_count();
    out.rounds.push_back(r);
    return out;
  }
  ActiveSession session(std::make_shared<const Matrix>(pool.features), pool.ids, categories, config, trainer);
  while (session.stage() != SessionStage::kDone) {
    if (session.stage() == SessionStage::kOpen) {
      answer_open_batch(session, pool.truth, annotator);
      session.close_batch();
    } else {
      session.advance_round();
    }
  }
  return {session.labels(), session.rounds(), session.budget(), session.model()};
}

PartialLabelMatrix random_sample(const PartialLabelMatrix& truth, std::size_t budget, std::uint64_t seed,
                                 std::vector<std::size_t>* excluded) {
  const std::size_t N = truth.samples(), C = truth.categories();
  if (budget > N * C) throw Error(ErrorCode::kInvalidArgument, "budget exceeds the total label count");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < N; ++i) {
    bool any = false;
    for (std::size_t c = 0; c < C; ++c) any = any || truth.state(i, c) == LabelState::kPositive;
    if (any) {
      eligible.push_back(i);
    } else {
      std::cerr << "warning: sample " << i << " has no positive label; excluded from random sampling\n";
      if (excluded) excluded->push_back(i);
    }
  }
  PartialLabelMatrix out(N, C);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  const std::size_t touched = std::min(budget, eligible.size());
  eligible.resize(touched);
  std::sort(eligible.begin(), eligible.end());
  for (std::size_t i : eligible) {
    std::vector<std::size_t> pos;
    for (std::size_t c = 0; c < C; ++c)
      if (truth.state(i, c) == LabelState::kPositive) pos.push_back(c);
    const std::size_t c = pos[std::uniform_int_distribution<std::size_t>(0, pos.size() - 1)(rng)];
    out.record(i, c, LabelState::kPositive, Provenance::kHumanOrOracle);
  }
  std::vector<std::size_t> rest;
  for (std::size_t i : eligible)
    for (std::size_t c = 0; c < C; ++c)
      if (!out.is_known(i, c)) rest.push_back(i * C + c);
  const std::size_t extra = std::min(budget - touched, rest.size());
  std::shuffle(rest.begin(), rest.end(), rng);
  rest.resize(extra);
  std::sort(rest.begin(), rest.end());
  for (std::size_t cell : rest) {
    const std::size_t i = cell / C, c = cell % C;
    out.record(i, c, truth.state(i, c), Provenance::kHumanOrOracle);
  }
  return out;
}

}  // namespace atam
