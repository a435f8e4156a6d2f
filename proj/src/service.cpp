#include "atam/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>

#include "atam/error.hpp"
#include "atam/experiments.hpp"
#include "atam/metrics.hpp"
#include "atam/trainer.hpp"

namespace atam {

using nlohmann::json;

namespace {

constexpr const char* kSessionFormat = "ATAM-SERVICE-SESSION v1";

HttpResponse error_response(int status, const std::string& message, const std::string& field = {}) {
  json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  return {status, body};
}

// Session stage as sent over the wire: "open", "training" or "done".
std::string wire_status(SessionStage stage) {
  std::string s = session_stage_name(stage);
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kFailedPrecondition:
      return 409;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kConfig:
      return 422;
    default:
      return 500;
  }
}

std::string random_hex(std::size_t bytes) {
  static std::mutex mutex;
  static std::random_device device;
  static std::mt19937_64 rng(static_cast<std::uint64_t>(device()) << 32 ^ device());
  std::lock_guard lock(mutex);
  std::ostringstream out;
  for (std::size_t i = 0; i < bytes; ++i) {
    out << "0123456789abcdef"[rng() & 15] << "0123456789abcdef"[rng() & 15];
  }
  return out.str();
}

json budget_json(const AnnotationBudget& b) {
  return {{"limit", b.limit}, {"consumed", b.consumed}, {"remaining", b.remaining()}};
}

// Wire form of a config value: strings verbatim, everything else as JSON.
std::string config_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    for (const auto& e : v) out += (out.empty() ? "" : ",") + config_text(e);
    return out;
  }
  return v.dump();
}

std::optional<int> parse_cell_answer(const json& a) {
  if (a.is_string() && a.get<std::string>() == "skip") return std::nullopt;
  if (a.is_number_integer() && (a.get<int>() == 1 || a.get<int>() == -1)) return a.get<int>();
  throw Error(ErrorCode::kInvalidArgument, "answer must be 1, -1 or \"skip\"");
}

// Canonical history entry for a submitted answer.
json canonical_answer(const json& item) {
  if (item.contains("labels")) {
    json labels = json::object();
    for (const auto& [k, v] : item.at("labels").items()) labels[k] = v;
    return {{"labels", labels}};
  }
  return {{"answer", item.at("answer")}};
}

}  // namespace

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

AnnotationService::AnnotationService(RunConfig defaults) : defaults_(std::move(defaults)) {}

AnnotationService::~AnnotationService() {
  std::lock_guard lock(sessions_mutex_);
  for (auto& [id, s] : sessions_)
    if (s->worker.joinable()) s->worker.join();
}

std::size_t AnnotationService::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

void AnnotationService::wait_idle() {
  for (;;) {
    bool busy = false;
    {
      std::lock_guard lock(sessions_mutex_);
      for (const auto& [id, s] : sessions_) busy = busy || s->training.load();
    }
    if (!busy) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

std::shared_ptr<const Dataset> AnnotationService::load_dataset_cached(const std::filesystem::path& path) {
  const std::string key = std::filesystem::weakly_canonical(path).string();
  std::lock_guard lock(sessions_mutex_);
  auto it = datasets_.find(key);
  if (it != datasets_.end()) return it->second;
  auto ds = std::make_shared<const Dataset>(load_dataset(path));
  datasets_[key] = ds;
  return ds;
}

std::shared_ptr<AnnotationService::Session> AnnotationService::find_session(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

namespace {

struct PoolView {
  std::shared_ptr<const Matrix> features;
  std::vector<std::string> ids;
  std::vector<std::string> refs;
  std::shared_ptr<const SplitData> val;
};

PoolView pool_view(const Dataset& dataset) {
  SplitData train = make_split(dataset, Split::kTrain);
  PoolView v;
  v.features = std::make_shared<const Matrix>(std::move(train.features));
  v.ids = train.ids;
  for (std::size_t r : train.rows) v.refs.push_back(dataset.manifest.samples[r].feature_ref);
  const auto val_rows = dataset.indices(Split::kVal);
  bool labeled = !val_rows.empty();
  for (std::size_t r : val_rows) labeled = labeled && !dataset.manifest.samples[r].labels.empty();
  if (labeled) v.val = std::make_shared<const SplitData>(make_split(dataset, Split::kVal));
  return v;
}

}  // namespace

HttpResponse AnnotationService::create_session(const json& request) {
  if (!request.is_object()) return error_response(422, "request body must be an object");
  if (!request.contains("dataset") || !request["dataset"].is_string())
    return error_response(422, "dataset reference is required", "dataset");
  const std::string ref = request["dataset"].get<std::string>();
  const std::filesystem::path path = std::filesystem::path(defaults_.service.data_root) / ref;
  if (ref.empty() || !std::filesystem::is_regular_file(path))
    return error_response(404, "dataset not found: " + ref, "dataset");

  RunConfig rc = defaults_;
  if (request.contains("seed")) {
    if (!request["seed"].is_number_unsigned()) return error_response(422, "seed must be a non-negative integer", "seed");
    apply_seed(rc, request["seed"].get<std::uint64_t>());
  }
  if (request.contains("config")) {
    if (!request["config"].is_object()) return error_response(422, "config must be an object", "config");
    for (const auto& [key, value] : request["config"].items()) {
      try {
        set_config_value(rc, key, config_text(value));
      } catch (const Error& e) {
        return error_response(422, e.what(), "config." + key);
      }
    }
  }
  if (rc.sampler.mode != SamplingMode::kSalientActive)
    return error_response(422, "sessions support salient sampling only", "config.sampler.mode");

  std::shared_ptr<const Dataset> dataset;
  try {
    dataset = load_dataset_cached(path);
  } catch (const Error& e) {
    return error_response(422, std::string("dataset unreadable: ") + e.what(), "dataset");
  }
  PoolView view = pool_view(*dataset);
  if (view.ids.empty()) return error_response(422, "dataset has no train split", "dataset");

  SamplerConfig sc = rc.sampler;
  if (sc.budget.limit == 0) {
    try {
      SplitData shape;
      shape.truth = PartialLabelMatrix(view.ids.size(), dataset->categories());
      sc.budget.limit = budget_for(rc.experiment.budget_fraction, shape);
    } catch (const Error& e) {
      return error_response(422, e.what(), "config.experiment.budget_fraction");
    }
  }
  sc.budget.consumed = 0;

  auto s = std::make_shared<Session>();
  try {
    s->state = std::make_unique<ActiveSession>(view.features, view.ids, dataset->manifest.categories, sc,
                                               TrainerHandle{rc.model, rc.train});
  } catch (const Error& e) {
    return error_response(status_for(e.code()) == 500 ? 422 : status_for(e.code()), e.what(), "config.sampler");
  }
  s->id = random_hex(8);
  s->token = random_hex(16);
  s->dataset_ref = ref;
  s->created_at = s->updated_at = utc_timestamp();
  s->dataset = dataset;
  s->sample_refs = std::move(view.refs);
  s->val = view.val;
  {
    std::unique_lock lock(s->mutex);
    persist(*s);
  }
  json body{{"session_id", s->id},
            {"token", s->token},
            {"status", wire_status(s->state->stage())},
            {"pending", s->state->pending().size()},
            {"budget", budget_json(s->state->budget())},
            {"created_at", s->created_at}};
  {
    std::lock_guard lock(sessions_mutex_);
    sessions_[s->id] = s;
  }
  return {201, body};
}

HttpResponse AnnotationService::get_batch(Session& s) {
  std::shared_lock lock(s.mutex);
  const ActiveSession& st = *s.state;
  std::vector<LabelQuery> queries = st.stage() == SessionStage::kOpen ? st.pending() : std::vector<LabelQuery>{};
  std::stable_sort(queries.begin(), queries.end(), [](const LabelQuery& a, const LabelQuery& b) {
    return a.confidence > b.confidence;
  });
  json list = json::array();
  for (const LabelQuery& q : queries) {
    json item{{"query_id", q.query_id},
              {"sample_id", q.sample_id},
              {"sample_ref", s.sample_refs.at(q.sample)},
              {"kind", q.kind == QueryKind::kCell ? "cell" : "seed"},
              {"confidence", q.confidence},
              {"forced", q.forced}};
    if (q.kind == QueryKind::kCell) {
      item["category"] = st.categories().at(q.category);
      item["suggested"] = q.suggested;
    } else {
      item["category"] = nullptr;
      item["suggested"] = nullptr;
    }
    list.push_back(std::move(item));
  }
  json body{{"session_id", s.id},
            {"status", wire_status(st.stage())},
            {"round", st.round_index()},
            {"budget", budget_json(st.budget())},
            {"queries", list}};
  if (!s.error.empty()) body["error"] = s.error;
  return {200, body};
}

HttpResponse AnnotationService::submit_answers(Session& s, const json& request) {
  if (!request.is_object() || !request.contains("answers") || !request["answers"].is_array())
    return error_response(422, "answers must be a list", "answers");

  bool start = false;
  std::size_t accepted = 0, duplicates = 0;
  json body;
  {
    std::unique_lock lock(s.mutex);
    // Applied to a copy so that a rejected item leaves the session untouched.
    ActiveSession work = *s.state;
    json history = s.history;
    const auto& categories = work.categories();
    for (const json& item : request["answers"]) {
      if (!item.is_object() || !item.contains("query_id") || !item["query_id"].is_number_unsigned())
        return error_response(422, "each answer needs a query_id", "answers.query_id");
      if (!item.contains("answer") && !item.contains("labels"))
        return error_response(422, "each answer needs answer or labels", "answers.answer");
      const std::size_t qid = item["query_id"].get<std::size_t>();
      const std::string key = std::to_string(qid);
      json canon;
      try {
        canon = canonical_answer(item);
      } catch (const json::exception&) {
        return error_response(422, "malformed answer", "answers");
      }
      if (history.contains(key)) {
        if (history[key] != canon)
          return error_response(409, "query " + key + " was already answered differently");
        ++duplicates;
        continue;
      }
      const auto& batch = work.batch();
      const auto entry = std::find_if(batch.begin(), batch.end(),
                                      [&](const BatchEntry& e) { return e.query.query_id == qid; });
      if (entry == batch.end() || work.stage() != SessionStage::kOpen)
        return error_response(404, "query " + key + " is not in the open batch");
      try {
        SubmitResult r;
        if (entry->query.kind == QueryKind::kCell) {
          if (item.contains("labels")) return error_response(422, "cell queries take answer", "answers.answer");
          r = work.answer(qid, parse_cell_answer(item["answer"]));
        } else {
          SeedAnswer sa;
          if (item.contains("labels")) {
            if (!item["labels"].is_object()) return error_response(422, "labels must map category to 1 or -1", "answers.labels");
            for (const auto& [name, v] : item["labels"].items()) {
              const auto c = std::find(categories.begin(), categories.end(), name);
              if (c == categories.end()) return error_response(422, "unknown category: " + name, "answers.labels");
              if (!v.is_number_integer() || (v.get<int>() != 1 && v.get<int>() != -1))
                return error_response(422, "label values must be 1 or -1", "answers.labels");
              sa.labels.emplace_back(static_cast<std::size_t>(c - categories.begin()), v.get<int>());
            }
          } else if (item["answer"] == "skip") {
            sa.declined = true;
          } else {
            return error_response(422, "seed queries take labels or \"skip\"", "answers.labels");
          }
          r = work.answer_seed(qid, sa);
        }
        (r == SubmitResult::kAccepted ? accepted : duplicates) += 1;
      } catch (const Error& e) {
        return error_response(status_for(e.code()), e.what());
      }
      history[key] = canon;
    }
    if (work.stage() == SessionStage::kOpen && work.batch_resolved()) {
      work.close_batch();
      start = work.stage() == SessionStage::kTraining;
    }
    *s.state = std::move(work);
    s.history = std::move(history);
    s.updated_at = utc_timestamp();
    persist(s);
    if (start) s.training = true;
    body = {{"accepted", accepted},
            {"duplicates", duplicates},
            {"status", wire_status(s.state->stage())},
            {"pending", s.state->stage() == SessionStage::kOpen ? s.state->pending().size() : 0},
            {"budget", budget_json(s.state->budget())}};
  }
  if (start) start_training(find_session(s.id));
  return {200, body};
}

void AnnotationService::start_training(const std::shared_ptr<Session>& s) {
  if (!s) return;
  if (s->worker.joinable()) s->worker.join();
  s->training = true;
  s->worker = std::thread([this, s] {
    std::optional<ActiveSession> work;
    {
      std::shared_lock lock(s->mutex);
      work.emplace(*s->state);
    }
    std::string error;
    try {
      work->advance_round();
    } catch (const std::exception& e) {
      error = e.what();
    }
    {
      std::unique_lock lock(s->mutex);
      if (error.empty()) {
        *s->state = std::move(*work);
      } else {
        s->error = "fine-tune failed: " + error;
      }
      s->updated_at = utc_timestamp();
      try {
        persist(*s);
      } catch (const std::exception& e) {
        std::cerr << "warning: " << e.what() << "\n";
      }
    }
    s->training = false;
  });
}

HttpResponse AnnotationService::summary(Session& s) {
  std::shared_lock lock(s.mutex);
  const ActiveSession& st = *s.state;
  const PartialLabelMatrix& y = st.labels();
  std::size_t positive = 0, negative = 0;
  for (std::size_t i = 0; i < y.samples(); ++i)
    for (std::size_t c = 0; c < y.categories(); ++c) {
      if (!y.is_known(i, c)) continue;
      (y.state(i, c) == LabelState::kPositive ? positive : negative) += 1;
    }
  json rounds = json::array();
  for (const auto& r : st.rounds()) rounds.push_back(round_to_json(r));
  json body{{"session_id", s.id},
            {"dataset", s.dataset_ref},
            {"status", wire_status(st.stage())},
            {"round", st.round_index()},
            {"categories", st.categories()},
            {"samples", y.samples()},
            {"budget", budget_json(st.budget())},
            {"known", {{"labels", y.known_count()}, {"positive", positive}, {"negative", negative}}},
            {"rounds", rounds},
            {"metrics", nullptr},
            {"created_at", s.created_at},
            {"updated_at", s.updated_at}};
  if (s.val && !st.rounds().empty())
    body["metrics"] = metrics_to_json(evaluate(predict(st.model(), s.val->features), s.val->truth));
  if (!s.error.empty()) body["error"] = s.error;
  return {200, body};
}

HttpResponse AnnotationService::labels(Session& s) {
  std::shared_lock lock(s.mutex);
  const PartialLabelMatrix& y = s.state->labels();
  json samples = json::array();
  for (std::size_t i = 0; i < y.samples(); ++i) {
    std::vector<int> row(y.categories());
    for (std::size_t c = 0; c < y.categories(); ++c) row[c] = y.is_known(i, c) ? to_int(y.state(i, c)) : 0;
    samples.push_back({{"sample_id", s.state->sample_ids()[i]}, {"labels", row}});
  }
  return {200, {{"session_id", s.id}, {"categories", s.state->categories()}, {"samples", samples}}};
}

void AnnotationService::persist(const Session& s) const {
  const std::string& dir = defaults_.service.state_dir;
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  const std::filesystem::path target = std::filesystem::path(dir) / (s.id + ".session");
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    const json meta{{"format", kSessionFormat},
                    {"session_id", s.id},
                    {"token", s.token},
                    {"dataset", s.dataset_ref},
                    {"created_at", s.created_at},
                    {"updated_at", s.updated_at},
                    {"error", s.error},
                    {"history", s.history}};
    out << meta.dump() << "\n";
    s.state->save(out);
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

void AnnotationService::restore_sessions() {
  const std::string& dir = defaults_.service.state_dir;
  if (dir.empty() || !std::filesystem::is_directory(dir)) return;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".session") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    try {
      std::ifstream in(file, std::ios::binary);
      std::string line;
      std::getline(in, line);
      const json meta = json::parse(line);
      if (meta.at("format") != kSessionFormat) throw Error(ErrorCode::kIo, "unknown session format");
      auto s = std::make_shared<Session>();
      s->id = meta.at("session_id");
      s->token = meta.at("token");
      s->dataset_ref = meta.at("dataset");
      s->created_at = meta.at("created_at");
      s->updated_at = meta.at("updated_at");
      s->error = meta.value("error", "");
      s->history = meta.at("history");
      s->dataset = load_dataset_cached(std::filesystem::path(defaults_.service.data_root) / s->dataset_ref);
      PoolView view = pool_view(*s->dataset);
      s->sample_refs = std::move(view.refs);
      s->val = view.val;
      s->state = std::make_unique<ActiveSession>(ActiveSession::load(in, view.features));
      const bool resume = s->state->stage() == SessionStage::kTraining && s->error.empty();
      {
        std::lock_guard lock(sessions_mutex_);
        sessions_[s->id] = s;
      }
      if (resume) start_training(s);
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping session file " << file << ": " << e.what() << "\n";
    }
  }
}

HttpResponse AnnotationService::handle(const std::string& method, const std::string& path,
                                       const std::string& authorization, const std::string& body) {
  static const std::regex session_route("^/v1/sessions/([0-9a-f]+)/(batch|answers|summary|labels)$");
  try {
    auto parse_body = [&]() { return body.empty() ? json::object() : json::parse(body); };
    if (path == "/v1/health") {
      if (method != "GET") return error_response(405, "method not allowed");
      return {200, {{"status", "ok"}, {"sessions", session_count()}, {"time", utc_timestamp()}}};
    }
    if (path == "/v1/sessions") {
      if (method != "POST") return error_response(405, "method not allowed");
      return create_session(parse_body());
    }
    std::smatch m;
    if (!std::regex_match(path, m, session_route)) return error_response(404, "no such route");
    const std::string id = m[1], action = m[2];
    auto s = find_session(id);
    if (!s) return error_response(404, "no such session");
    if (authorization != "Bearer " + s->token) return error_response(401, "missing or invalid token");
    const bool post = action == "answers";
    if (method != (post ? "POST" : "GET")) return error_response(405, "method not allowed");
    if (action == "batch") return get_batch(*s);
    if (action == "answers") return submit_answers(*s, parse_body());
    if (action == "summary") return summary(*s);
    return labels(*s);
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed JSON: ") + e.what());
  } catch (const Error& e) {
    return error_response(status_for(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

void AnnotationService::mount(httplib::Server& server) {
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = handle(req.method, req.path, req.get_header_value("Authorization"), req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(R"(/v1/.*)", route);
  server.Post(R"(/v1/.*)", route);
}

void run_service(const RunConfig& config) {
  AnnotationService service(config);
  service.restore_sessions();
  httplib::Server server;
  service.mount(server);
  std::cerr << "listening on " << config.service.host << ":" << config.service.port << "\n";
  if (!server.listen(config.service.host, config.service.port))
    throw Error(ErrorCode::kIo, "cannot bind " + config.service.host + ":" + std::to_string(config.service.port));
}

}  // namespace atam
