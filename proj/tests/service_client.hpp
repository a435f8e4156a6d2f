#pragma once

// Oracle client for the /v1 protocol. It answers every query from the
// ground truth the same way the simulated oracle annotator does, so a
// session it drives can be compared with the headless loop.

#include <chrono>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace oracle {

struct Reply {
  int status = 0;
  nlohmann::json body;
};

// (method, path, token, body) -> reply
using Transport = std::function<Reply(const std::string&, const std::string&, const std::string&, const std::string&)>;

struct TruthTable {
  std::vector<std::string> categories;
  // sample id -> dense +1/-1 row
  std::map<std::string, std::vector<int>> rows;
};

inline nlohmann::json oracle_answer(const nlohmann::json& q, const TruthTable& truth) {
  const auto& row = truth.rows.at(q.at("sample_id").get<std::string>());
  if (q.at("kind") == "cell") {
    std::size_t c = 0;
    while (truth.categories[c] != q.at("category").get<std::string>()) ++c;
    return {{"query_id", q.at("query_id")}, {"answer", row[c]}};
  }
  nlohmann::json labels = nlohmann::json::object();
  for (std::size_t c = 0; c < row.size(); ++c)
    if (row[c] > 0) labels[truth.categories[c]] = 1;
  if (labels.empty()) return {{"query_id", q.at("query_id")}, {"answer", "skip"}};
  return {{"query_id", q.at("query_id")}, {"labels", labels}};
}

// Runs a session to completion and returns its final labels response.
inline nlohmann::json drive_session(const Transport& call, const std::string& id, const std::string& token,
                                    const TruthTable& truth) {
  const std::string base = "/v1/sessions/" + id;
  for (;;) {
    const Reply b = call("GET", base + "/batch", token, "");
    if (b.status != 200) throw std::runtime_error("batch request failed: " + b.body.dump());
    if (b.body.contains("error")) throw std::runtime_error(b.body.at("error").get<std::string>());
    const std::string status = b.body.at("status");
    if (status == "done") break;
    if (status == "training") {
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
      continue;
    }
    nlohmann::json answers = nlohmann::json::array();
    for (const auto& q : b.body.at("queries")) answers.push_back(oracle_answer(q, truth));
    const Reply a = call("POST", base + "/answers", token, nlohmann::json{{"answers", answers}}.dump());
    if (a.status != 200) throw std::runtime_error("answers request failed: " + a.body.dump());
  }
  const Reply l = call("GET", base + "/labels", token, "");
  if (l.status != 200) throw std::runtime_error("labels request failed: " + l.body.dump());
  return l.body;
}

}  // namespace oracle
