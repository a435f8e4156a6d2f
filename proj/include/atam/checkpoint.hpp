#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "atam/model.hpp"

namespace atam {

inline constexpr const char* kCheckpointMagic = "ATAM-CKPT v1";

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct Checkpoint {
  MllModel model;
  // Serialized std::mt19937_64 state of the owning run; may be empty.
  std::string rng_state;
  // Free-form echo of the run configuration.
  nlohmann::json meta = nlohmann::json::object();
};

// Layout: magic line, one JSON line (config echo, rng state, tensor table),
// then raw little-endian doubles for every tensor in table order. Round trip
// is bit-exact.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace atam
