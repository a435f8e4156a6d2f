#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "atam/annotators.hpp"
#include "atam/model.hpp"
#include "atam/sampler.hpp"
#include "atam/synth.hpp"
#include "atam/trainer.hpp"

namespace atam {

struct ExperimentSettings {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  // Budget as a fraction of the training pool's N * C label cells.
  double budget_fraction = 0.4;
  // Fraction of truth cells kept in the missing-label simulation.
  double keep = 0.4;
  std::vector<double> fractions{0.4, 0.5, 0.6, 0.7, 0.8};
  // Manifest to run on; empty generates the synthetic set from [synth].
  std::string dataset;
  // Seeds run concurrently; results do not depend on this.
  std::size_t jobs = 1;
};

struct ServiceSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  // Session state files live here; empty keeps sessions in memory only.
  std::string state_dir;
  // Dataset references in requests resolve against this directory.
  std::string data_root = ".";
};

// Everything a command can be configured with. Defaults are the frozen
// desk-scale settings used by the experiment harness.
struct RunConfig {
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  SamplerConfig sampler;
  AnnotatorProfile annotator;
  ExperimentSettings experiment;
  ServiceSettings service;
};

RunConfig default_run_config();

struct ConfigKey {
  std::string name;  // "section.key"
  std::string help;
};

// Every recognised key with a one-line description.
const std::vector<ConfigKey>& config_keys();

// INI-style file: "[section]" headers and "key = value" lines, '#' or ';'
// comments. Unknown sections or keys and unparsable values throw kConfig.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
void apply_config_text(RunConfig& config, const std::string& text);

// One "section.key=value" override.
void apply_override(RunConfig& config, const std::string& assignment);
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

// Sets every seed-bearing field from one run seed.
void apply_seed(RunConfig& config, std::uint64_t seed);

// All keys in declaration order as "key=value" lines.
std::string canonical_config(const RunConfig& config);

// 64-bit FNV-1a over bytes, as 16 hex digits.
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace atam
