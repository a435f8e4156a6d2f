#include "atam/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "atam/error.hpp"

namespace atam {
namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw Error(ErrorCode::kConfig, key + ": invalid value '" + value + "' (" + why + ")");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const std::string t = trim(v);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) bad_value(key, v, "expected a number");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const std::string t = trim(v);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty())
    bad_value(key, v, "expected a non-negative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad_value(key, v, "expected true or false");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double d) {
  std::ostringstream os;
  os << std::setprecision(17) << d;
  return os.str();
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    if constexpr (std::is_floating_point_v<T>) {
      os << fmt(v[i]);
    } else {
      os << v[i];
    }
  }
  return os.str();
}

struct KeyDef {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define ATAM_DOUBLE(NAME, FIELD, HELP)                                                   \
  KeyDef {                                                                               \
    {NAME, HELP}, [](RunConfig& c, const std::string& v) { c.FIELD = to_double(NAME, v); }, \
        [](const RunConfig& c) { return fmt(c.FIELD); }                                  \
  }
#define ATAM_SIZE(NAME, FIELD, HELP)                                                          \
  KeyDef {                                                                                    \
    {NAME, HELP},                                                                             \
        [](RunConfig& c, const std::string& v) { c.FIELD = static_cast<decltype(c.FIELD)>(to_u64(NAME, v)); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                            \
  }
#define ATAM_BOOL(NAME, FIELD, HELP)                                                     \
  KeyDef {                                                                               \
    {NAME, HELP}, [](RunConfig& c, const std::string& v) { c.FIELD = to_bool(NAME, v); }, \
        [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }       \
  }
#define ATAM_STRING(NAME, FIELD, HELP)                                          \
  KeyDef {                                                                      \
    {NAME, HELP}, [](RunConfig& c, const std::string& v) { c.FIELD = trim(v); }, \
        [](const RunConfig& c) { return std::string(c.FIELD); }                 \
  }

std::vector<double> doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(key, s));
  return out;
}

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      ATAM_SIZE("synth.samples", synth.samples, "number of generated samples"),
      ATAM_SIZE("synth.categories", synth.categories, "number of categories C"),
      ATAM_SIZE("synth.feature_dim", synth.feature_dim, "feature vector width"),
      ATAM_DOUBLE("synth.kappa", synth.kappa, "co-occurrence strength in [0, 1]"),
      KeyDef{{"synth.positive_rates", "per-class positive rates, comma separated (empty: spread rate_min..rate_max)"},
             [](RunConfig& c, const std::string& v) { c.synth.positive_rates = doubles("synth.positive_rates", v); },
             [](const RunConfig& c) { return join(c.synth.positive_rates); }},
      ATAM_DOUBLE("synth.rate_min", synth.rate_min, "lowest class positive rate"),
      ATAM_DOUBLE("synth.rate_max", synth.rate_max, "highest class positive rate"),
      ATAM_DOUBLE("synth.separability", synth.separability, "class prototype norm"),
      ATAM_DOUBLE("synth.noise", synth.noise, "feature noise standard deviation"),
      ATAM_DOUBLE("synth.val_fraction", synth.val_fraction, "fraction of samples in the val split"),
      ATAM_DOUBLE("synth.test_fraction", synth.test_fraction, "fraction of samples in the test split"),
      ATAM_SIZE("synth.seed", synth.seed, "generator seed"),

      KeyDef{{"model.backbone", "feature branch: small_conv, mlp_on_features or external"},
             [](RunConfig& c, const std::string& v) { c.model.frlm.backbone = parse_backbone(trim(v)); },
             [](const RunConfig& c) { return std::string(backbone_name(c.model.frlm.backbone)); }},
      ATAM_SIZE("model.feature_dim", model.frlm.feature_dim, "feature branch output width"),
      ATAM_SIZE("model.head_hidden", model.frlm.head_hidden, "hidden width of the FC head"),
      ATAM_SIZE("model.embed_dim", model.frlm.embed_dim, "shared label space width d_e"),
      ATAM_SIZE("model.image_side", model.frlm.image_side, "input image side for small_conv"),
      ATAM_SIZE("model.conv_filters", model.frlm.conv_filters, "filters of the small_conv layer"),
      KeyDef{{"model.gcn_dims", "GCN widths, first is the embedding width, last must equal embed_dim"},
             [](RunConfig& c, const std::string& v) {
               c.model.gcn.dims.clear();
               for (const auto& s : split_list(v)) c.model.gcn.dims.push_back(to_u64("model.gcn_dims", s));
             },
             [](const RunConfig& c) { return join(c.model.gcn.dims); }},
      ATAM_DOUBLE("model.gcn_slope", model.gcn.slope, "LeakyReLU slope of the GCN"),
      KeyDef{{"model.embedding_source", "category embeddings: file, seeded_random or one_hot_projected"},
             [](RunConfig& c, const std::string& v) { c.model.gcn.source = parse_embedding_source(trim(v)); },
             [](const RunConfig& c) { return std::string(embedding_source_name(c.model.gcn.source)); }},
      KeyDef{{"model.gcn_propagation", "GCN edge weights: frequencies or counts"},
             [](RunConfig& c, const std::string& v) { c.model.gcn.propagation = parse_propagation(trim(v)); },
             [](const RunConfig& c) { return std::string(propagation_name(c.model.gcn.propagation)); }},
      ATAM_STRING("model.embedding_file", model.gcn.embedding_file, "embedding file for source=file"),
      ATAM_SIZE("model.seed", model.seed, "parameter initialization seed"),

      ATAM_DOUBLE("train.lr", train.optimizer.learning_rate, "base learning rate"),
      ATAM_DOUBLE("train.momentum", train.optimizer.momentum, "SGD momentum"),
      ATAM_DOUBLE("train.weight_decay", train.optimizer.weight_decay, "L2 weight decay"),
      ATAM_SIZE("train.decay_every", train.optimizer.decay_every, "epochs between learning-rate decays"),
      ATAM_DOUBLE("train.decay_factor", train.optimizer.decay_factor, "learning-rate divisor per decay"),
      ATAM_SIZE("train.batch_size", train.batch_size, "mini-batch size"),
      ATAM_SIZE("train.max_epochs", train.max_epochs, "epoch limit"),
      ATAM_SIZE("train.seed", train.seed, "shuffle seed"),
      ATAM_BOOL("train.ulp_enabled", train.ulp_enabled, "use unknown-label prediction"),
      ATAM_DOUBLE("train.plateau_tolerance", train.plateau_tolerance, "relative loss change treated as a plateau"),
      ATAM_SIZE("train.plateau_window", train.plateau_window, "epochs compared by the plateau rule"),
      ATAM_SIZE("train.finetune_epochs", train.finetune_epochs, "fine-tune epochs per annotation round"),

      ATAM_DOUBLE("ulp.beta", train.ulp.beta, "pseudo-label confidence threshold"),
      ATAM_DOUBLE("ulp.alpha_temp", train.ulp.alpha_temp, "temperature scale"),
      ATAM_SIZE("ulp.warmup_epochs", train.ulp.warmup_epochs, "known-only epochs before pseudo labels"),
      ATAM_SIZE("ulp.cap_epochs", train.ulp.cap_epochs, "epoch at which unknown cells are finalized"),
      ATAM_DOUBLE("ulp.t_min", train.ulp.t_min, "lower temperature clamp"),
      ATAM_DOUBLE("ulp.t_max", train.ulp.t_max, "upper temperature clamp"),

      ATAM_DOUBLE("loss.alpha_focal", train.loss.alpha_focal, "focal loss alpha"),
      ATAM_DOUBLE("loss.gamma", train.loss.gamma, "focal loss gamma"),
      ATAM_DOUBLE("loss.epsilon", train.loss.epsilon, "pseudo-label loss weight"),
      KeyDef{{"loss.class_weights", "class proportions, comma separated (empty: from the labels)"},
             [](RunConfig& c, const std::string& v) { c.train.loss.class_weights = doubles("loss.class_weights", v); },
             [](const RunConfig& c) { return join(c.train.loss.class_weights); }},

      ATAM_DOUBLE("sampler.threshold", sampler.confidence_threshold, "confidence threshold S for queries"),
      ATAM_SIZE("sampler.batch_size", sampler.batch_size, "samples per querying round N_t"),
      ATAM_SIZE("sampler.seed_size", sampler.seed_size, "seed samples N_0"),
      ATAM_SIZE("sampler.budget", sampler.budget.limit, "absolute label budget (0: use experiment.budget_fraction)"),
      KeyDef{{"sampler.mode", "salient or random"},
             [](RunConfig& c, const std::string& v) { c.sampler.mode = parse_sampling_mode(trim(v)); },
             [](const RunConfig& c) { return std::string(sampling_mode_name(c.sampler.mode)); }},
      ATAM_SIZE("sampler.seed", sampler.seed, "random-sampling seed"),
      ATAM_DOUBLE("sampler.adjacency_refresh", sampler.adjacency_refresh, "known-set growth that triggers a graph rebuild"),
      ATAM_BOOL("sampler.multi_pass", sampler.multi_pass, "revisit samples with unknown cells after a full pass"),

      KeyDef{{"annotator.kind", "oracle, noisy or human"},
             [](RunConfig& c, const std::string& v) { c.annotator.kind = parse_annotator_kind(trim(v)); },
             [](const RunConfig& c) { return std::string(annotator_kind_name(c.annotator.kind)); }},
      ATAM_DOUBLE("annotator.flip_rate", annotator.flip_rate, "probability an answer is inverted"),
      ATAM_DOUBLE("annotator.skip_rate", annotator.skip_rate, "probability a query is declined"),
      ATAM_SIZE("annotator.seed", annotator.seed, "annotator noise seed"),
      ATAM_SIZE("annotator.seed_negatives", annotator.seed_negatives, "negatives volunteered per seed answer"),

      KeyDef{{"experiment.seeds", "run seeds, comma separated"},
             [](RunConfig& c, const std::string& v) {
               c.experiment.seeds.clear();
               for (const auto& s : split_list(v)) c.experiment.seeds.push_back(to_u64("experiment.seeds", s));
               if (c.experiment.seeds.empty()) bad_value("experiment.seeds", v, "need at least one seed");
             },
             [](const RunConfig& c) { return join(c.experiment.seeds); }},
      ATAM_DOUBLE("experiment.budget_fraction", experiment.budget_fraction, "budget as a fraction of pool labels"),
      ATAM_DOUBLE("experiment.keep", experiment.keep, "kept fraction in the missing-label simulation"),
      KeyDef{{"experiment.fractions", "budget fractions for the proportion sweep"},
             [](RunConfig& c, const std::string& v) { c.experiment.fractions = doubles("experiment.fractions", v); },
             [](const RunConfig& c) { return join(c.experiment.fractions); }},
      ATAM_STRING("experiment.dataset", experiment.dataset, "manifest path (empty: generate from [synth])"),
      ATAM_SIZE("experiment.jobs", experiment.jobs, "seeds trained concurrently"),

      ATAM_STRING("service.host", service.host, "listen address"),
      KeyDef{{"service.port", "listen port"},
             [](RunConfig& c, const std::string& v) {
               const auto p = to_u64("service.port", v);
               if (p > 65535) bad_value("service.port", v, "port out of range");
               c.service.port = static_cast<int>(p);
             },
             [](const RunConfig& c) { return std::to_string(c.service.port); }},
      ATAM_STRING("service.state_dir", service.state_dir, "session persistence directory"),
      ATAM_STRING("service.data_root", service.data_root, "root for dataset references"),
  };
  return defs;
}

#undef ATAM_DOUBLE
#undef ATAM_SIZE
#undef ATAM_BOOL
#undef ATAM_STRING

const KeyDef& find_key(const std::string& key) {
  for (const auto& d : key_defs())
    if (d.key.name == key) return d;
  throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
}

void apply_tree(RunConfig& config, const boost::property_tree::ptree& tree) {
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw Error(ErrorCode::kConfig, "key '" + section + "' outside of a section");
    for (const auto& [key, value] : body) set_config_value(config, section + "." + key, value.data());
  }
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  c.model.frlm.backbone = Backbone::kMlpOnFeatures;
  // Desk-scale schedule: the loss is a class-weighted mean over cells, so
  // gradients are about C times smaller than a summed loss and the usual
  // 0.01 barely moves the small model.
  c.train.optimizer.learning_rate = 0.5;
  c.train.optimizer.decay_every = 100;
  c.train.max_epochs = 150;
  // At alpha 0.25 every arm under-recalls at the 0.5 decision threshold.
  c.train.loss.alpha_focal = 0.5;
  c.train.ulp.beta = 0.7;
  // Wide, weakly separated features so the number of labeled images matters.
  c.synth.feature_dim = 256;
  c.synth.separability = 4.0;
  return c;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& d : key_defs()) out.push_back(d.key);
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  find_key(key).set(config, value);
}

std::string get_config_value(const RunConfig& config, const std::string& key) {
  return find_key(key).get(config);
}

void apply_config_text(RunConfig& config, const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::kConfig, std::string("config parse error: ") + e.message() + " at line " +
                                        std::to_string(e.line()));
  }
  apply_tree(config, tree);
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error(ErrorCode::kConfig, "override '" + assignment + "' is not key=value");
  set_config_value(config, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
  config.model.seed = seed;
  config.train.seed = seed;
  config.sampler.seed = seed;
  config.annotator.seed = seed;
}

std::string canonical_config(const RunConfig& config) {
  std::string out;
  for (const auto& d : key_defs()) out += d.key.name + "=" + d.get(config) + "\n";
  return out;
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return content_hash(ss.str());
}

}  // namespace atam
