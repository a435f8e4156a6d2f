#include "atam/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "atam/error.hpp"

namespace atam {

using nlohmann::json;

json model_config_to_json(const ModelConfig& c) {
  return {
      {"categories", c.categories},
      {"seed", c.seed},
      {"frlm",
       {{"backbone", backbone_name(c.frlm.backbone)},
        {"input_dim", c.frlm.input_dim},
        {"feature_dim", c.frlm.feature_dim},
        {"head_hidden", c.frlm.head_hidden},
        {"embed_dim", c.frlm.embed_dim},
        {"image_side", c.frlm.image_side},
        {"conv_filters", c.frlm.conv_filters}}},
      {"gcn",
       {{"dims", c.gcn.dims},
        {"slope", c.gcn.slope},
        {"source", embedding_source_name(c.gcn.source)},
        {"embedding_file", c.gcn.embedding_file},
        {"propagation", propagation_name(c.gcn.propagation)}}},
  };
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.categories = j.at("categories").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& f = j.at("frlm");
  c.frlm.backbone = parse_backbone(f.at("backbone").get<std::string>());
  c.frlm.input_dim = f.at("input_dim").get<std::size_t>();
  c.frlm.feature_dim = f.at("feature_dim").get<std::size_t>();
  c.frlm.head_hidden = f.at("head_hidden").get<std::size_t>();
  c.frlm.embed_dim = f.at("embed_dim").get<std::size_t>();
  c.frlm.image_side = f.value("image_side", std::size_t{0});
  c.frlm.conv_filters = f.value("conv_filters", std::size_t{8});
  const auto& g = j.at("gcn");
  c.gcn.dims = g.at("dims").get<std::vector<std::size_t>>();
  c.gcn.slope = g.at("slope").get<double>();
  c.gcn.source = parse_embedding_source(g.at("source").get<std::string>());
  c.gcn.embedding_file = g.value("embedding_file", "");
  c.gcn.propagation = parse_propagation(g.value("propagation", "frequencies"));
  return c;
}

namespace {

void write_tensor(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix read_tensor(std::istream& in, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw Error(ErrorCode::kIo, "truncated checkpoint");
  return m;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const auto& model = ckpt.model;
  json tensors = json::array();
  const auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i)
    tensors.push_back({{"name", params.names[i]},
                       {"rows", params.tensors[i].rows()},
                       {"cols", params.tensors[i].cols()}});
  json header = {{"config", model_config_to_json(model.config())},
                 {"rng", ckpt.rng_state},
                 {"meta", ckpt.meta},
                 {"tensors", tensors}};
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  for (const auto& t : params.tensors) write_tensor(out, t);
  write_tensor(out, model.embeddings());
  write_tensor(out, model.adjacency());
  if (!out) throw Error(ErrorCode::kIo, "checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic)
    throw Error(ErrorCode::kIo, "missing ATAM-CKPT v1 header");
  if (!std::getline(in, line)) throw Error(ErrorCode::kIo, "truncated checkpoint");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kIo, std::string("bad checkpoint header: ") + e.what());
  }
  const ModelConfig config = model_config_from_json(header.at("config"));
  ParamSet params;
  for (const auto& entry : header.at("tensors")) {
    const auto rows = entry.at("rows").get<std::size_t>();
    const auto cols = entry.at("cols").get<std::size_t>();
    params.add(entry.at("name").get<std::string>(), read_tensor(in, rows, cols));
  }
  Matrix embeddings = read_tensor(in, config.categories, config.gcn.dims.front());
  Matrix adjacency = read_tensor(in, config.categories, config.categories);
  Checkpoint ckpt;
  try {
    ckpt.model = MllModel::from_parts(config, std::move(params), std::move(embeddings),
                                      std::move(adjacency));
  } catch (const Error& e) {
    throw Error(ErrorCode::kIo, std::string("checkpoint does not match its config: ") + e.what());
  }
  ckpt.rng_state = header.value("rng", "");
  ckpt.meta = header.value("meta", json::object());
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "checkpoint not found: " + path.string());
  return read_checkpoint(in);
}

}  // namespace atam
