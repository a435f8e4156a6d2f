#include "atam/dataset.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include <json.hpp>

#include "atam/error.hpp"

namespace atam {
namespace {

using nlohmann::json;

constexpr char kFeatureMagic[8] = {'A', 'T', 'A', 'M', 'F', 'E', 'A', 'T'};
constexpr char kDtypeF64[4] = {'f', '6', '4', '\0'};

static_assert(std::endian::native == std::endian::little,
              "feature files are little-endian; add byte swapping for this target");

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::kIo, "truncated feature file");
  return v;
}

std::pair<std::string, std::size_t> split_ref(const std::string& ref) {
  const auto hash = ref.rfind('#');
  if (hash == std::string::npos)
    throw Error(ErrorCode::kIo, "feature reference '" + ref + "' lacks a #row suffix");
  return {ref.substr(0, hash), static_cast<std::size_t>(std::stoull(ref.substr(hash + 1)))};
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw Error(ErrorCode::kInvalidArgument, "unknown split '" + s + "'");
}

void write_manifest(std::ostream& out, const DatasetManifest& manifest) {
  json header = {{"record", "header"},
                 {"format", kManifestFormat},
                 {"categories", manifest.categories}};
  out << header.dump() << '\n';
  for (const auto& s : manifest.samples) {
    json rec = {{"record", "sample"},
                {"id", s.id},
                {"features", s.feature_ref},
                {"split", split_name(s.split)}};
    if (!s.labels.empty()) rec["labels"] = s.labels;
    out << rec.dump() << '\n';
  }
}

DatasetManifest read_manifest(std::istream& in) {
  DatasetManifest manifest;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kIo, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string kind = rec.value("record", "");
    if (kind == "header") {
      if (rec.value("format", "") != kManifestFormat)
        throw Error(ErrorCode::kIo, "unsupported manifest format");
      manifest.categories = rec.at("categories").get<std::vector<std::string>>();
      have_header = true;
    } else if (kind == "sample") {
      if (!have_header) throw Error(ErrorCode::kIo, "manifest sample before header");
      SampleRecord s;
      s.id = rec.at("id").get<std::string>();
      s.feature_ref = rec.at("features").get<std::string>();
      s.split = parse_split(rec.value("split", "train"));
      if (rec.contains("labels")) {
        s.labels = rec["labels"].get<std::vector<int>>();
        if (s.labels.size() != manifest.categories.size())
          throw Error(ErrorCode::kIo, "label vector length mismatch for sample " + s.id);
        for (int v : s.labels)
          if (v != 1 && v != -1) throw Error(ErrorCode::kIo, "labels must be dense +1/-1");
      }
      if (s.split != Split::kTrain && s.labels.empty())
        throw Error(ErrorCode::kIo, "evaluation sample " + s.id + " lacks ground truth");
      manifest.samples.push_back(std::move(s));
    } else {
      throw Error(ErrorCode::kIo, "unknown manifest record on line " + std::to_string(line_no));
    }
  }
  if (!have_header) throw Error(ErrorCode::kIo, "manifest has no header record");
  return manifest;
}

void write_features(const std::filesystem::path& path, const Matrix& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(kFeatureMagic, sizeof kFeatureMagic);
  write_pod<std::uint32_t>(out, 1);
  out.write(kDtypeF64, sizeof kDtypeF64);
  write_pod<std::uint64_t>(out, features.rows());
  write_pod<std::uint64_t>(out, features.cols());
  out.write(reinterpret_cast<const char*>(features.data()),
            static_cast<std::streamsize>(features.size() * sizeof(double)));
}

Matrix read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kFeatureMagic, sizeof magic) != 0)
    throw Error(ErrorCode::kIo, path.string() + " is not a feature file");
  if (read_pod<std::uint32_t>(in) != 1) throw Error(ErrorCode::kIo, "unsupported feature version");
  char dtype[4];
  in.read(dtype, sizeof dtype);
  if (!in || std::memcmp(dtype, kDtypeF64, sizeof dtype) != 0)
    throw Error(ErrorCode::kIo, "unsupported feature dtype");
  const auto rows = read_pod<std::uint64_t>(in);
  const auto cols = read_pod<std::uint64_t>(in);
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw Error(ErrorCode::kIo, "truncated feature file");
  return m;
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i)
    if (manifest.samples[i].split == split) out.push_back(i);
  return out;
}

Matrix Dataset::features_of(const std::vector<std::size_t>& rows) const {
  Matrix out(rows.size(), features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = features.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

PartialLabelMatrix Dataset::truth_of(const std::vector<std::size_t>& rows) const {
  PartialLabelMatrix out(rows.size(), categories());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& labels = manifest.samples[rows[r]].labels;
    if (labels.empty())
      throw Error(ErrorCode::kFailedPrecondition,
                  "sample " + manifest.samples[rows[r]].id + " has no ground truth");
    for (std::size_t c = 0; c < labels.size(); ++c)
      out.record(r, c, label_from_int(labels[c]), Provenance::kHumanOrOracle);
  }
  return out;
}

std::vector<std::string> Dataset::ids_of(const std::vector<std::size_t>& rows) const {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(manifest.samples[r].id);
  return out;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::kNotFound, "dataset manifest not found: " + manifest_path.string());
  Dataset ds;
  ds.source = manifest_path;
  ds.manifest = read_manifest(in);
  const auto base = manifest_path.parent_path();
  std::map<std::string, Matrix> files;
  std::size_t dim = 0;
  bool have_dim = false;
  std::vector<std::pair<const Matrix*, std::size_t>> refs;
  refs.reserve(ds.manifest.samples.size());
  for (const auto& s : ds.manifest.samples) {
    auto [file, row] = split_ref(s.feature_ref);
    auto it = files.find(file);
    if (it == files.end()) it = files.emplace(file, read_features(base / file)).first;
    const Matrix& m = it->second;
    if (row >= m.rows()) throw Error(ErrorCode::kIo, "feature row out of range for " + s.id);
    if (have_dim && m.cols() != dim) throw Error(ErrorCode::kIo, "feature dims differ across files");
    dim = m.cols();
    have_dim = true;
    refs.emplace_back(&m, row);
  }
  ds.features = Matrix(refs.size(), dim);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    auto src = refs[i].first->row(refs[i].second);
    std::copy(src.begin(), src.end(), ds.features.row(i).begin());
  }
  return ds;
}

void save_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest,
                  const Matrix& features) {
  std::filesystem::create_directories(dir);
  write_features(dir / "features.bin", features);
  std::ofstream out(dir / "manifest.jsonl", std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write manifest in " + dir.string());
  write_manifest(out, manifest);
}

SplitData make_split(const Dataset& dataset, Split split) {
  SplitData out;
  out.rows = dataset.indices(split);
  out.ids = dataset.ids_of(out.rows);
  out.features = dataset.features_of(out.rows);
  bool all_truth = true;
  for (std::size_t r : out.rows) all_truth = all_truth && !dataset.manifest.samples[r].labels.empty();
  out.truth = all_truth ? dataset.truth_of(out.rows)
                        : PartialLabelMatrix(out.rows.size(), dataset.categories());
  return out;
}

}  // namespace atam
