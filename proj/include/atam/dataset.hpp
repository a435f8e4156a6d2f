#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "atam/labels.hpp"
#include "atam/matrix.hpp"

namespace atam {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct SampleRecord {
  std::string id;
  // "<path>#<row>" into a dense feature file, path relative to the manifest.
  std::string feature_ref;
  Split split = Split::kTrain;
  // Dense +1/-1 ground truth of length C; empty when not available.
  std::vector<int> labels;
};

struct DatasetManifest {
  std::vector<std::string> categories;
  std::vector<SampleRecord> samples;
};

inline constexpr const char* kManifestFormat = "ATAM-MANIFEST v1";

// Line-delimited JSON: a header record with the category list followed by
// one record per sample.
void write_manifest(std::ostream& out, const DatasetManifest& manifest);
DatasetManifest read_manifest(std::istream& in);

// Dense feature file: 8-byte magic "ATAMFEAT", u32 version, 4-byte dtype tag
// ("f64\0"), u64 rows, u64 cols, then row-major little-endian doubles.
void write_features(const std::filesystem::path& path, const Matrix& features);
Matrix read_features(const std::filesystem::path& path);

// Manifest plus the feature rows it references, aligned with manifest order.
struct Dataset {
  DatasetManifest manifest;
  Matrix features;
  std::filesystem::path source;

  std::size_t size() const { return manifest.samples.size(); }
  std::size_t categories() const { return manifest.categories.size(); }
  std::size_t feature_dim() const { return features.cols(); }

  std::vector<std::size_t> indices(Split split) const;
  Matrix features_of(const std::vector<std::size_t>& rows) const;
  // Ground truth of the given rows as a fully known label matrix.
  PartialLabelMatrix truth_of(const std::vector<std::size_t>& rows) const;
  std::vector<std::string> ids_of(const std::vector<std::size_t>& rows) const;
};

Dataset load_dataset(const std::filesystem::path& manifest_path);
// Writes `<dir>/manifest.jsonl` and `<dir>/features.bin`.
void save_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest,
                  const Matrix& features);

// A split view: features and truth for one split, with the row mapping back
// into the dataset.
struct SplitData {
  std::vector<std::size_t> rows;
  std::vector<std::string> ids;
  Matrix features;
  PartialLabelMatrix truth;
};

SplitData make_split(const Dataset& dataset, Split split);

}  // namespace atam
