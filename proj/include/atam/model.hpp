#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atam/matrix.hpp"

namespace atam {

enum class Backbone { kSmallConv, kMlpOnFeatures, kExternal };
enum class EmbeddingSource { kFile, kSeededRandom, kOneHotProjected };
// Which co-occurrence weights the GCN propagates over: raw pair counts or
// pair frequencies (counts divided by the labeled sample count).
enum class Propagation { kCounts, kFrequencies };

const char* backbone_name(Backbone b);
Backbone parse_backbone(const std::string& s);
const char* embedding_source_name(EmbeddingSource e);
EmbeddingSource parse_embedding_source(const std::string& s);
const char* propagation_name(Propagation p);
Propagation parse_propagation(const std::string& s);

// Feature branch and FC head. EXTERNAL uses input features as-is
// (feature_dim is forced to input_dim); MLP_ON_FEATURES maps them through
// one FC + LeakyReLU; SMALL_CONV treats the input as an image_side^2 gray
// image, runs a 3x3 valid convolution with conv_filters maps, LeakyReLU and
// global average pooling, then one FC + LeakyReLU.
struct FrlmConfig {
  Backbone backbone = Backbone::kMlpOnFeatures;
  std::size_t input_dim = 0;
  std::size_t feature_dim = 128;
  std::size_t head_hidden = 64;
  std::size_t embed_dim = 64;
  std::size_t image_side = 0;
  std::size_t conv_filters = 8;

  bool operator==(const FrlmConfig&) const = default;
};

struct GcnConfig {
  // dims[0] is the category-embedding width, dims.back() must equal the
  // head output width.
  std::vector<std::size_t> dims{32, 64, 64};
  double slope = 0.2;
  EmbeddingSource source = EmbeddingSource::kSeededRandom;
  std::string embedding_file;
  // With raw counts the normalized matrix is close to rank one once every
  // pair co-occurs a few times, which makes all node representations
  // parallel. Frequencies keep the self loop comparable to the edges.
  Propagation propagation = Propagation::kFrequencies;

  bool operator==(const GcnConfig&) const = default;
};

struct ModelConfig {
  FrlmConfig frlm;
  GcnConfig gcn;
  std::size_t categories = 0;
  std::uint64_t seed = 1;

  bool operator==(const ModelConfig&) const = default;
};

// Named trainable tensors. Gradients use a ParamSet of identical layout.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Matrix> tensors;

  void add(std::string name, Matrix m) {
    names.push_back(std::move(name));
    tensors.push_back(std::move(m));
  }
  std::size_t size() const { return tensors.size(); }
  std::size_t index_of(std::string_view name) const;
  Matrix& at(std::string_view name) { return tensors[index_of(name)]; }
  const Matrix& at(std::string_view name) const { return tensors[index_of(name)]; }
  bool contains(std::string_view name) const;

  ParamSet zeros_like() const;
  bool all_finite() const;
  std::size_t scalar_count() const;
  bool operator==(const ParamSet&) const = default;
};

class MllModel {
 public:
  MllModel() = default;
  // Initializes parameters and category embeddings from config.seed.
  // `category_names` is only needed for EmbeddingSource::kFile.
  explicit MllModel(ModelConfig config, const std::vector<std::string>& category_names = {});
  // Reassembles a model from stored tensors (checkpoint loading).
  static MllModel from_parts(ModelConfig config, ParamSet params, Matrix embeddings,
                             Matrix adjacency);

  const ModelConfig& config() const { return config_; }
  std::size_t categories() const { return config_.categories; }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const Matrix& embeddings() const { return embeddings_; }
  void set_embeddings(Matrix e);
  const Matrix& adjacency() const { return adjacency_; }
  void set_adjacency(Matrix a);

  bool operator==(const MllModel&) const = default;

 private:
  ModelConfig config_;
  ParamSet params_;
  Matrix embeddings_;
  Matrix adjacency_;
};

// Checks config consistency; throws kConfig on violation.
void validate_model_config(const ModelConfig& config);

// H^{l+1} = LeakyReLU(Â H^l W^l) for every layer. Throws kInvalidArgument
// naming the offending layer when dims do not chain.
Matrix gcn_forward(const Matrix& embeddings, const Matrix& adjacency,
                   const std::vector<const Matrix*>& weights, double slope);

// Activations kept for the backward pass.
struct ForwardCache {
  Matrix input;
  // SMALL_CONV only: per-sample pooled conv features (B x K).
  Matrix conv_pooled;
  Matrix frlm_pre, frlm_out;
  Matrix head1_pre, head1_out;
  Matrix features;  // B x d_e, head output
  std::vector<Matrix> gcn_in, gcn_propagated, gcn_pre;
  Matrix node_repr;  // C x d_e, GCN output
  Matrix logits;     // B x C
};

ForwardCache forward(const MllModel& model, const Matrix& batch);
// Accumulates into `grads` (same layout as model.params()).
void backward(const MllModel& model, const ForwardCache& cache, const Matrix& dlogits,
              ParamSet& grads);

struct MllOutput {
  std::vector<double> logits;
  std::vector<double> probabilities;
};

// Single-sample forward; probabilities use the plain sigmoid.
MllOutput mll_forward(const MllModel& model, std::span<const double> features);

// Logits for every row of `features`. Throws kNumerical on non-finite output.
Matrix predict_logits(const MllModel& model, const Matrix& features);
Matrix predict_proba(const MllModel& model, const Matrix& features);

double sigmoid(double z);

}  // namespace atam
