#include "atam/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "atam/error.hpp"
#include "atam/kernels.hpp"

namespace atam {
namespace {

namespace k = kernels;

Matrix xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = dist(rng);
  return m;
}

void normalize_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double norm = 0.0;
    for (double v : m.row(r)) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& v : m.row(r)) v /= norm;
  }
}

Matrix load_embedding_file(const std::string& path, const std::vector<std::string>& names,
                           std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "embedding file not found: " + path);
  std::map<std::string, std::vector<double>> table;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string name;
    if (!(row >> name)) continue;
    std::vector<double> v;
    double x;
    while (row >> x) v.push_back(x);
    table[name] = std::move(v);
  }
  Matrix e(names.size(), dim);
  for (std::size_t c = 0; c < names.size(); ++c) {
    auto it = table.find(names[c]);
    if (it == table.end()) throw Error(ErrorCode::kConfig, "no embedding for category " + names[c]);
    if (it->second.size() != dim)
      throw Error(ErrorCode::kConfig, "embedding width for " + names[c] + " != gcn dims[0]");
    std::copy(it->second.begin(), it->second.end(), e.row(c).begin());
  }
  return e;
}

void linear(const Matrix& x, const Matrix& w, const Matrix& b, Matrix& out) {
  k::matmul_nt(x, w, out);
  k::add_row_bias(out, b.flat());
}

void accumulate(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.flat()[i] += src.flat()[i];
}

// Gradients of y = x W^T + b: adds dW, db into grads, returns dx if wanted.
void linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Matrix& db,
                     Matrix* dx) {
  Matrix tmp;
  k::matmul_tn(dy, x, tmp);
  accumulate(dw, tmp);
  std::vector<double> sums(dy.cols());
  k::column_sums(dy, sums);
  for (std::size_t c = 0; c < sums.size(); ++c) db.flat()[c] += sums[c];
  if (dx) k::matmul(dy, w, *dx);
}

std::size_t conv_out_side(const FrlmConfig& f) { return f.image_side - 2; }

// im2col for one sample: (positions x 9)
Matrix conv_patches(std::span<const double> image, std::size_t side) {
  const std::size_t o = side - 2;
  Matrix p(o * o, 9);
  for (std::size_t r = 0; r < o; ++r)
    for (std::size_t c = 0; c < o; ++c)
      for (std::size_t dr = 0; dr < 3; ++dr)
        for (std::size_t dc = 0; dc < 3; ++dc)
          p(r * o + c, dr * 3 + dc) = image[(r + dr) * side + c + dc];
  return p;
}

std::vector<const Matrix*> gcn_weights(const MllModel& model) {
  std::vector<const Matrix*> w;
  for (std::size_t l = 0; l + 1 < model.config().gcn.dims.size(); ++l)
    w.push_back(&model.params().at("gcn." + std::to_string(l) + ".w"));
  return w;
}

}  // namespace

const char* backbone_name(Backbone b) {
  switch (b) {
    case Backbone::kSmallConv: return "small_conv";
    case Backbone::kMlpOnFeatures: return "mlp_on_features";
    case Backbone::kExternal: return "external";
  }
  return "?";
}

Backbone parse_backbone(const std::string& s) {
  if (s == "small_conv") return Backbone::kSmallConv;
  if (s == "mlp_on_features") return Backbone::kMlpOnFeatures;
  if (s == "external") return Backbone::kExternal;
  throw Error(ErrorCode::kConfig, "unknown backbone '" + s + "'");
}

const char* embedding_source_name(EmbeddingSource e) {
  switch (e) {
    case EmbeddingSource::kFile: return "file";
    case EmbeddingSource::kSeededRandom: return "seeded_random";
    case EmbeddingSource::kOneHotProjected: return "one_hot_projected";
  }
  return "?";
}

const char* propagation_name(Propagation p) {
  return p == Propagation::kCounts ? "counts" : "frequencies";
}

Propagation parse_propagation(const std::string& s) {
  if (s == "counts") return Propagation::kCounts;
  if (s == "frequencies") return Propagation::kFrequencies;
  throw Error(ErrorCode::kConfig, "unknown propagation '" + s + "'");
}

EmbeddingSource parse_embedding_source(const std::string& s) {
  if (s == "file") return EmbeddingSource::kFile;
  if (s == "seeded_random") return EmbeddingSource::kSeededRandom;
  if (s == "one_hot_projected") return EmbeddingSource::kOneHotProjected;
  throw Error(ErrorCode::kConfig, "unknown embedding source '" + s + "'");
}

std::size_t ParamSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw Error(ErrorCode::kNotFound, "no parameter named " + std::string(name));
}

bool ParamSet::contains(std::string_view name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (std::size_t i = 0; i < tensors.size(); ++i)
    out.add(names[i], Matrix(tensors[i].rows(), tensors[i].cols()));
  return out;
}

bool ParamSet::all_finite() const {
  for (const auto& t : tensors)
    for (double v : t.flat())
      if (!std::isfinite(v)) return false;
  return true;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

void validate_model_config(const ModelConfig& c) {
  if (c.categories == 0) throw Error(ErrorCode::kConfig, "model needs at least one category");
  if (c.frlm.input_dim == 0) throw Error(ErrorCode::kConfig, "frlm.input_dim must be positive");
  if (c.gcn.dims.size() < 2) throw Error(ErrorCode::kConfig, "gcn needs at least one layer");
  for (std::size_t d : c.gcn.dims)
    if (d == 0) throw Error(ErrorCode::kConfig, "gcn dims must be positive");
  if (c.gcn.dims.back() != c.frlm.embed_dim)
    throw Error(ErrorCode::kConfig, "gcn output dim must equal frlm.embed_dim");
  if (c.frlm.head_hidden == 0 || c.frlm.embed_dim == 0)
    throw Error(ErrorCode::kConfig, "head dims must be positive");
  if (c.frlm.backbone == Backbone::kSmallConv) {
    if (c.frlm.image_side < 3 || c.frlm.image_side * c.frlm.image_side != c.frlm.input_dim)
      throw Error(ErrorCode::kConfig, "small_conv needs input_dim == image_side^2 with side >= 3");
    if (c.frlm.conv_filters == 0) throw Error(ErrorCode::kConfig, "conv_filters must be positive");
  }
  if (c.frlm.backbone != Backbone::kExternal && c.frlm.feature_dim == 0)
    throw Error(ErrorCode::kConfig, "frlm.feature_dim must be positive");
  if (!(c.gcn.slope >= 0.0 && c.gcn.slope < 1.0))
    throw Error(ErrorCode::kConfig, "leaky relu slope must be in [0, 1)");
}

MllModel::MllModel(ModelConfig config, const std::vector<std::string>& category_names)
    : config_(std::move(config)) {
  if (config_.frlm.backbone == Backbone::kExternal) config_.frlm.feature_dim = config_.frlm.input_dim;
  validate_model_config(config_);
  std::mt19937_64 rng(config_.seed);
  const auto& f = config_.frlm;
  switch (f.backbone) {
    case Backbone::kSmallConv:
      params_.add("conv.w", xavier(f.conv_filters, 9, rng));
      params_.add("conv.b", Matrix(1, f.conv_filters));
      params_.add("frlm.w", xavier(f.feature_dim, f.conv_filters, rng));
      params_.add("frlm.b", Matrix(1, f.feature_dim));
      break;
    case Backbone::kMlpOnFeatures:
      params_.add("frlm.w", xavier(f.feature_dim, f.input_dim, rng));
      params_.add("frlm.b", Matrix(1, f.feature_dim));
      break;
    case Backbone::kExternal:
      break;
  }
  params_.add("head1.w", xavier(f.head_hidden, f.feature_dim, rng));
  params_.add("head1.b", Matrix(1, f.head_hidden));
  params_.add("head2.w", xavier(f.embed_dim, f.head_hidden, rng));
  params_.add("head2.b", Matrix(1, f.embed_dim));
  const auto& dims = config_.gcn.dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    params_.add("gcn." + std::to_string(l) + ".w", xavier(dims[l], dims[l + 1], rng));

  const std::size_t n_cat = config_.categories;
  switch (config_.gcn.source) {
    case EmbeddingSource::kFile:
      if (category_names.size() != n_cat)
        throw Error(ErrorCode::kConfig, "file embeddings need the category names");
      embeddings_ = load_embedding_file(config_.gcn.embedding_file, category_names, dims[0]);
      break;
    case EmbeddingSource::kSeededRandom: {
      std::normal_distribution<double> normal(0.0, 1.0);
      embeddings_ = Matrix(n_cat, dims[0]);
      for (double& v : embeddings_.flat()) v = normal(rng);
      normalize_rows(embeddings_);
      break;
    }
    case EmbeddingSource::kOneHotProjected:
      if (dims[0] == n_cat) {
        embeddings_ = Matrix::identity(n_cat);
      } else {
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dims[0])));
        embeddings_ = Matrix(n_cat, dims[0]);
        for (double& v : embeddings_.flat()) v = normal(rng);
      }
      break;
  }
  adjacency_ = Matrix::identity(n_cat);
}

MllModel MllModel::from_parts(ModelConfig config, ParamSet params, Matrix embeddings,
                              Matrix adjacency) {
  validate_model_config(config);
  ModelConfig shape = config;
  shape.gcn.source = EmbeddingSource::kSeededRandom;
  MllModel m(shape);
  if (params.names != m.params_.names)
    throw Error(ErrorCode::kInvalidArgument, "parameter layout does not match the config");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params.tensors[i].same_shape(m.params_.tensors[i]))
      throw Error(ErrorCode::kInvalidArgument, "parameter " + params.names[i] + " has the wrong shape");
  m.config_ = std::move(config);
  m.params_ = std::move(params);
  m.set_embeddings(std::move(embeddings));
  m.set_adjacency(std::move(adjacency));
  return m;
}

void MllModel::set_embeddings(Matrix e) {
  if (e.rows() != config_.categories || e.cols() != config_.gcn.dims[0])
    throw Error(ErrorCode::kInvalidArgument, "embedding table shape mismatch");
  embeddings_ = std::move(e);
}

void MllModel::set_adjacency(Matrix a) {
  if (a.rows() != config_.categories || a.cols() != config_.categories)
    throw Error(ErrorCode::kInvalidArgument, "adjacency must be C x C");
  adjacency_ = std::move(a);
}

Matrix gcn_forward(const Matrix& embeddings, const Matrix& adjacency,
                   const std::vector<const Matrix*>& weights, double slope) {
  if (adjacency.rows() != embeddings.rows() || adjacency.cols() != embeddings.rows())
    throw Error(ErrorCode::kInvalidArgument, "adjacency does not match the embedding rows");
  Matrix h = embeddings, propagated, pre;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l]->rows() != h.cols())
      throw Error(ErrorCode::kInvalidArgument,
                  "gcn layer " + std::to_string(l) + ": weight rows " +
                      std::to_string(weights[l]->rows()) + " != input width " + std::to_string(h.cols()));
    k::matmul(adjacency, h, propagated);
    k::matmul(propagated, *weights[l], pre);
    k::leaky_relu(pre, slope, h);
  }
  return h;
}

ForwardCache forward(const MllModel& model, const Matrix& batch) {
  const auto& cfg = model.config();
  const auto& f = cfg.frlm;
  const auto& p = model.params();
  const double slope = cfg.gcn.slope;
  if (batch.cols() != f.input_dim)
    throw Error(ErrorCode::kInvalidArgument, "feature width " + std::to_string(batch.cols()) +
                                                 " != model input_dim " + std::to_string(f.input_dim));
  ForwardCache c;
  c.input = batch;
  const Matrix* frlm_in = &c.input;
  if (f.backbone == Backbone::kSmallConv) {
    const Matrix& wc = p.at("conv.w");
    const Matrix& bc = p.at("conv.b");
    const std::size_t npos = conv_out_side(f) * conv_out_side(f);
    c.conv_pooled = Matrix(batch.rows(), f.conv_filters);
    Matrix pre, act;
    for (std::size_t i = 0; i < batch.rows(); ++i) {
      const Matrix patches = conv_patches(batch.row(i), f.image_side);
      linear(patches, wc, bc, pre);
      k::leaky_relu(pre, slope, act);
      std::vector<double> sums(f.conv_filters);
      k::column_sums(act, sums);
      for (std::size_t q = 0; q < f.conv_filters; ++q)
        c.conv_pooled(i, q) = sums[q] / static_cast<double>(npos);
    }
    frlm_in = &c.conv_pooled;
  }
  if (f.backbone == Backbone::kExternal) {
    c.frlm_out = c.input;
  } else {
    linear(*frlm_in, p.at("frlm.w"), p.at("frlm.b"), c.frlm_pre);
    k::leaky_relu(c.frlm_pre, slope, c.frlm_out);
  }
  linear(c.frlm_out, p.at("head1.w"), p.at("head1.b"), c.head1_pre);
  k::leaky_relu(c.head1_pre, slope, c.head1_out);
  linear(c.head1_out, p.at("head2.w"), p.at("head2.b"), c.features);

  const auto weights = gcn_weights(model);
  const Matrix& adj = model.adjacency();
  Matrix h = model.embeddings();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    c.gcn_in.push_back(h);
    Matrix propagated, pre;
    k::matmul(adj, h, propagated);
    k::matmul(propagated, *weights[l], pre);
    k::leaky_relu(pre, slope, h);
    c.gcn_propagated.push_back(std::move(propagated));
    c.gcn_pre.push_back(std::move(pre));
  }
  c.node_repr = std::move(h);
  k::matmul_nt(c.features, c.node_repr, c.logits);
  return c;
}

void backward(const MllModel& model, const ForwardCache& c, const Matrix& dlogits, ParamSet& grads) {
  const auto& cfg = model.config();
  const auto& f = cfg.frlm;
  const auto& p = model.params();
  const double slope = cfg.gcn.slope;

  // Fusion: logits = F G^T.
  Matrix dfeat, dnode;
  k::matmul(dlogits, c.node_repr, dfeat);
  k::matmul_tn(dlogits, c.features, dnode);

  // GCN, last layer first.
  const auto weights = gcn_weights(model);
  Matrix dh = std::move(dnode);
  for (std::size_t l = weights.size(); l-- > 0;) {
    Matrix dpre = dh;
    k::leaky_relu_backward(c.gcn_pre[l], slope, dpre);
    Matrix dw;
    k::matmul_tn(c.gcn_propagated[l], dpre, dw);
    accumulate(grads.at("gcn." + std::to_string(l) + ".w"), dw);
    if (l > 0) {
      Matrix dprop;
      k::matmul_nt(dpre, *weights[l], dprop);
      k::matmul_tn(model.adjacency(), dprop, dh);
    }
  }

  // Head.
  Matrix dhead1;
  linear_backward(c.head1_out, p.at("head2.w"), dfeat, grads.at("head2.w"), grads.at("head2.b"),
                  &dhead1);
  k::leaky_relu_backward(c.head1_pre, slope, dhead1);
  Matrix dfrlm;
  const bool need_dfrlm = f.backbone != Backbone::kExternal;
  linear_backward(c.frlm_out, p.at("head1.w"), dhead1, grads.at("head1.w"), grads.at("head1.b"),
                  need_dfrlm ? &dfrlm : nullptr);
  if (!need_dfrlm) return;

  k::leaky_relu_backward(c.frlm_pre, slope, dfrlm);
  const bool conv = f.backbone == Backbone::kSmallConv;
  Matrix dpooled;
  linear_backward(conv ? c.conv_pooled : c.input, p.at("frlm.w"), dfrlm, grads.at("frlm.w"),
                  grads.at("frlm.b"), conv ? &dpooled : nullptr);
  if (!conv) return;

  const Matrix& wc = p.at("conv.w");
  const Matrix& bc = p.at("conv.b");
  Matrix& dwc = grads.at("conv.w");
  Matrix& dbc = grads.at("conv.b");
  const std::size_t npos = conv_out_side(f) * conv_out_side(f);
  Matrix pre;
  for (std::size_t i = 0; i < c.input.rows(); ++i) {
    const Matrix patches = conv_patches(c.input.row(i), f.image_side);
    linear(patches, wc, bc, pre);
    Matrix dpre(npos, f.conv_filters);
    for (std::size_t pos = 0; pos < npos; ++pos)
      for (std::size_t q = 0; q < f.conv_filters; ++q)
        dpre(pos, q) = dpooled(i, q) / static_cast<double>(npos);
    k::leaky_relu_backward(pre, slope, dpre);
    linear_backward(patches, wc, dpre, dwc, dbc, nullptr);
  }
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

MllOutput mll_forward(const MllModel& model, std::span<const double> features) {
  Matrix x(1, features.size());
  std::copy(features.begin(), features.end(), x.row(0).begin());
  const Matrix z = predict_logits(model, x);
  MllOutput out;
  out.logits.assign(z.row(0).begin(), z.row(0).end());
  out.probabilities.reserve(out.logits.size());
  for (double v : out.logits) out.probabilities.push_back(sigmoid(v));
  return out;
}

Matrix predict_logits(const MllModel& model, const Matrix& features) {
  ForwardCache c = forward(model, features);
  for (double v : c.logits.flat())
    if (!std::isfinite(v)) throw Error(ErrorCode::kNumerical, "non-finite logits in forward pass");
  return std::move(c.logits);
}

Matrix predict_proba(const MllModel& model, const Matrix& features) {
  Matrix z = predict_logits(model, features);
  for (double& v : z.flat()) v = sigmoid(v);
  return z;
}

}  // namespace atam
