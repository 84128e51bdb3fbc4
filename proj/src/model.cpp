#include "maml/model.hpp"

#include <algorithm>
#include <cmath>

#include "maml/errors.hpp"

namespace maml {

void TrainConfig::validate() const {
  if (dim == 0) throw InvalidInputError("embedding dimension must be positive");
  if (!(margin > 0.0)) throw InvalidInputError("margin must be positive");
  if (neg_samples < 1) throw InvalidInputError("need at least one negative sample");
  if (!(learning_rate > 0.0)) throw InvalidInputError("learning rate must be positive");
  if (batch_size < 1) throw InvalidInputError("batch size must be at least 1");
  if (alpha < 0.0) throw InvalidInputError("alpha must be non-negative");
  if (lambda_f < 0.0 || lambda_c < 0.0) throw InvalidInputError("loss weights must be non-negative");
  if (fusion_layers < 1) throw InvalidInputError("fusion network needs at least one layer");
}

namespace {

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

DenseLayer make_layer(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  return {uniform_matrix(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in), bound, rng),
          Vector::Zero(static_cast<Eigen::Index>(out))};
}

void project_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double n = m.row(r).norm();
    if (n > 1.0) m.row(r) /= n;
  }
}

void check_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string("non-finite value in attention ") + what);
}

}  // namespace

std::vector<TensorRef> network_tensors(AttentionParams& attention, FusionParams& fusion) {
  std::vector<TensorRef> out{{"attention.w1", span_of(attention.w1)},
                             {"attention.b1", span_of(attention.b1)},
                             {"attention.w2", span_of(attention.w2)},
                             {"attention.b2", span_of(attention.b2)},
                             {"attention.v", span_of(attention.v)}};
  for (std::size_t l = 0; l < fusion.layers.size(); ++l) {
    out.push_back({"fusion.w" + std::to_string(l + 1), span_of(fusion.layers[l].weight)});
    out.push_back({"fusion.b" + std::to_string(l + 1), span_of(fusion.layers[l].bias)});
  }
  return out;
}

std::vector<TensorRef> network_tensors(ModelParams& params) { return network_tensors(params.attention, params.fusion); }

std::vector<ConstTensorRef> network_tensors(const ModelParams& params) {
  auto& mutable_params = const_cast<ModelParams&>(params);
  std::vector<ConstTensorRef> out;
  for (auto& t : network_tensors(mutable_params)) out.push_back({std::move(t.name), t.values});
  return out;
}

ModelParams init_params(const TrainConfig& cfg, const ModelDims& dims, Rng& rng) {
  cfg.validate();
  if (dims.num_users == 0 || dims.num_items == 0 || dims.text_dim == 0 || dims.visual_dim == 0)
    throw InvalidInputError("model dimensions must be positive");
  const std::size_t f = cfg.dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(f));

  ModelParams p;
  p.user_embeddings = uniform_matrix(static_cast<Eigen::Index>(dims.num_users), static_cast<Eigen::Index>(f), bound, rng);
  p.item_embeddings = uniform_matrix(static_cast<Eigen::Index>(dims.num_items), static_cast<Eigen::Index>(f), bound, rng);
  project_rows(p.user_embeddings);
  project_rows(p.item_embeddings);

  const std::size_t h1 = cfg.resolved_hidden1(), h2 = cfg.resolved_hidden2();
  auto l1 = make_layer(3 * f, h1, rng);
  auto l2 = make_layer(h1, h2, rng);
  auto lv = make_layer(h2, f, rng);
  p.attention = {std::move(l1.weight), std::move(l1.bias), std::move(l2.weight), std::move(l2.bias),
                 std::move(lv.weight)};

  const std::size_t input = dims.text_dim + dims.visual_dim;
  const std::size_t hidden = cfg.resolved_fusion_hidden(input);
  std::size_t in = input;
  for (std::size_t l = 0; l < cfg.fusion_layers; ++l) {
    std::size_t out = (l + 1 == cfg.fusion_layers) ? f : hidden;
    p.fusion.layers.push_back(make_layer(in, out, rng));
    in = out;
  }
  p.alpha = cfg.resolved_alpha();
  p.text_dim = dims.text_dim;
  p.visual_dim = dims.visual_dim;
  p.attention_enabled = cfg.attention_enabled;
  return p;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z;
  z.user_embeddings = Matrix::Zero(params.user_embeddings.rows(), params.user_embeddings.cols());
  z.item_embeddings = Matrix::Zero(params.item_embeddings.rows(), params.item_embeddings.cols());
  const auto& a = params.attention;
  z.attention = {Matrix::Zero(a.w1.rows(), a.w1.cols()), Vector::Zero(a.b1.size()),
                 Matrix::Zero(a.w2.rows(), a.w2.cols()), Vector::Zero(a.b2.size()),
                 Matrix::Zero(a.v.rows(), a.v.cols())};
  for (const auto& layer : params.fusion.layers)
    z.fusion.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())});
  z.alpha = params.alpha;
  z.text_dim = params.text_dim;
  z.visual_dim = params.visual_dim;
  z.attention_enabled = params.attention_enabled;
  return z;
}

FusionTrace fuse_features_traced(const Vector& input, const FusionParams& fusion) {
  if (fusion.layers.empty() || static_cast<std::size_t>(input.size()) != fusion.input_dim())
    throw InvalidInputError("feature vector does not match fusion input dimension");
  FusionTrace t;
  Vector z = input;
  for (const auto& layer : fusion.layers) {
    t.inputs.push_back(z);
    Vector pre = layer.weight * z + layer.bias;
    z = pre.cwiseMax(0.0);
    t.pre.push_back(std::move(pre));
  }
  t.output = std::move(z);
  return t;
}

Vector fuse_features(const Vector& text, const Vector& visual, const FusionParams& fusion) {
  Vector input(text.size() + visual.size());
  input << text, visual;
  return fuse_features_traced(input, fusion).output;
}

Vector scaled_softmax(const Vector& logits, double alpha) {
  Vector e = (logits.array() - logits.maxCoeff()).exp();
  return alpha * e / e.sum();
}

AttentionTrace attention_forward_traced(const Vector& p, const Vector& q, const Vector& fused,
                                        const AttentionParams& ap, double alpha) {
  const auto f = p.size();
  if (q.size() != f || fused.size() != f || ap.w1.cols() != 3 * f || ap.v.rows() != f)
    throw InvalidInputError("attention input dimensions are inconsistent");
  AttentionTrace t;
  t.input.resize(3 * f);
  t.input << p, q, fused;
  check_finite(t.input, "input");
  t.hidden = (ap.w1 * t.input + ap.b1).array().tanh();
  t.pre2 = ap.w2 * t.hidden + ap.b2;
  t.relu2 = t.pre2.cwiseMax(0.0);
  t.logits = ap.v * t.relu2;
  check_finite(t.logits, "logits");
  t.weights = scaled_softmax(t.logits, alpha);
  check_finite(t.weights, "weights");
  return t;
}

Vector attention_forward(const Vector& p, const Vector& q, const Vector& fused, const AttentionParams& ap,
                         double alpha) {
  return attention_forward_traced(p, q, fused, ap, alpha).weights;
}

double weighted_distance(const Vector& p, const Vector& q, const Vector& a) {
  if (p.size() != q.size() || p.size() != a.size()) throw InvalidInputError("distance operands differ in size");
  return (a.array() * (p - q).array()).matrix().norm();
}

double cml_distance(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw InvalidInputError("distance operands differ in size");
  return (p - q).norm();
}

FusedFeatureCache::FusedFeatureCache(const ModelParams& params, const FeatureStore& features)
    : params_(params), features_(features), rows_(features.num_items()), ready_(features.num_items(), 0) {}

const Vector& FusedFeatureCache::operator()(ItemIndex i) const {
  if (!ready_.at(i)) {
    rows_[i] = fuse_features_traced(features_.concatenated(i), params_.fusion).output;
    ready_[i] = 1;
  }
  return rows_[i];
}

void FusedFeatureCache::fill() const {
  for (std::size_t i = 0; i < rows_.size(); ++i) (*this)(static_cast<ItemIndex>(i));
}

Vector attention_weights(const ModelParams& params, const FusedFeatureCache& fused, UserIndex u, ItemIndex i) {
  const Vector p = params.user_embeddings.row(u).transpose();
  const Vector q = params.item_embeddings.row(i).transpose();
  if (!params.attention_enabled) return Vector::Ones(p.size());
  return attention_forward(p, q, fused(i), params.attention, params.alpha);
}

double distance_sq(const ModelParams& params, const FusedFeatureCache& fused, UserIndex u, ItemIndex i) {
  const Vector p = params.user_embeddings.row(u).transpose();
  const Vector q = params.item_embeddings.row(i).transpose();
  if (!params.attention_enabled) return (p - q).squaredNorm();
  const Vector a = attention_forward(p, q, fused(i), params.attention, params.alpha);
  return (a.array() * (p - q).array()).matrix().squaredNorm();
}

double distance(const ModelParams& params, const FusedFeatureCache& fused, UserIndex u, ItemIndex i) {
  return std::sqrt(distance_sq(params, fused, u, i));
}

std::vector<ScoredItem> score_all_items(const ModelParams& params, const FusedFeatureCache& fused, UserIndex u,
                                        std::span<const ItemIndex> exclude) {
  std::vector<ScoredItem> out;
  out.reserve(params.num_items());
  for (std::size_t i = 0; i < params.num_items(); ++i) {
    auto item = static_cast<ItemIndex>(i);
    if (std::binary_search(exclude.begin(), exclude.end(), item)) continue;
    out.push_back({item, distance(params, fused, u, item)});
  }
  std::sort(out.begin(), out.end(), [](const ScoredItem& a, const ScoredItem& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.item < b.item;
  });
  return out;
}

std::vector<ScoredItem> score_all_items(const ModelParams& params, const FeatureStore& features, UserIndex u,
                                        std::span<const ItemIndex> exclude) {
  FusedFeatureCache cache(params, features);
  return score_all_items(params, cache, u, exclude);
}

}  // namespace maml
