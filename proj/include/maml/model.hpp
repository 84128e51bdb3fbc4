#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maml/data.hpp"
#include "maml/train_config.hpp"
#include "maml/types.hpp"

namespace maml {

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

// Two-layer attention network:
//   e = tanh(W1 [p; q; F_tv] + b1),  a_hat = V relu(W2 e + b2)
struct AttentionParams {
  Matrix w1;  // h1 x 3f
  Vector b1;
  Matrix w2;  // h2 x h1
  Vector b2;
  Matrix v;   // f x h2
};

// ReLU MLP mapping [F_t; F_v] to the fused f-dimensional item feature.
struct FusionParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols()); }
  std::size_t output_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows()); }
};

struct ModelParams {
  Matrix user_embeddings;  // |U| x f, rows p_u
  Matrix item_embeddings;  // |I| x f, rows q_i
  AttentionParams attention;
  FusionParams fusion;
  double alpha = 1.0;
  std::size_t text_dim = 0;
  std::size_t visual_dim = 0;
  // false means the plain Euclidean distance is used and the networks are idle.
  bool attention_enabled = true;

  std::size_t dim() const { return static_cast<std::size_t>(user_embeddings.cols()); }
  std::size_t num_users() const { return static_cast<std::size_t>(user_embeddings.rows()); }
  std::size_t num_items() const { return static_cast<std::size_t>(item_embeddings.rows()); }
};

// A named flat view over one parameter tensor.
struct TensorRef {
  std::string name;
  std::span<double> values;
};

struct ConstTensorRef {
  std::string name;
  std::span<const double> values;
};

// All network tensors (attention then fusion) in a fixed order. Embedding
// tables are excluded; they are handled row-wise.
std::vector<TensorRef> network_tensors(AttentionParams& attention, FusionParams& fusion);
std::vector<TensorRef> network_tensors(ModelParams& params);
std::vector<ConstTensorRef> network_tensors(const ModelParams& params);

struct ModelDims {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t text_dim = 0;
  std::size_t visual_dim = 0;
};

// Embeddings uniform in [-1/sqrt(f), 1/sqrt(f)] then projected to the unit
// ball; weights uniform in +-sqrt(6 / fan_in); biases zero.
ModelParams init_params(const TrainConfig& cfg, const ModelDims& dims, Rng& rng);

// Zero-valued tensors with the same shapes as `params`.
ModelParams zeros_like(const ModelParams& params);

// Fusion forward pass with per-layer activations kept for backprop.
struct FusionTrace {
  std::vector<Vector> inputs;  // inputs[l] is the input of layer l
  std::vector<Vector> pre;     // pre-activation of layer l
  Vector output;
};

Vector fuse_features(const Vector& text, const Vector& visual, const FusionParams& fusion);
FusionTrace fuse_features_traced(const Vector& input, const FusionParams& fusion);

struct AttentionTrace {
  Vector input;   // [p; q; F_tv]
  Vector hidden;  // e
  Vector pre2;    // W2 e + b2
  Vector relu2;
  Vector logits;  // a_hat
  Vector weights; // a
};

// a = alpha * softmax(V relu(W2 tanh(W1 [p; q; F] + b1) + b2)).
// Throws NumericalError if any intermediate is non-finite.
Vector attention_forward(const Vector& p, const Vector& q, const Vector& fused, const AttentionParams& ap,
                         double alpha);
AttentionTrace attention_forward_traced(const Vector& p, const Vector& q, const Vector& fused,
                                        const AttentionParams& ap, double alpha);

// alpha * softmax(logits), using a max shift for stability.
Vector scaled_softmax(const Vector& logits, double alpha);

// ||a . (p - q)||
double weighted_distance(const Vector& p, const Vector& q, const Vector& a);
// ||p - q||
double cml_distance(const Vector& p, const Vector& q);

// Fused features computed lazily per item for one parameter snapshot.
class FusedFeatureCache {
 public:
  FusedFeatureCache(const ModelParams& params, const FeatureStore& features);
  const Vector& operator()(ItemIndex i) const;
  // Computes every row up front.
  void fill() const;

 private:
  const ModelParams& params_;
  const FeatureStore& features_;
  mutable std::vector<Vector> rows_;
  mutable std::vector<char> ready_;
};

// Squared model distance d(u,i)^2, attentive or plain depending on the model.
double distance_sq(const ModelParams& params, const FusedFeatureCache& fused, UserIndex u, ItemIndex i);
double distance(const ModelParams& params, const FusedFeatureCache& fused, UserIndex u, ItemIndex i);
Vector attention_weights(const ModelParams& params, const FusedFeatureCache& fused, UserIndex u, ItemIndex i);

struct ScoredItem {
  ItemIndex item;
  double distance;
};

// Items not in `exclude` (sorted ascending), ordered by ascending distance
// with ties broken by item index.
std::vector<ScoredItem> score_all_items(const ModelParams& params, const FusedFeatureCache& fused, UserIndex u,
                                        std::span<const ItemIndex> exclude);
std::vector<ScoredItem> score_all_items(const ModelParams& params, const FeatureStore& features, UserIndex u,
                                        std::span<const ItemIndex> exclude);

}  // namespace maml
