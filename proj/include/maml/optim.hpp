#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "maml/data.hpp"
#include "maml/loss.hpp"
#include "maml/model.hpp"
#include "maml/train_config.hpp"

namespace maml {

// Gradient tensors mirroring ModelParams. Embedding gradients are dense
// tables, but only the rows listed in touched_users / touched_items are ever
// non-zero.
struct Gradients {
  ModelParams d;
  std::vector<UserIndex> touched_users;
  std::vector<ItemIndex> touched_items;

  static Gradients zeros_like(const ModelParams& params);
  // Zeroes the touched rows and all network tensors.
  void clear();
};

struct GradientResult {
  LossBreakdown loss;
  // WARP weight used for each example.
  std::vector<double> weights;
};

// Exact gradients of the scaled objective w.r.t. every parameter. WARP
// weights are constants (taken from `frozen_weights` when given); the hinge
// and ReLU use a zero subgradient at their kinks. Throws NumericalError
// naming the first non-finite gradient tensor.
GradientResult compute_gradients(const ModelParams& params, const FeatureStore& features, const Batch& batch,
                                 const TrainConfig& cfg, const ObjectiveScales& scales, Gradients& out,
                                 std::optional<std::span<const double>> frozen_weights = std::nullopt);
Gradients compute_gradients(const ModelParams& params, const FeatureStore& features, const Batch& batch,
                            const TrainConfig& cfg);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  Matrix m_users, v_users;
  Matrix m_items, v_items;
  std::vector<Vector> m_net, v_net;

  static AdamState for_params(const ModelParams& params, const TrainConfig& cfg);
};

// One bias-corrected Adam update. Network tensors are updated densely;
// embedding rows only where touched, after which those rows are projected
// back onto the unit ball.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double learning_rate);

// v if ||v|| <= 1, else v / ||v||.
Vector project_unit_ball(const Vector& v);

struct TrainingHistory {
  std::vector<LossBreakdown> epochs;
  std::size_t steps = 0;
};

struct TrainHooks {
  // After every optimizer step.
  std::function<void(const ModelParams&)> on_step;
  // After every epoch, with that epoch's summed loss.
  std::function<void(std::size_t epoch, const LossBreakdown&, const ModelParams&)> on_epoch;
  // Every cfg.checkpoint_every epochs and after the final epoch.
  std::function<void(std::size_t epoch, const ModelParams&)> on_checkpoint;
};

struct TrainResult {
  ModelParams params;
  TrainingHistory history;
};

// Deterministic for a given rng state. The rng is consumed by parameter
// initialisation, then per epoch by the positive shuffle and the negative
// sampler.
TrainResult train(const SplitPair& split, const FeatureStore& features, const TrainConfig& cfg, Rng& rng,
                  const TrainHooks& hooks = {});
TrainResult train(const SplitPair& split, const FeatureStore& features, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

// Standalone collaborative metric learning trainer (plain Euclidean
// distance, WARP hinge, covariance term, unit ball). It consumes the rng
// exactly like train() and serves as the reference the attention-off path
// must reproduce.
TrainResult train_cml_reference(const SplitPair& split, const FeatureStore& features, const TrainConfig& cfg,
                                Rng& rng, const TrainHooks& hooks = {});

// Shared sampling helpers used by both trainers.
std::vector<Interaction> shuffled_positives(const InteractionDataset& train, Rng& rng);
Batch make_batch(const InteractionDataset& train, std::span<const Interaction> positives, std::size_t neg_samples,
                 Rng& rng);

}  // namespace maml
