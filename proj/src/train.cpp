#include <algorithm>
#include <cmath>

#include "maml/errors.hpp"
#include "maml/optim.hpp"

namespace maml {

AdamState AdamState::for_params(const ModelParams& params, const TrainConfig& cfg) {
  AdamState s;
  s.beta1 = cfg.adam_beta1;
  s.beta2 = cfg.adam_beta2;
  s.epsilon = cfg.adam_epsilon;
  s.m_users = Matrix::Zero(params.user_embeddings.rows(), params.user_embeddings.cols());
  s.v_users = s.m_users;
  s.m_items = Matrix::Zero(params.item_embeddings.rows(), params.item_embeddings.cols());
  s.v_items = s.m_items;
  for (const auto& t : network_tensors(params)) {
    s.m_net.push_back(Vector::Zero(static_cast<Eigen::Index>(t.values.size())));
    s.v_net.push_back(Vector::Zero(static_cast<Eigen::Index>(t.values.size())));
  }
  return s;
}

Vector project_unit_ball(const Vector& v) {
  const double n = v.norm();
  return n > 1.0 ? Vector(v / n) : v;
}

namespace {

struct AdamCoefficients {
  double beta1, beta2, epsilon, step_size_1, step_size_2;

  // param -= lr * m_hat / (sqrt(v_hat) + eps)
  template <typename P, typename G, typename M>
  void apply(P&& param, const G& grad, M&& m, M&& v, double lr) const {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
    param.array() -= lr * (m.array() / step_size_1) / ((v.array() / step_size_2).sqrt() + epsilon);
  }
};

void project_row(Matrix& table, Eigen::Index row) {
  const double n = table.row(row).norm();
  if (n > 1.0) table.row(row) /= n;
}

}  // namespace

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double learning_rate) {
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const AdamCoefficients c{state.beta1, state.beta2, state.epsilon, 1.0 - std::pow(state.beta1, t),
                           1.0 - std::pow(state.beta2, t)};

  auto tensors = network_tensors(params);
  const auto grad_tensors = network_tensors(grads.d);
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    Eigen::Map<Vector> p(tensors[k].values.data(), static_cast<Eigen::Index>(tensors[k].values.size()));
    Eigen::Map<const Vector> g(grad_tensors[k].values.data(), static_cast<Eigen::Index>(grad_tensors[k].values.size()));
    c.apply(p, g, state.m_net[k], state.v_net[k], learning_rate);
  }

  for (UserIndex u : grads.touched_users) {
    const auto r = static_cast<Eigen::Index>(u);
    auto m = state.m_users.row(r);
    auto v = state.v_users.row(r);
    c.apply(params.user_embeddings.row(r), grads.d.user_embeddings.row(r), m, v, learning_rate);
    project_row(params.user_embeddings, r);
  }
  for (ItemIndex i : grads.touched_items) {
    const auto r = static_cast<Eigen::Index>(i);
    auto m = state.m_items.row(r);
    auto v = state.v_items.row(r);
    c.apply(params.item_embeddings.row(r), grads.d.item_embeddings.row(r), m, v, learning_rate);
    project_row(params.item_embeddings, r);
  }
}

std::vector<Interaction> shuffled_positives(const InteractionDataset& train, Rng& rng) {
  auto positives = train.positives();
  std::shuffle(positives.begin(), positives.end(), rng);
  return positives;
}

Batch make_batch(const InteractionDataset& train, std::span<const Interaction> positives, std::size_t neg_samples,
                 Rng& rng) {
  Batch batch;
  batch.reserve(positives.size());
  for (const auto& [u, i] : positives) batch.push_back({u, i, sample_negatives(train, u, neg_samples, rng)});
  return batch;
}

namespace {

void check_inputs(const SplitPair& split, const FeatureStore& features, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw EmptyDatasetError("training split is empty");
  if (features.num_items() != split.train.num_items())
    throw InvalidInputError("feature store covers " + std::to_string(features.num_items()) + " items, dataset has " +
                            std::to_string(split.train.num_items()));
}

}  // namespace

TrainResult train(const SplitPair& split, const FeatureStore& features, const TrainConfig& cfg, Rng& rng,
                  const TrainHooks& hooks) {
  check_inputs(split, features, cfg);
  const ModelDims dims{split.train.num_users(), split.train.num_items(), features.text_dim(), features.visual_dim()};
  TrainResult result{init_params(cfg, dims, rng), {}};
  auto& params = result.params;
  AdamState state = AdamState::for_params(params, cfg);
  Gradients grads = Gradients::zeros_like(params);
  const ObjectiveScales scales = ObjectiveScales::from(cfg);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = shuffled_positives(split.train, rng);
    LossBreakdown epoch_loss;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const Batch batch = make_batch(split.train, std::span(order).subspan(start, len), cfg.neg_samples, rng);
      epoch_loss += compute_gradients(params, features, batch, cfg, scales, grads).loss;
      adam_step(params, grads, state, cfg.learning_rate);
      ++result.history.steps;
      if (hooks.on_step) hooks.on_step(params);
    }
    result.history.epochs.push_back(epoch_loss);
    if (hooks.on_epoch) hooks.on_epoch(epoch, epoch_loss, params);
    if (hooks.on_checkpoint && (epoch == cfg.max_epochs || (cfg.checkpoint_every && epoch % cfg.checkpoint_every == 0)))
      hooks.on_checkpoint(epoch, params);
  }
  return result;
}

TrainResult train(const SplitPair& split, const FeatureStore& features, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  Rng rng(cfg.seed);
  return train(split, features, cfg, rng, hooks);
}

}  // namespace maml
