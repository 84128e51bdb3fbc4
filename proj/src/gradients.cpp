#include <algorithm>
#include <cmath>
#include <string>

#include "maml/errors.hpp"
#include "maml/optim.hpp"

namespace maml {

Gradients Gradients::zeros_like(const ModelParams& params) {
  Gradients g;
  g.d = maml::zeros_like(params);
  return g;
}

void Gradients::clear() {
  for (UserIndex u : touched_users) d.user_embeddings.row(u).setZero();
  for (ItemIndex i : touched_items) d.item_embeddings.row(i).setZero();
  touched_users.clear();
  touched_items.clear();
  for (auto& t : network_tensors(d)) std::fill(t.values.begin(), t.values.end(), 0.0);
}

namespace {

template <typename T>
void add_unique(std::vector<T>& v, T x) {
  auto pos = std::lower_bound(v.begin(), v.end(), x);
  if (pos == v.end() || *pos != x) v.insert(pos, x);
}

// Forward state for one (u, item) distance.
struct PairForward {
  UserIndex user;
  ItemIndex item;
  Vector diff;  // p - q
  AttentionTrace attention;  // empty when attention is off
  double dist_sq = 0.0;
};

struct BatchContext {
  const ModelParams& params;
  const FeatureStore& features;
  Gradients& grads;
  // Fusion traces and accumulated dL/dF_tv for items seen in the batch.
  std::vector<ItemIndex> items;
  std::vector<FusionTrace> fusion;
  std::vector<Vector> fused_grad;

  std::size_t slot(ItemIndex i) {
    auto it = std::find(items.begin(), items.end(), i);
    if (it != items.end()) return static_cast<std::size_t>(it - items.begin());
    items.push_back(i);
    fusion.push_back(fuse_features_traced(features.concatenated(i), params.fusion));
    fused_grad.push_back(Vector::Zero(static_cast<Eigen::Index>(params.dim())));
    return items.size() - 1;
  }

  PairForward forward(UserIndex u, ItemIndex i) {
    PairForward pf{u, i, params.user_embeddings.row(u).transpose() - params.item_embeddings.row(i).transpose(), {}, 0.0};
    if (params.attention_enabled) {
      const auto& f = fusion[slot(i)].output;
      pf.attention = attention_forward_traced(params.user_embeddings.row(u).transpose(),
                                              params.item_embeddings.row(i).transpose(), f, params.attention,
                                              params.alpha);
      pf.dist_sq = (pf.attention.weights.array() * pf.diff.array()).square().sum();
    } else {
      pf.dist_sq = pf.diff.squaredNorm();
    }
    return pf;
  }

  // Accumulates coef * d(dist_sq)/d(params) for one pair.
  void backward(const PairForward& pf, double coef) {
    if (coef == 0.0) return;
    const auto f = static_cast<Eigen::Index>(params.dim());
    Vector g_p, g_q;
    if (!params.attention_enabled) {
      g_p = 2.0 * coef * pf.diff;
      g_q = -g_p;
    } else {
      const auto& t = pf.attention;
      const Vector& a = t.weights;
      g_p = 2.0 * coef * (a.array().square() * pf.diff.array()).matrix();
      g_q = -g_p;
      const Vector g_a = 2.0 * coef * (a.array() * pf.diff.array().square()).matrix();
      // a = alpha * softmax(logits)
      const double inner = g_a.dot(a) / params.alpha;
      const Vector g_logits = (a.array() * (g_a.array() - inner)).matrix();
      auto& ga = grads.d.attention;
      const auto& ap = params.attention;
      ga.v.noalias() += g_logits * t.relu2.transpose();
      const Vector g_pre2 = ((ap.v.transpose() * g_logits).array() * (t.pre2.array() > 0.0).cast<double>()).matrix();
      ga.w2.noalias() += g_pre2 * t.hidden.transpose();
      ga.b2 += g_pre2;
      const Vector g_pre1 = ((ap.w2.transpose() * g_pre2).array() * (1.0 - t.hidden.array().square())).matrix();
      ga.w1.noalias() += g_pre1 * t.input.transpose();
      ga.b1 += g_pre1;
      const Vector g_input = ap.w1.transpose() * g_pre1;
      g_p += g_input.segment(0, f);
      g_q += g_input.segment(f, f);
      fused_grad[slot(pf.item)] += g_input.segment(2 * f, f);
    }
    grads.d.user_embeddings.row(pf.user) += g_p.transpose();
    grads.d.item_embeddings.row(pf.item) += g_q.transpose();
  }

  void backward_fusion() {
    auto& layers = grads.d.fusion.layers;
    for (std::size_t s = 0; s < items.size(); ++s) {
      if (fused_grad[s].isZero(0.0)) continue;
      const auto& trace = fusion[s];
      Vector g = fused_grad[s];
      for (std::size_t l = params.fusion.layers.size(); l-- > 0;) {
        const Vector g_pre = (g.array() * (trace.pre[l].array() > 0.0).cast<double>()).matrix();
        layers[l].weight.noalias() += g_pre * trace.inputs[l].transpose();
        layers[l].bias += g_pre;
        if (l > 0) g = params.fusion.layers[l].weight.transpose() * g_pre;
      }
    }
  }
};

// d/dY of (1/N) * offdiag ||cov(Y)||^2, scaled.
Matrix covariance_gradient(const Matrix& rows, double scale) {
  const double n = static_cast<double>(rows.rows());
  const Matrix centered = rows.rowwise() - rows.colwise().mean();
  Matrix g = centered.transpose() * centered / n;
  g.diagonal().setZero();
  g *= 2.0 / n;
  return (2.0 * scale / n) * centered * g;
}

void check_finite(Gradients& g) {
  if (!g.d.user_embeddings.allFinite()) throw NumericalError("non-finite gradient in user_embeddings");
  if (!g.d.item_embeddings.allFinite()) throw NumericalError("non-finite gradient in item_embeddings");
  for (const auto& t : network_tensors(g.d))
    for (double x : t.values)
      if (!std::isfinite(x)) throw NumericalError("non-finite gradient in " + t.name);
}

}  // namespace

GradientResult compute_gradients(const ModelParams& params, const FeatureStore& features, const Batch& batch,
                                 const TrainConfig& cfg, const ObjectiveScales& scales, Gradients& out,
                                 std::optional<std::span<const double>> frozen_weights) {
  if (batch.empty()) throw InvalidInputError("cannot compute gradients of an empty batch");
  if (frozen_weights && frozen_weights->size() != batch.size())
    throw InvalidInputError("frozen weights must match the batch size");
  out.clear();
  BatchContext ctx{params, features, out, {}, {}, {}};
  GradientResult result;
  result.weights.reserve(batch.size());

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& ex = batch[b];
    if (ex.negatives.empty()) throw InvalidInputError("training example without negatives");
    add_unique(out.touched_users, ex.user);
    add_unique(out.touched_items, ex.item);
    const PairForward pos = ctx.forward(ex.user, ex.item);
    std::vector<PairForward> negs;
    negs.reserve(ex.negatives.size());
    std::size_t impostors = 0;
    double hinge_sum = 0.0;
    for (ItemIndex k : ex.negatives) {
      add_unique(out.touched_items, k);
      negs.push_back(ctx.forward(ex.user, k));
      const double h = hinge_term_sq(pos.dist_sq, negs.back().dist_sq, cfg.margin);
      if (h > 0.0) ++impostors;
      hinge_sum += h;
    }
    const double weight = frozen_weights
                              ? (*frozen_weights)[b]
                              : warp_weight(approximate_rank(params.num_items(), impostors, ex.negatives.size()));
    result.weights.push_back(weight);
    result.loss.l_m += weight * hinge_sum;

    const double coef = scales.ranking * weight;
    double pos_coef = 0.0;
    for (auto& neg : negs) {
      if (cfg.margin + pos.dist_sq - neg.dist_sq <= 0.0) continue;
      pos_coef += coef;
      ctx.backward(neg, -coef);
    }
    ctx.backward(pos, pos_coef);
  }

  if (params.attention_enabled || scales.feature != 0.0) {
    for (ItemIndex i : distinct_positive_items(batch)) {
      const Vector& fused = ctx.fusion[ctx.slot(i)].output;
      const Vector diff = fused - params.item_embeddings.row(i).transpose();
      const double sq = diff.squaredNorm();
      result.loss.l_f += cfg.squared_feature_loss ? sq : std::sqrt(sq);
      if (scales.feature == 0.0) continue;
      Vector g_fused;
      if (cfg.squared_feature_loss) {
        g_fused = 2.0 * scales.feature * diff;
      } else {
        g_fused = sq > 0.0 ? Vector(scales.feature * diff / std::sqrt(sq)) : Vector::Zero(diff.size());
      }
      ctx.fused_grad[ctx.slot(i)] += g_fused;
      out.d.item_embeddings.row(i) -= g_fused.transpose();
    }
  }

  if (batch.size() >= 2) {
    const Matrix users = batch_user_rows(params, batch);
    const Matrix items = batch_item_rows(params, batch);
    result.loss.l_c = covariance_loss(users) + covariance_loss(items);
    if (scales.covariance != 0.0) {
      const Matrix gu = covariance_gradient(users, scales.covariance);
      const Matrix gi = covariance_gradient(items, scales.covariance);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        out.d.user_embeddings.row(batch[b].user) += gu.row(static_cast<Eigen::Index>(b));
        out.d.item_embeddings.row(batch[b].item) += gi.row(static_cast<Eigen::Index>(b));
      }
    }
  }

  ctx.backward_fusion();

  result.loss.total =
      scales.ranking * result.loss.l_m + scales.feature * result.loss.l_f + scales.covariance * result.loss.l_c;
  if (!std::isfinite(result.loss.total)) throw NumericalError("non-finite training loss");
  check_finite(out);
  return result;
}

Gradients compute_gradients(const ModelParams& params, const FeatureStore& features, const Batch& batch,
                            const TrainConfig& cfg) {
  auto g = Gradients::zeros_like(params);
  compute_gradients(params, features, batch, cfg, ObjectiveScales::from(cfg), g);
  return g;
}

}  // namespace maml
