#include <algorithm>
#include <cmath>
#include <map>

#include "maml/errors.hpp"
#include "maml/optim.hpp"

namespace maml {

namespace {

// Off-diagonal covariance penalty and its gradient over rows gathered from
// `table`; gradient rows are accumulated into `grad` at the same indices.
double covariance_term(const Matrix& table, const std::vector<std::uint32_t>& rows, double scale,
                       std::map<std::uint32_t, Vector>& grad) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto f = table.cols();
  Matrix y(n, f);
  for (Eigen::Index r = 0; r < n; ++r) y.row(r) = table.row(rows[static_cast<std::size_t>(r)]);
  const Eigen::RowVectorXd mean = y.colwise().mean();
  const Matrix c = y.rowwise() - mean;
  const double nn = static_cast<double>(n);
  Matrix cov = c.transpose() * c / nn;
  double off = 0.0;
  for (Eigen::Index a = 0; a < f; ++a)
    for (Eigen::Index b = 0; b < f; ++b)
      if (a != b) off += cov(a, b) * cov(a, b);
  cov.diagonal().setZero();
  cov *= 2.0 / nn;
  const Matrix g = (2.0 * scale / nn) * c * cov;
  for (Eigen::Index r = 0; r < n; ++r) {
    auto& acc = grad.try_emplace(rows[static_cast<std::size_t>(r)], Vector::Zero(f)).first->second;
    acc += g.row(r).transpose();
  }
  return off / nn;
}

struct RowAdam {
  Matrix m, v;
  void update(Matrix& table, std::uint32_t row, const Vector& g, double lr, double b1, double b2, double eps,
              double bc1, double bc2) {
    const auto r = static_cast<Eigen::Index>(row);
    for (Eigen::Index k = 0; k < table.cols(); ++k) {
      m(r, k) = b1 * m(r, k) + (1.0 - b1) * g(k);
      v(r, k) = b2 * v(r, k) + (1.0 - b2) * (g(k) * g(k));
      table(r, k) -= lr * (m(r, k) / bc1) / (std::sqrt(v(r, k) / bc2) + eps);
    }
    const double n = table.row(r).norm();
    if (n > 1.0) table.row(r) /= n;
  }
};

}  // namespace

TrainResult train_cml_reference(const SplitPair& split, const FeatureStore& features, const TrainConfig& cfg,
                                Rng& rng, const TrainHooks& hooks) {
  cfg.validate();
  if (split.train.empty()) throw EmptyDatasetError("training split is empty");
  TrainConfig plain = cfg;
  plain.attention_enabled = false;
  const ModelDims dims{split.train.num_users(), split.train.num_items(), features.text_dim(), features.visual_dim()};
  // Same initialisation draws as train(); the network tensors stay untouched.
  TrainResult result{init_params(plain, dims, rng), {}};
  auto& P = result.params.user_embeddings;
  auto& Q = result.params.item_embeddings;
  RowAdam adam_p{Matrix::Zero(P.rows(), P.cols()), Matrix::Zero(P.rows(), P.cols())};
  RowAdam adam_q{Matrix::Zero(Q.rows(), Q.cols()), Matrix::Zero(Q.rows(), Q.cols())};
  const double J = static_cast<double>(split.train.num_items());
  std::uint64_t t = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = shuffled_positives(split.train, rng);
    LossBreakdown epoch_loss;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const Batch batch = make_batch(split.train, std::span(order).subspan(start, len), cfg.neg_samples, rng);

      std::map<std::uint32_t, Vector> gp, gq;
      LossBreakdown step;
      for (const auto& ex : batch) {
        gp.try_emplace(ex.user, Vector::Zero(P.cols()));
        gq.try_emplace(ex.item, Vector::Zero(Q.cols()));
        const Vector p = P.row(ex.user).transpose();
        const Vector dpos = p - Q.row(ex.item).transpose();
        const double dpos_sq = dpos.squaredNorm();
        std::vector<double> violation;
        std::size_t impostors = 0;
        double hinge_sum = 0.0;
        for (ItemIndex k : ex.negatives) {
          gq.try_emplace(k, Vector::Zero(Q.cols()));
          const double z = cfg.margin + dpos_sq - (p - Q.row(k).transpose()).squaredNorm();
          violation.push_back(z);
          if (z > 0.0) ++impostors;
          hinge_sum += std::max(0.0, z);
        }
        const double rank = std::floor(J * static_cast<double>(impostors) / static_cast<double>(ex.negatives.size()));
        const double w = std::log(rank + 1.0);
        step.l_m += w * hinge_sum;
        // d/dp (|p-q_i|^2 - |p-q_k|^2) = 2(p-q_i) - 2(p-q_k); the positive part is
        // applied once with the summed weight.
        double w_pos = 0.0;
        for (std::size_t n = 0; n < ex.negatives.size(); ++n) {
          if (violation[n] <= 0.0) continue;
          w_pos += w;
          const Vector dneg = p - Q.row(ex.negatives[n]).transpose();
          gp[ex.user] -= 2.0 * w * dneg;
          gq[ex.negatives[n]] += 2.0 * w * dneg;
        }
        if (w_pos != 0.0) {
          gp[ex.user] += 2.0 * w_pos * dpos;
          gq[ex.item] -= 2.0 * w_pos * dpos;
        }
      }
      if (batch.size() >= 2) {
        std::vector<std::uint32_t> users, items;
        for (const auto& ex : batch) {
          users.push_back(ex.user);
          items.push_back(ex.item);
        }
        step.l_c = covariance_term(P, users, cfg.lambda_c, gp) + covariance_term(Q, items, cfg.lambda_c, gq);
      }
      step.total = step.l_m + cfg.lambda_c * step.l_c;
      if (!std::isfinite(step.total)) throw NumericalError("non-finite loss in reference metric trainer");
      epoch_loss += step;

      ++t;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
      for (const auto& [u, g] : gp)
        adam_p.update(P, u, g, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon, bc1, bc2);
      for (const auto& [i, g] : gq)
        adam_q.update(Q, i, g, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon, bc1, bc2);
      ++result.history.steps;
      if (hooks.on_step) hooks.on_step(result.params);
    }
    result.history.epochs.push_back(epoch_loss);
    if (hooks.on_epoch) hooks.on_epoch(epoch, epoch_loss, result.params);
    if (hooks.on_checkpoint && (epoch == cfg.max_epochs || (cfg.checkpoint_every && epoch % cfg.checkpoint_every == 0)))
      hooks.on_checkpoint(epoch, result.params);
  }
  return result;
}

}  // namespace maml
