#include "maml/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "maml/errors.hpp"

namespace maml {

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& other) {
  l_m += other.l_m;
  l_f += other.l_f;
  l_c += other.l_c;
  total += other.total;
  return *this;
}

ObjectiveScales ObjectiveScales::from(const TrainConfig& cfg) {
  return {1.0, cfg.attention_enabled ? cfg.lambda_f : 0.0, cfg.lambda_c};
}

double hinge_term_sq(double d_pos_sq, double d_neg_sq, double margin) {
  return std::max(0.0, margin + d_pos_sq - d_neg_sq);
}

double hinge_term(double d_pos, double d_neg, double margin) {
  return hinge_term_sq(d_pos * d_pos, d_neg * d_neg, margin);
}

std::size_t approximate_rank(std::size_t num_items, std::size_t impostors, std::size_t samples) {
  if (samples == 0) throw InvalidInputError("rank estimate needs at least one sample");
  return (num_items * impostors) / samples;
}

RankEstimate estimate_rank(const ModelParams& params, const FusedFeatureCache& fused, UserIndex u, ItemIndex i,
                           std::span<const ItemIndex> negatives, double margin) {
  const double d_pos_sq = distance_sq(params, fused, u, i);
  RankEstimate out;
  for (ItemIndex k : negatives)
    if (margin + d_pos_sq - distance_sq(params, fused, u, k) > 0.0) out.impostors.push_back(k);
  out.rank = approximate_rank(params.num_items(), out.impostors.size(), negatives.size());
  return out;
}

double warp_weight(std::size_t rank) { return std::log(static_cast<double>(rank) + 1.0); }

double feature_loss(const Vector& q, const Vector& fused, bool squared) {
  if (q.size() != fused.size()) throw InvalidInputError("feature loss operands differ in size");
  const double sq = (fused - q).squaredNorm();
  return squared ? sq : std::sqrt(sq);
}

double covariance_loss(const Matrix& batch) {
  const auto n = batch.rows();
  if (n < 2) throw InvalidInputError("covariance loss needs at least 2 rows");
  const Eigen::RowVectorXd mean = batch.colwise().mean();
  const Matrix centered = batch.rowwise() - mean;
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n);
  const double off_diag = cov.squaredNorm() - cov.diagonal().squaredNorm();
  return std::max(0.0, off_diag) / static_cast<double>(n);
}

RankingLoss batch_ranking_loss(const ModelParams& params, const FusedFeatureCache& fused, const Batch& batch,
                               double margin, std::optional<std::span<const double>> frozen_weights) {
  if (frozen_weights && frozen_weights->size() != batch.size())
    throw InvalidInputError("frozen weights must match the batch size");
  RankingLoss out;
  out.examples.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& ex = batch[b];
    if (ex.negatives.empty()) throw InvalidInputError("training example without negatives");
    const double d_pos_sq = distance_sq(params, fused, ex.user, ex.item);
    ExampleTrace trace;
    for (ItemIndex k : ex.negatives) {
      const double h = hinge_term_sq(d_pos_sq, distance_sq(params, fused, ex.user, k), margin);
      if (h > 0.0) ++trace.impostors;
      trace.hinge_sum += h;
    }
    trace.rank = approximate_rank(params.num_items(), trace.impostors, ex.negatives.size());
    trace.weight = frozen_weights ? (*frozen_weights)[b] : warp_weight(trace.rank);
    out.value += trace.weight * trace.hinge_sum;
    out.examples.push_back(trace);
  }
  return out;
}

Matrix batch_user_rows(const ModelParams& params, const Batch& batch) {
  Matrix rows(static_cast<Eigen::Index>(batch.size()), params.user_embeddings.cols());
  for (std::size_t b = 0; b < batch.size(); ++b)
    rows.row(static_cast<Eigen::Index>(b)) = params.user_embeddings.row(batch[b].user);
  return rows;
}

Matrix batch_item_rows(const ModelParams& params, const Batch& batch) {
  Matrix rows(static_cast<Eigen::Index>(batch.size()), params.item_embeddings.cols());
  for (std::size_t b = 0; b < batch.size(); ++b)
    rows.row(static_cast<Eigen::Index>(b)) = params.item_embeddings.row(batch[b].item);
  return rows;
}

std::vector<ItemIndex> distinct_positive_items(const Batch& batch) {
  std::vector<ItemIndex> out;
  for (const auto& ex : batch)
    if (std::find(out.begin(), out.end(), ex.item) == out.end()) out.push_back(ex.item);
  return out;
}

LossBreakdown total_loss(const ModelParams& params, const FeatureStore& features, const Batch& batch,
                         const TrainConfig& cfg, const ObjectiveScales& scales,
                         std::optional<std::span<const double>> frozen_weights) {
  FusedFeatureCache fused(params, features);
  LossBreakdown out;
  out.l_m = batch_ranking_loss(params, fused, batch, cfg.margin, frozen_weights).value;
  if (params.attention_enabled || scales.feature != 0.0) {
    for (ItemIndex i : distinct_positive_items(batch))
      out.l_f += feature_loss(params.item_embeddings.row(i).transpose(), fused(i), cfg.squared_feature_loss);
  }
  if (batch.size() >= 2)
    out.l_c = covariance_loss(batch_user_rows(params, batch)) + covariance_loss(batch_item_rows(params, batch));
  out.total = scales.ranking * out.l_m + scales.feature * out.l_f + scales.covariance * out.l_c;
  if (!std::isfinite(out.total))
    throw NumericalError("non-finite loss (l_m=" + std::to_string(out.l_m) + ", l_f=" + std::to_string(out.l_f) +
                         ", l_c=" + std::to_string(out.l_c) + ")");
  return out;
}

LossBreakdown total_loss(const ModelParams& params, const FeatureStore& features, const Batch& batch,
                         const TrainConfig& cfg, std::optional<std::span<const double>> frozen_weights) {
  return total_loss(params, features, batch, cfg, ObjectiveScales::from(cfg), frozen_weights);
}

}  // namespace maml
