#pragma once

#include <optional>
#include <span>
#include <vector>

#include "maml/data.hpp"
#include "maml/model.hpp"
#include "maml/train_config.hpp"

namespace maml {

struct LossBreakdown {
  double l_m = 0.0;  // WARP-weighted hinge ranking loss
  double l_f = 0.0;  // feature anchoring
  double l_c = 0.0;  // covariance decorrelation
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& other);
};

// One positive (u, i) with the negatives sampled for it.
struct TrainingExample {
  UserIndex user = 0;
  ItemIndex item = 0;
  std::vector<ItemIndex> negatives;
};
using Batch = std::vector<TrainingExample>;

// Scales applied to each objective term; total = ranking * L_m +
// feature * L_f + covariance * L_c.
struct ObjectiveScales {
  double ranking = 1.0;
  double feature = 0.0;
  double covariance = 0.0;

  // lambda_f is dropped when attention is off: the plain metric ablation
  // does not read item features at all.
  static ObjectiveScales from(const TrainConfig& cfg);
};

// max(0, m + d_pos^2 - d_neg^2)
double hinge_term(double d_pos, double d_neg, double margin);
// Same hinge on squared distances.
double hinge_term_sq(double d_pos_sq, double d_neg_sq, double margin);

struct RankEstimate {
  std::size_t rank = 0;
  std::vector<ItemIndex> impostors;
};

// floor(J * M / N) for J items in total, M impostors among N samples.
std::size_t approximate_rank(std::size_t num_items, std::size_t impostors, std::size_t samples);

RankEstimate estimate_rank(const ModelParams& params, const FusedFeatureCache& fused, UserIndex u, ItemIndex i,
                           std::span<const ItemIndex> negatives, double margin);

// ln(rank + 1)
double warp_weight(std::size_t rank);

// ||F_tv - q||^2, or ||F_tv - q|| when `squared` is false.
double feature_loss(const Vector& q, const Vector& fused, bool squared = true);

// (1/N) * sum of squared off-diagonal entries of the N-sample covariance of
// the rows of `batch`. Throws InvalidInputError for N < 2.
double covariance_loss(const Matrix& batch);

struct ExampleTrace {
  std::size_t rank = 0;
  std::size_t impostors = 0;
  double weight = 0.0;
  double hinge_sum = 0.0;
};

struct RankingLoss {
  double value = 0.0;
  std::vector<ExampleTrace> examples;
};

// Sum over examples of w * sum_k hinge(d(u,i), d(u,k)). The weight of each
// example is warp_weight(estimate_rank(...)) unless `frozen_weights` supplies
// one weight per example.
RankingLoss batch_ranking_loss(const ModelParams& params, const FusedFeatureCache& fused, const Batch& batch,
                               double margin, std::optional<std::span<const double>> frozen_weights = std::nullopt);

// Rows p_u (resp. q_i) of the batch's positives, one row per example.
Matrix batch_user_rows(const ModelParams& params, const Batch& batch);
Matrix batch_item_rows(const ModelParams& params, const Batch& batch);
// Distinct positive items of the batch in first-appearance order.
std::vector<ItemIndex> distinct_positive_items(const Batch& batch);

LossBreakdown total_loss(const ModelParams& params, const FeatureStore& features, const Batch& batch,
                         const TrainConfig& cfg, std::optional<std::span<const double>> frozen_weights = std::nullopt);
LossBreakdown total_loss(const ModelParams& params, const FeatureStore& features, const Batch& batch,
                         const TrainConfig& cfg, const ObjectiveScales& scales,
                         std::optional<std::span<const double>> frozen_weights = std::nullopt);

}  // namespace maml
