#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maml/data.hpp"
#include "maml/model.hpp"

namespace maml {

double precision_at_n(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t n);
double recall_at_n(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t n);
double hit_ratio_at_n(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t n);
// Binary-gain NDCG with the ideal DCG truncated at min(n, |relevant|).
double ndcg_at_n(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t n);

struct UserMetrics {
  UserIndex user = 0;
  double precision = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
  double hit_ratio = 0.0;
};

struct MetricsReport {
  std::size_t n = 10;
  double precision = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
  double hit_ratio = 0.0;
  std::vector<UserMetrics> per_user;
  std::size_t skipped_users = 0;
};

// All items except the user's training positives, best first.
std::vector<ItemIndex> rank_for_user(const ModelParams& params, const FusedFeatureCache& fused, UserIndex u,
                                     const InteractionDataset& train);

// Averages uniformly over users with at least one test positive. `threads`
// > 1 evaluates users concurrently; results do not depend on it.
MetricsReport evaluate(const ModelParams& params, const FeatureStore& features, const SplitPair& split,
                       std::size_t n = 10, std::size_t threads = 1);

// `metric,n,value` rows for precision, recall, ndcg, hit_ratio.
void write_metrics_csv(std::ostream& out, const MetricsReport& report);
void write_per_user_csv(std::ostream& out, const MetricsReport& report, const InteractionDataset& ds);
void print_metrics_table(std::ostream& out, const MetricsReport& report);

struct AttentionRow {
  UserIndex user = 0;
  ItemIndex item = 0;
  Vector weights;
};

// Maps external (user, item) ids to indices; throws InvalidInputError naming
// the first unknown id.
std::vector<Interaction> resolve_pairs(const InteractionDataset& ds,
                                       const std::vector<std::pair<std::string, std::string>>& pairs);

std::vector<AttentionRow> export_attention(const ModelParams& params, const FeatureStore& features,
                                           std::span<const Interaction> pairs);
// `user_id,item_id,w_1,...,w_f`
void write_attention_csv(std::ostream& out, const std::vector<AttentionRow>& rows, const InteractionDataset& ds);
std::vector<AttentionRow> read_attention_csv(std::istream& in, const InteractionDataset& ds);
// `item_id,q_1,...,q_f`
void write_item_embeddings_csv(std::ostream& out, const ModelParams& params, const InteractionDataset& ds);

}  // namespace maml
