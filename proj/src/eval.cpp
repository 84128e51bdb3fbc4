#include "maml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "maml/errors.hpp"
#include "maml/log.hpp"

namespace maml {

namespace {

std::size_t hits_in_top(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t n) {
  std::size_t hits = 0;
  for (std::size_t j = 0; j < std::min(n, ranked.size()); ++j)
    if (std::find(relevant.begin(), relevant.end(), ranked[j]) != relevant.end()) ++hits;
  return hits;
}

void check_args(std::span<const ItemIndex> relevant, std::size_t n) {
  if (n < 1) throw InvalidInputError("cutoff n must be at least 1");
  if (relevant.empty()) throw InvalidInputError("relevant set is empty");
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10f", v);
  return buf;
}

}  // namespace

double precision_at_n(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t n) {
  check_args(relevant, n);
  return static_cast<double>(hits_in_top(ranked, relevant, n)) / static_cast<double>(n);
}

double recall_at_n(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t n) {
  check_args(relevant, n);
  return static_cast<double>(hits_in_top(ranked, relevant, n)) / static_cast<double>(relevant.size());
}

double hit_ratio_at_n(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t n) {
  check_args(relevant, n);
  return hits_in_top(ranked, relevant, n) > 0 ? 1.0 : 0.0;
}

double ndcg_at_n(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t n) {
  check_args(relevant, n);
  double dcg = 0.0;
  for (std::size_t j = 0; j < std::min(n, ranked.size()); ++j)
    if (std::find(relevant.begin(), relevant.end(), ranked[j]) != relevant.end())
      dcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  double idcg = 0.0;
  for (std::size_t j = 0; j < std::min(n, relevant.size()); ++j) idcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  return dcg / idcg;
}

std::vector<ItemIndex> rank_for_user(const ModelParams& params, const FusedFeatureCache& fused, UserIndex u,
                                     const InteractionDataset& train) {
  std::vector<ItemIndex> exclude(train.items_of(u).begin(), train.items_of(u).end());
  std::sort(exclude.begin(), exclude.end());
  auto scored = score_all_items(params, fused, u, exclude);
  std::vector<ItemIndex> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.item);
  return out;
}

MetricsReport evaluate(const ModelParams& params, const FeatureStore& features, const SplitPair& split, std::size_t n,
                       std::size_t threads) {
  if (n < 1) throw InvalidInputError("cutoff n must be at least 1");
  if (split.test.empty()) throw EmptyDatasetError("test split is empty");
  if (params.num_users() != split.train.num_users() || params.num_items() != split.train.num_items())
    throw InvalidInputError("model dimensions do not match the dataset");
  FusedFeatureCache fused(params, features);
  if (params.attention_enabled) fused.fill();

  const std::size_t n_users = split.test.num_users();
  std::vector<UserMetrics> results(n_users);
  std::vector<char> present(n_users, 0);
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t u = begin; u < n_users; u += step) {
      const auto user = static_cast<UserIndex>(u);
      auto relevant = split.test.items_of(user);
      if (relevant.empty()) continue;
      const auto ranked = rank_for_user(params, fused, user, split.train);
      results[u] = {user, precision_at_n(ranked, relevant, n), recall_at_n(ranked, relevant, n),
                    ndcg_at_n(ranked, relevant, n), hit_ratio_at_n(ranked, relevant, n)};
      present[u] = 1;
    }
  };
  threads = std::max<std::size_t>(1, threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }

  MetricsReport report;
  report.n = n;
  for (std::size_t u = 0; u < n_users; ++u) {
    if (!present[u]) {
      ++report.skipped_users;
      continue;
    }
    report.per_user.push_back(results[u]);
  }
  if (report.skipped_users > 0)
    log_warn(std::to_string(report.skipped_users) + " user(s) without test positives skipped");
  if (report.per_user.empty()) throw EmptyDatasetError("no user has test positives");
  for (const auto& m : report.per_user) {
    report.precision += m.precision;
    report.recall += m.recall;
    report.ndcg += m.ndcg;
    report.hit_ratio += m.hit_ratio;
  }
  const auto count = static_cast<double>(report.per_user.size());
  report.precision /= count;
  report.recall /= count;
  report.ndcg /= count;
  report.hit_ratio /= count;
  return report;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  out << "metric,n,value\n";
  out << "precision," << report.n << ',' << format_value(report.precision) << '\n';
  out << "recall," << report.n << ',' << format_value(report.recall) << '\n';
  out << "ndcg," << report.n << ',' << format_value(report.ndcg) << '\n';
  out << "hit_ratio," << report.n << ',' << format_value(report.hit_ratio) << '\n';
}

void write_per_user_csv(std::ostream& out, const MetricsReport& report, const InteractionDataset& ds) {
  out << "user_id,n,precision,recall,ndcg,hit_ratio\n";
  for (const auto& m : report.per_user)
    out << ds.users().name(m.user) << ',' << report.n << ',' << format_value(m.precision) << ','
        << format_value(m.recall) << ',' << format_value(m.ndcg) << ',' << format_value(m.hit_ratio) << '\n';
}

void print_metrics_table(std::ostream& out, const MetricsReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "metric      @" << report.n << '\n';
  os << "precision   " << report.precision << '\n';
  os << "recall      " << report.recall << '\n';
  os << "ndcg        " << report.ndcg << '\n';
  os << "hit_ratio   " << report.hit_ratio << '\n';
  os << "users       " << report.per_user.size() << '\n';
  out << os.str();
}

std::vector<Interaction> resolve_pairs(const InteractionDataset& ds,
                                       const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<Interaction> out;
  out.reserve(pairs.size());
  for (const auto& [user, item] : pairs) {
    auto u = ds.users().find(user);
    if (!u) throw InvalidInputError("unknown user id `" + user + "`");
    auto i = ds.items().find(item);
    if (!i) throw InvalidInputError("unknown item id `" + item + "`");
    out.push_back({*u, *i});
  }
  return out;
}

std::vector<AttentionRow> export_attention(const ModelParams& params, const FeatureStore& features,
                                           std::span<const Interaction> pairs) {
  FusedFeatureCache fused(params, features);
  std::vector<AttentionRow> rows;
  rows.reserve(pairs.size());
  for (const auto& [u, i] : pairs) {
    if (u >= params.num_users() || i >= params.num_items()) throw InvalidInputError("attention pair out of range");
    rows.push_back({u, i, attention_weights(params, fused, u, i)});
  }
  return rows;
}

void write_attention_csv(std::ostream& out, const std::vector<AttentionRow>& rows, const InteractionDataset& ds) {
  out << "user_id,item_id";
  const auto f = rows.empty() ? 0 : rows.front().weights.size();
  for (Eigen::Index k = 0; k < f; ++k) out << ",w_" << k + 1;
  out << '\n' << std::setprecision(9);
  for (const auto& row : rows) {
    out << ds.users().name(row.user) << ',' << ds.items().name(row.item);
    for (Eigen::Index k = 0; k < row.weights.size(); ++k) out << ',' << row.weights(k);
    out << '\n';
  }
}

std::vector<AttentionRow> read_attention_csv(std::istream& in, const InteractionDataset& ds) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("user_id,item_id", 0) != 0) throw FormatError("missing attention header");
  std::vector<AttentionRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string user, item, cell;
    std::getline(ss, user, ',');
    std::getline(ss, item, ',');
    std::vector<double> w;
    while (std::getline(ss, cell, ',')) w.push_back(std::stod(cell));
    auto resolved = resolve_pairs(ds, {{user, item}});
    rows.push_back({resolved[0].user, resolved[0].item, Eigen::Map<Vector>(w.data(), static_cast<Eigen::Index>(w.size()))});
  }
  return rows;
}

void write_item_embeddings_csv(std::ostream& out, const ModelParams& params, const InteractionDataset& ds) {
  out << "item_id";
  for (std::size_t k = 0; k < params.dim(); ++k) out << ",q_" << k + 1;
  out << '\n' << std::setprecision(9);
  for (std::size_t i = 0; i < params.num_items(); ++i) {
    out << ds.items().name(static_cast<ItemIndex>(i));
    for (Eigen::Index k = 0; k < params.item_embeddings.cols(); ++k)
      out << ',' << params.item_embeddings(static_cast<Eigen::Index>(i), k);
    out << '\n';
  }
}

}  // namespace maml
