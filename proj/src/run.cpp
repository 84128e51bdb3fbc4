#include "maml/run.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "maml/checkpoint.hpp"
#include "maml/errors.hpp"
#include "maml/log.hpp"
#include "maml/optim.hpp"
#include "maml/synthetic.hpp"

namespace maml {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04zu.ckpt", epoch);
  return buf;
}

bool report_finite(const MetricsReport& r) {
  return std::isfinite(r.precision) && std::isfinite(r.recall) && std::isfinite(r.ndcg) && std::isfinite(r.hit_ratio);
}

void check_compatible(const ModelParams& params, const PreparedData& data, const fs::path& source) {
  if (params.num_users() != data.filtered.num_users() || params.num_items() != data.filtered.num_items() ||
      params.text_dim != data.features.text_dim() || params.visual_dim != data.features.visual_dim())
    throw InvalidInputError(source.string() + ": checkpoint dims (" + std::to_string(params.num_users()) + " users, " +
                            std::to_string(params.num_items()) + " items, features " +
                            std::to_string(params.text_dim) + "+" + std::to_string(params.visual_dim) +
                            ") do not match the data (" + std::to_string(data.filtered.num_users()) + " users, " +
                            std::to_string(data.filtered.num_items()) + " items, features " +
                            std::to_string(data.features.text_dim()) + "+" +
                            std::to_string(data.features.visual_dim()) + ")");
}

fs::path checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? cfg.out_dir / "model.ckpt" : cfg.checkpoint;
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg, Rng& rng) {
  if (cfg.interactions.empty()) throw InvalidInputError("no interaction file configured (--interactions)");
  if (cfg.features.empty()) throw InvalidInputError("no feature file configured (--features)");
  if (!fs::exists(cfg.interactions)) throw IoError("interaction file not found: " + cfg.interactions.string());
  if (!fs::exists(cfg.features)) throw IoError("feature file not found: " + cfg.features.string());
  auto raw = load_interactions(cfg.interactions);
  auto filtered = filter_k_core(raw, cfg.k_core);
  log_info("dataset: " + std::to_string(filtered.num_users()) + " users, " + std::to_string(filtered.num_items()) +
           " items, " + std::to_string(filtered.num_positives()) + " interactions after " +
           std::to_string(cfg.k_core) + "-core filtering");
  auto split = split_per_user(filtered, cfg.train_ratio, rng);
  auto features = load_features(cfg.features, filtered);
  std::optional<InteractionDataset> valid;
  if (!cfg.valid.empty()) {
    if (!fs::exists(cfg.valid)) throw IoError("validation file not found: " + cfg.valid.string());
    valid = align_to(filtered, load_interactions(cfg.valid));
  }
  return {std::move(filtered), std::move(split), std::move(features), std::move(valid)};
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  cfg.train.validate();
  fs::create_directories(cfg.out_dir / "checkpoints");
  write_text(cfg.out_dir / "effective_config.txt", echo_config(cfg));

  Rng rng(cfg.train.seed);
  const auto data = prepare_data(cfg, rng);
  write_interactions(cfg.out_dir / "train.tsv", data.split.train);
  write_interactions(cfg.out_dir / "test.tsv", data.split.test);

  auto log = open_out(cfg.out_dir / "train_log.csv");
  log << "epoch,l_m,l_f,l_c,total\n";
  log.precision(12);

  const auto started = std::chrono::steady_clock::now();
  fs::path best_path;
  double best_ndcg = -1.0;

  TrainHooks hooks;
  hooks.on_epoch = [&](std::size_t epoch, const LossBreakdown& l, const ModelParams&) {
    log << epoch << ',' << l.l_m << ',' << l.l_f << ',' << l.l_c << ',' << l.total << '\n' << std::flush;
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    char line[256];
    std::snprintf(line, sizeof(line), "epoch=%zu total=%.6f lm=%.6f lf=%.6f lc=%.6f elapsed_s=%.1f", epoch, l.total,
                  l.l_m, l.l_f, l.l_c, elapsed);
    log_info(line);
  };
  hooks.on_checkpoint = [&](std::size_t epoch, const ModelParams& params) {
    const auto path = cfg.out_dir / "checkpoints" / checkpoint_name(epoch);
    save_checkpoint(path, params);
    if (data.valid && !data.valid->empty()) {
      const auto report = evaluate(load_checkpoint(path), data.features, {data.split.train, *data.valid}, cfg.n,
                                   cfg.threads);
      log_info("validation ndcg@" + std::to_string(cfg.n) + "=" + std::to_string(report.ndcg) + " at epoch " +
               std::to_string(epoch));
      if (report.ndcg > best_ndcg) {
        best_ndcg = report.ndcg;
        best_path = path;
      }
    }
  };

  const auto result = train(data.split, data.features, cfg.train, rng, hooks);

  const auto model_path = cfg.out_dir / "model.ckpt";
  if (!best_path.empty()) {
    fs::copy_file(best_path, model_path, fs::copy_options::overwrite_existing);
    log_info("selected " + best_path.filename().string() + " by validation ndcg");
  } else {
    save_checkpoint(model_path, result.params);
  }

  // Evaluate exactly what was written to disk.
  const auto final_params = load_checkpoint(model_path);
  const auto report = evaluate(final_params, data.features, data.split, cfg.n, cfg.threads);
  {
    auto csv = open_out(cfg.out_dir / "metrics.csv");
    write_metrics_csv(csv, report);
    auto per_user = open_out(cfg.out_dir / "metrics_per_user.csv");
    write_per_user_csv(per_user, report, data.filtered);
  }
  print_metrics_table(out, report);
  return report_finite(report) && std::isfinite(result.history.epochs.empty() ? 0.0 : result.history.epochs.back().total)
             ? 0
             : 1;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  const auto ckpt = checkpoint_path(cfg);
  if (!fs::exists(ckpt)) throw IoError("checkpoint not found: " + ckpt.string());
  const auto params = load_checkpoint(ckpt);
  Rng rng(cfg.train.seed);
  const auto data = prepare_data(cfg, rng);
  check_compatible(params, data, ckpt);
  const auto report = evaluate(params, data.features, data.split, cfg.n, cfg.threads);
  fs::create_directories(cfg.out_dir);
  {
    auto csv = open_out(cfg.out_dir / "evaluate_metrics.csv");
    write_metrics_csv(csv, report);
    auto per_user = open_out(cfg.out_dir / "evaluate_metrics_per_user.csv");
    write_per_user_csv(per_user, report, data.filtered);
  }
  print_metrics_table(out, report);
  return report_finite(report) ? 0 : 1;
}

int cmd_synthetic(const RunConfig& cfg, std::ostream& out) {
  const auto data = generate_synthetic(cfg.synthetic);
  fs::create_directories(cfg.out_dir);
  write_interactions(cfg.out_dir / "interactions.tsv", data.interactions);
  write_features(cfg.out_dir / "features.txt", data.interactions, data.features);
  write_ground_truth(cfg.out_dir / "ground_truth.txt", data);
  out << "wrote " << data.interactions.num_positives() << " interactions for " << data.interactions.num_users()
      << " users and " << data.interactions.num_items() << " items to " << cfg.out_dir.string() << '\n';
  return 0;
}

int cmd_inspect(const RunConfig& cfg, std::ostream& out) {
  const auto ckpt = checkpoint_path(cfg);
  if (!fs::exists(ckpt)) throw IoError("checkpoint not found: " + ckpt.string());
  const auto params = load_checkpoint(ckpt);
  Rng rng(cfg.train.seed);
  const auto data = prepare_data(cfg, rng);
  check_compatible(params, data, ckpt);
  const auto& ds = data.filtered;

  std::vector<Interaction> pairs;
  if (!cfg.pairs.empty()) {
    std::ifstream in(cfg.pairs);
    if (!in) throw IoError("cannot open pairs file " + cfg.pairs.string());
    std::vector<std::pair<std::string, std::string>> ids;
    std::string user, item;
    while (in >> user >> item) ids.emplace_back(user, item);
    pairs = resolve_pairs(ds, ids);
  } else if (!cfg.user.empty()) {
    // The user's own items first, then further items in index order.
    const auto u = resolve_pairs(ds, {{cfg.user, ds.items().name(0)}}).front().user;
    for (ItemIndex i : ds.items_of(u))
      if (pairs.size() < cfg.limit) pairs.push_back({u, i});
    for (std::size_t i = 0; i < ds.num_items() && pairs.size() < cfg.limit; ++i)
      if (!ds.contains(u, static_cast<ItemIndex>(i))) pairs.push_back({u, static_cast<ItemIndex>(i)});
  } else if (!cfg.item.empty()) {
    const auto i = resolve_pairs(ds, {{ds.users().name(0), cfg.item}}).front().item;
    for (std::size_t u = 0; u < ds.num_users(); ++u)
      if (pairs.size() < cfg.limit && ds.contains(static_cast<UserIndex>(u), i))
        pairs.push_back({static_cast<UserIndex>(u), i});
    for (std::size_t u = 0; u < ds.num_users() && pairs.size() < cfg.limit; ++u)
      if (!ds.contains(static_cast<UserIndex>(u), i)) pairs.push_back({static_cast<UserIndex>(u), i});
  } else {
    throw InvalidInputError("inspect needs --user, --item or --pairs");
  }

  fs::create_directories(cfg.out_dir);
  const auto rows = export_attention(params, data.features, pairs);
  {
    auto csv = open_out(cfg.out_dir / "attention.csv");
    write_attention_csv(csv, rows, ds);
    auto emb = open_out(cfg.out_dir / "item_embeddings.csv");
    write_item_embeddings_csv(emb, params, ds);
  }
  out << "wrote " << rows.size() << " attention rows to " << (cfg.out_dir / "attention.csv").string() << '\n';
  for (const auto& r : rows)
    if (!r.weights.allFinite()) return 1;
  return 0;
}

}  // namespace maml
