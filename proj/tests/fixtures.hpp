#pragma once

#include <random>
#include <string>
#include <vector>

#include "maml/data.hpp"
#include "maml/loss.hpp"
#include "maml/model.hpp"
#include "maml/optim.hpp"
#include "maml/synthetic.hpp"
#include "maml/train_config.hpp"
#include "oracles.hpp"

namespace fixture {

inline maml::IdMap ids(const std::string& prefix, std::size_t n) {
  maml::IdMap m;
  for (std::size_t k = 0; k < n; ++k) m.intern(prefix + std::to_string(k));
  return m;
}

inline maml::InteractionDataset dataset(std::vector<std::vector<maml::ItemIndex>> per_user, std::size_t n_items) {
  return {ids("u", per_user.size()), ids("i", n_items), std::move(per_user)};
}

inline maml::Matrix gaussian(std::size_t rows, std::size_t cols, maml::Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  maml::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  return m;
}

// 5 users, 6 items, f=8, h1=16, h2=8, s=2.
struct TinyInstance {
  maml::TrainConfig cfg;
  maml::ModelParams params;
  maml::FeatureStore features;
  maml::Batch batch;
  std::vector<double> weights;
};

inline TinyInstance tiny_instance(std::uint64_t seed, bool attention = true) {
  maml::Rng rng(seed);
  TinyInstance t;
  t.cfg.dim = 8;
  t.cfg.hidden1 = 16;
  t.cfg.hidden2 = 8;
  t.cfg.neg_samples = 2;
  t.cfg.attention_enabled = attention;
  t.cfg.margin = std::uniform_real_distribution<double>(0.3, 1.2)(rng);
  const std::size_t users = 5, items = 6, text = 5, visual = 7;
  t.features = maml::FeatureStore(gaussian(items, text, rng), gaussian(items, visual, rng));
  t.params = maml::init_params(t.cfg, {users, items, text, visual}, rng);
  // Non-zero biases so no unit sits exactly at its kink by construction.
  for (auto& tensor : maml::network_tensors(t.params))
    if (tensor.name.find(".b") != std::string::npos)
      for (auto& v : tensor.values) v = std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  std::uniform_int_distribution<unsigned> pick_user(0, users - 1), pick_item(0, items - 1);
  for (int b = 0; b < 4; ++b) {
    maml::TrainingExample ex;
    ex.user = pick_user(rng);
    ex.item = pick_item(rng);
    while (ex.negatives.size() < t.cfg.neg_samples) {
      auto k = pick_item(rng);
      if (k != ex.item) ex.negatives.push_back(k);
    }
    t.batch.push_back(ex);
    t.weights.push_back(std::uniform_real_distribution<double>(0.5, 2.0)(rng));
  }
  return t;
}

struct FdOutcome {
  bool accepted = false;  // false when the instance sits too close to a kink
  bool active_hinge = false;
  oracle::GradientCheck check;
};

// Checks the analytic gradient of one scaled objective against central
// differences of the reference objective.
inline FdOutcome fd_check(const TinyInstance& t, const oracle::Scales& s, double kink_margin = 2e-2) {
  FdOutcome out;
  const auto ref = oracle::objective(t.params, t.features, t.batch, t.cfg.margin, t.weights, s);
  if (ref.nearest_kink < kink_margin) return out;
  out.accepted = true;
  out.active_hinge = ref.l_m > 0.0;
  maml::Gradients g = maml::Gradients::zeros_like(t.params);
  maml::compute_gradients(t.params, t.features, t.batch, t.cfg, {s.ranking, s.feature, s.covariance}, g,
                          std::span<const double>(t.weights));
  out.check = oracle::finite_difference_check(t.params, g.d, t.features, t.batch, t.cfg.margin, t.weights, s, 1e-4,
                                              1e-4, 1e-6);
  return out;
}

}  // namespace fixture
