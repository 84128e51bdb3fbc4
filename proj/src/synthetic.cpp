#include "maml/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "maml/errors.hpp"

namespace maml {

double GroundTruth::affinity(UserIndex u, ItemIndex i) const {
  return user_profiles.row(u).dot(item_signatures.row(i));
}

namespace {

std::string padded_id(char prefix, std::size_t idx, std::size_t count) {
  auto width = std::to_string(count > 0 ? count - 1 : 0).size();
  std::ostringstream os;
  os << prefix << std::setw(static_cast<int>(width)) << std::setfill('0') << idx;
  return os.str();
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_users == 0 || cfg.n_items == 0 || cfg.n_aspects == 0 || cfg.text_dim == 0 || cfg.visual_dim == 0)
    throw InvalidInputError("synthetic sizes must be positive");
  if (!(cfg.noise >= 0.0 && cfg.noise < 1.0)) throw InvalidInputError("synthetic noise must lie in [0, 1)");
  if (cfg.interactions_per_user < 5) throw InvalidInputError("synthetic data needs at least 5 interactions per user");

  const auto n_noisy = static_cast<std::size_t>(std::llround(cfg.noise * static_cast<double>(cfg.interactions_per_user)));
  const std::size_t n_structured = cfg.interactions_per_user - n_noisy;
  // Items strictly above the median affinity form the structured pool.
  const std::size_t pool_size = cfg.n_items / 2;
  if (n_structured > pool_size || cfg.interactions_per_user > cfg.n_items)
    throw InvalidInputError("too many interactions per user for " + std::to_string(cfg.n_items) + " items");

  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto K = static_cast<Eigen::Index>(cfg.n_aspects);

  GroundTruth truth;
  truth.user_profiles = Matrix::Zero(static_cast<Eigen::Index>(cfg.n_users), K);
  std::vector<std::size_t> aspect_ids(cfg.n_aspects);
  std::iota(aspect_ids.begin(), aspect_ids.end(), 0);
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    std::size_t max_active = std::min<std::size_t>(3, cfg.n_aspects);
    std::size_t active = std::uniform_int_distribution<std::size_t>(1, max_active)(rng);
    std::shuffle(aspect_ids.begin(), aspect_ids.end(), rng);
    double total = 0.0;
    for (std::size_t a = 0; a < active; ++a) {
      double w = 0.2 + expo(rng);
      truth.user_profiles(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(aspect_ids[a])) = w;
      total += w;
    }
    truth.user_profiles.row(static_cast<Eigen::Index>(u)) /= total;
  }

  truth.item_signatures = Matrix::Zero(static_cast<Eigen::Index>(cfg.n_items), K);
  truth.item_primary_aspect.resize(cfg.n_items);
  std::uniform_int_distribution<std::size_t> pick_aspect(0, cfg.n_aspects - 1);
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const std::size_t primary = pick_aspect(rng);
    const double popularity = 0.5 + unit(rng);
    for (Eigen::Index k = 0; k < K; ++k) {
      double base = static_cast<std::size_t>(k) == primary ? 0.8 : 0.0;
      truth.item_signatures(row, k) = popularity * (base + 0.2 * unit(rng));
    }
    Eigen::Index arg = 0;
    truth.item_signatures.row(row).maxCoeff(&arg);
    truth.item_primary_aspect[i] = static_cast<std::size_t>(arg);
  }

  IdMap users, items;
  for (std::size_t u = 0; u < cfg.n_users; ++u) users.intern(padded_id('u', u, cfg.n_users));
  for (std::size_t i = 0; i < cfg.n_items; ++i) items.intern(padded_id('i', i, cfg.n_items));

  std::vector<std::vector<ItemIndex>> per_user(cfg.n_users);
  std::vector<std::pair<double, ItemIndex>> scored(cfg.n_items);
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    for (std::size_t i = 0; i < cfg.n_items; ++i)
      scored[i] = {truth.affinity(static_cast<UserIndex>(u), static_cast<ItemIndex>(i)), static_cast<ItemIndex>(i)};
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    // Drop ties with the median so the pool is strictly above it.
    const double median = cfg.n_items % 2 == 1
                              ? scored[cfg.n_items / 2].first
                              : 0.5 * (scored[cfg.n_items / 2 - 1].first + scored[cfg.n_items / 2].first);
    std::vector<std::pair<double, ItemIndex>> pool;
    for (const auto& entry : scored)
      if (entry.first > median) pool.push_back(entry);
    if (pool.size() < n_structured)
      throw InvalidInputError("affinity pool too small for user " + users.name(static_cast<UserIndex>(u)));

    std::vector<char> taken(cfg.n_items, 0);
    auto& chosen = per_user[u];
    for (std::size_t draw = 0; draw < n_structured; ++draw) {
      double mass = 0.0;
      for (const auto& [a, i] : pool)
        if (!taken[i]) mass += a;
      double target = unit(rng) * mass;
      ItemIndex pick = pool.back().second;
      for (const auto& [a, i] : pool) {
        if (taken[i]) continue;
        pick = i;
        target -= a;
        if (target <= 0.0) break;
      }
      taken[pick] = 1;
      chosen.push_back(pick);
    }
    std::uniform_int_distribution<ItemIndex> any(0, static_cast<ItemIndex>(cfg.n_items - 1));
    while (chosen.size() < cfg.interactions_per_user) {
      ItemIndex i = any(rng);
      if (taken[i]) continue;
      taken[i] = 1;
      chosen.push_back(i);
    }
  }

  auto linear_image = [&](std::size_t dim) {
    Matrix proj(static_cast<Eigen::Index>(dim), K);
    for (Eigen::Index r = 0; r < proj.rows(); ++r)
      for (Eigen::Index c = 0; c < K; ++c) proj(r, c) = gauss(rng);
    Matrix out = truth.item_signatures * proj.transpose();
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) += cfg.noise * gauss(rng);
    return out;
  };
  Matrix text = linear_image(cfg.text_dim);
  Matrix visual = linear_image(cfg.visual_dim);

  return {InteractionDataset(std::move(users), std::move(items), std::move(per_user)),
          FeatureStore(std::move(text), std::move(visual)), std::move(truth)};
}

void write_ground_truth(const std::filesystem::path& path, const SyntheticData& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& t = data.truth;
  out << "GROUND_TRUTH " << t.user_profiles.cols() << '\n' << std::setprecision(17);
  for (Eigen::Index u = 0; u < t.user_profiles.rows(); ++u) {
    out << "U " << data.interactions.users().name(static_cast<UserIndex>(u));
    for (Eigen::Index k = 0; k < t.user_profiles.cols(); ++k) out << ' ' << t.user_profiles(u, k);
    out << '\n';
  }
  for (Eigen::Index i = 0; i < t.item_signatures.rows(); ++i) {
    out << "I " << data.interactions.items().name(static_cast<ItemIndex>(i)) << ' '
        << t.item_primary_aspect[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < t.item_signatures.cols(); ++k) out << ' ' << t.item_signatures(i, k);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

GroundTruth load_ground_truth(const std::filesystem::path& path, const InteractionDataset& ds) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string tag;
  Eigen::Index K = 0;
  if (!(in >> tag >> K) || tag != "GROUND_TRUTH" || K <= 0) throw FormatError(path.string() + ": bad header");
  GroundTruth t;
  t.user_profiles = Matrix::Zero(static_cast<Eigen::Index>(ds.num_users()), K);
  t.item_signatures = Matrix::Zero(static_cast<Eigen::Index>(ds.num_items()), K);
  t.item_primary_aspect.assign(ds.num_items(), 0);
  std::string id;
  while (in >> tag >> id) {
    if (tag == "U") {
      auto u = ds.users().find(id);
      Vector row(K);
      for (Eigen::Index k = 0; k < K; ++k) in >> row(k);
      if (u) t.user_profiles.row(*u) = row.transpose();
    } else if (tag == "I") {
      std::size_t primary = 0;
      in >> primary;
      Vector row(K);
      for (Eigen::Index k = 0; k < K; ++k) in >> row(k);
      if (auto i = ds.items().find(id)) {
        t.item_signatures.row(*i) = row.transpose();
        t.item_primary_aspect[*i] = primary;
      }
    } else {
      throw FormatError(path.string() + ": unknown record `" + tag + "`");
    }
    if (!in) throw FormatError(path.string() + ": truncated record for " + id);
  }
  return t;
}

}  // namespace maml
