#include "maml/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "maml/errors.hpp"

namespace maml {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_size(std::string_view s, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

// Calls fn(line_number, line) for each non-empty, non-comment line.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = strip_cr(text.substr(start, end - start));
    if (!line.empty() && line.front() != '#') fn(line_no, line);
    if (end == text.size()) break;
    start = end + 1;
  }
}

}  // namespace

std::uint32_t IdMap::intern(std::string_view id) {
  std::string key(id);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  auto idx = static_cast<std::uint32_t>(names_.size());
  index_.emplace(key, idx);
  names_.push_back(std::move(key));
  return idx;
}

std::optional<std::uint32_t> IdMap::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

InteractionDataset::InteractionDataset(IdMap users, IdMap items, std::vector<std::vector<ItemIndex>> per_user)
    : users_(std::move(users)), items_(std::move(items)) {
  if (per_user.size() != users_.size()) throw InvalidInputError("per-user list count does not match user map");
  per_user_.resize(per_user.size());
  sorted_.resize(per_user.size());
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    auto& sorted = sorted_[u];
    for (ItemIndex i : per_user[u]) {
      if (i >= items_.size()) throw InvalidInputError("item index out of range");
      auto pos = std::lower_bound(sorted.begin(), sorted.end(), i);
      if (pos != sorted.end() && *pos == i) continue;
      sorted.insert(pos, i);
      per_user_[u].push_back(i);
    }
    num_positives_ += per_user_[u].size();
  }
}

bool InteractionDataset::contains(UserIndex u, ItemIndex i) const {
  const auto& s = sorted_.at(u);
  return std::binary_search(s.begin(), s.end(), i);
}

std::vector<Interaction> InteractionDataset::positives() const {
  std::vector<Interaction> out;
  out.reserve(num_positives_);
  for (std::size_t u = 0; u < per_user_.size(); ++u)
    for (ItemIndex i : per_user_[u]) out.push_back({static_cast<UserIndex>(u), i});
  return out;
}

std::vector<std::size_t> InteractionDataset::item_degrees() const {
  std::vector<std::size_t> deg(num_items(), 0);
  for (const auto& items : per_user_)
    for (ItemIndex i : items) ++deg[i];
  return deg;
}

FeatureStore::FeatureStore(Matrix text, Matrix visual) : text_(std::move(text)), visual_(std::move(visual)) {
  if (text_.rows() != visual_.rows()) throw FormatError("text and visual feature row counts differ");
  if (text_.cols() == 0 || visual_.cols() == 0) throw FormatError("feature dimensions must be positive");
  if (!text_.allFinite() || !visual_.allFinite()) throw ValidationError("feature vectors must be finite");
}

Vector FeatureStore::concatenated(ItemIndex i) const {
  Vector out(input_dim());
  out.head(text_dim()) = text_.row(i).transpose();
  out.tail(visual_dim()) = visual_.row(i).transpose();
  return out;
}

InteractionDataset parse_interactions(std::string_view text, const std::string& source) {
  IdMap users, items;
  std::vector<std::vector<ItemIndex>> per_user;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    auto fields = split(line, '\t');
    if (fields.size() < 2 || fields.size() > 4)
      throw ParseError(source, line_no, "expected 2 to 4 tab-separated fields");
    if (fields[0].empty() || fields[1].empty()) throw ParseError(source, line_no, "empty user or item id");
    for (std::size_t f = 2; f < fields.size(); ++f) {
      double ignored;
      if (!parse_double(fields[f], ignored)) throw ParseError(source, line_no, "non-numeric rating or timestamp");
    }
    auto u = users.intern(fields[0]);
    auto i = items.intern(fields[1]);
    if (u == per_user.size()) per_user.emplace_back();
    per_user[u].push_back(i);
  });
  if (per_user.empty()) throw EmptyDatasetError(source + ": no interactions");
  return InteractionDataset(std::move(users), std::move(items), std::move(per_user));
}

InteractionDataset load_interactions(const std::filesystem::path& path) {
  return parse_interactions(read_file(path), path.string());
}

void write_interactions(const std::filesystem::path& path, const InteractionDataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [u, i] : ds.positives()) out << ds.users().name(u) << '\t' << ds.items().name(i) << "\t1\n";
  if (!out) throw IoError("write failed: " + path.string());
}

InteractionDataset filter_k_core(const InteractionDataset& ds, std::size_t k) {
  if (k < 1) throw InvalidInputError("k-core requires k >= 1");
  std::vector<char> user_alive(ds.num_users(), 1), item_alive(ds.num_items(), 1);
  std::vector<std::size_t> user_deg(ds.num_users()), item_deg = ds.item_degrees();
  for (std::size_t u = 0; u < ds.num_users(); ++u) user_deg[u] = ds.items_of(static_cast<UserIndex>(u)).size();

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
      if (!user_alive[u] || user_deg[u] >= k) continue;
      user_alive[u] = 0;
      changed = true;
      for (ItemIndex i : ds.items_of(static_cast<UserIndex>(u)))
        if (item_alive[i]) --item_deg[i];
    }
    for (std::size_t i = 0; i < ds.num_items(); ++i) {
      if (!item_alive[i] || item_deg[i] >= k) continue;
      item_alive[i] = 0;
      changed = true;
    }
    if (!changed) break;
    // Recount user degrees against surviving items.
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
      if (!user_alive[u]) continue;
      std::size_t d = 0;
      for (ItemIndex i : ds.items_of(static_cast<UserIndex>(u))) d += item_alive[i];
      user_deg[u] = d;
    }
  }

  // Item order follows the original index order, which is first-seen order.
  std::vector<ItemIndex> remap(ds.num_items(), 0);
  IdMap users, items;
  for (std::size_t i = 0; i < ds.num_items(); ++i)
    if (item_alive[i]) remap[i] = items.intern(ds.items().name(static_cast<ItemIndex>(i)));
  std::vector<std::vector<ItemIndex>> per_user;
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    if (!user_alive[u]) continue;
    users.intern(ds.users().name(static_cast<UserIndex>(u)));
    auto& list = per_user.emplace_back();
    for (ItemIndex i : ds.items_of(static_cast<UserIndex>(u)))
      if (item_alive[i]) list.push_back(remap[i]);
  }
  if (per_user.empty()) throw EmptyDatasetError("k-core filtering with k=" + std::to_string(k) + " left no interactions");
  return InteractionDataset(std::move(users), std::move(items), std::move(per_user));
}

std::size_t train_count_for(std::size_t n, double train_ratio) {
  auto count = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_ratio));
  return std::clamp<std::size_t>(count, 3, n - 2);
}

SplitPair split_per_user(const InteractionDataset& ds, double train_ratio, Rng& rng) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw InvalidInputError("train ratio must lie in (0, 1)");
  std::vector<std::vector<ItemIndex>> train(ds.num_users()), test(ds.num_users());
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    auto items = ds.items_of(static_cast<UserIndex>(u));
    if (items.size() < 5)
      throw InvalidInputError("user " + ds.users().name(static_cast<UserIndex>(u)) + " has fewer than 5 interactions");
    std::vector<ItemIndex> order(items.begin(), items.end());
    std::shuffle(order.begin(), order.end(), rng);
    auto n_train = train_count_for(order.size(), train_ratio);
    train[u].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    test[u].assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  }
  return {InteractionDataset(ds.users(), ds.items(), std::move(train)),
          InteractionDataset(ds.users(), ds.items(), std::move(test))};
}

SplitPair split_per_user(const InteractionDataset& ds, double train_ratio, std::uint64_t seed) {
  Rng rng(seed);
  return split_per_user(ds, train_ratio, rng);
}

InteractionDataset align_to(const InteractionDataset& reference, const InteractionDataset& other) {
  std::vector<std::vector<ItemIndex>> per_user(reference.num_users());
  for (const auto& [u, i] : other.positives()) {
    auto ru = reference.users().find(other.users().name(u));
    auto ri = reference.items().find(other.items().name(i));
    if (ru && ri) per_user[*ru].push_back(*ri);
  }
  return InteractionDataset(reference.users(), reference.items(), std::move(per_user));
}

FeatureStore parse_features(std::string_view text, const InteractionDataset& ds, const std::string& source) {
  std::size_t text_dim = 0, visual_dim = 0;
  bool have_header = false;
  Matrix tm, vm;
  std::vector<char> seen(ds.num_items(), 0);
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    auto fields = split_ws(line);
    if (fields.empty()) return;
    if (!have_header) {
      if (fields.size() != 3 || fields[0] != "ITEM_FEATURES" || !parse_size(fields[1], text_dim) ||
          !parse_size(fields[2], visual_dim) || text_dim == 0 || visual_dim == 0)
        throw FormatError(source + ":" + std::to_string(line_no) +
                          ": expected header `ITEM_FEATURES <text_dim> <visual_dim>`");
      have_header = true;
      tm = Matrix::Zero(static_cast<Eigen::Index>(ds.num_items()), static_cast<Eigen::Index>(text_dim));
      vm = Matrix::Zero(static_cast<Eigen::Index>(ds.num_items()), static_cast<Eigen::Index>(visual_dim));
      return;
    }
    if (fields.size() != 1 + text_dim + visual_dim)
      throw FormatError(source + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(text_dim + visual_dim) + " values, found " +
                        std::to_string(fields.size() - 1));
    auto idx = ds.items().find(fields[0]);
    std::vector<double> values(text_dim + visual_dim);
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (!parse_double(fields[k + 1], values[k]))
        throw FormatError(source + ":" + std::to_string(line_no) + ": bad number `" + std::string(fields[k + 1]) + "`");
      if (!std::isfinite(values[k]))
        throw ValidationError(source + ":" + std::to_string(line_no) + ": non-finite feature value");
    }
    if (!idx) return;
    for (std::size_t k = 0; k < text_dim; ++k) tm(*idx, static_cast<Eigen::Index>(k)) = values[k];
    for (std::size_t k = 0; k < visual_dim; ++k) vm(*idx, static_cast<Eigen::Index>(k)) = values[text_dim + k];
    seen[*idx] = 1;
  });
  if (!have_header) throw FormatError(source + ": missing ITEM_FEATURES header");
  std::string missing;
  std::size_t n_missing = 0;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i]) continue;
    if (n_missing++ < 10) missing += (missing.empty() ? "" : ", ") + ds.items().name(static_cast<ItemIndex>(i));
  }
  if (n_missing > 0)
    throw CoverageError(source + ": " + std::to_string(n_missing) + " item(s) without features: " + missing +
                        (n_missing > 10 ? ", ..." : ""));
  return FeatureStore(std::move(tm), std::move(vm));
}

FeatureStore load_features(const std::filesystem::path& path, const InteractionDataset& ds) {
  return parse_features(read_file(path), ds, path.string());
}

void write_features(const std::filesystem::path& path, const InteractionDataset& ds, const FeatureStore& fs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ITEM_FEATURES " << fs.text_dim() << ' ' << fs.visual_dim() << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < fs.num_items(); ++i) {
    out << ds.items().name(static_cast<ItemIndex>(i));
    for (Eigen::Index k = 0; k < fs.text().cols(); ++k) out << ' ' << fs.text()(static_cast<Eigen::Index>(i), k);
    for (Eigen::Index k = 0; k < fs.visual().cols(); ++k) out << ' ' << fs.visual()(static_cast<Eigen::Index>(i), k);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<ItemIndex> sample_negatives(const InteractionDataset& train, UserIndex u, std::size_t s, Rng& rng) {
  const std::size_t n_items = train.num_items();
  const std::size_t n_pos = train.items_of(u).size();
  if (n_items < n_pos + s || n_items == n_pos)
    throw InvalidInputError("user " + train.users().name(u) + " has fewer than " + std::to_string(s) +
                            " non-interacted items");
  std::uniform_int_distribution<ItemIndex> pick(0, static_cast<ItemIndex>(n_items - 1));
  std::vector<ItemIndex> out;
  out.reserve(s);
  while (out.size() < s) {
    ItemIndex k = pick(rng);
    if (!train.contains(u, k)) out.push_back(k);
  }
  return out;
}

}  // namespace maml
