#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "maml/types.hpp"

namespace maml {

// Bidirectional map between external string ids and contiguous indices,
// assigned in first-seen order.
class IdMap {
 public:
  std::uint32_t intern(std::string_view id);
  std::optional<std::uint32_t> find(std::string_view id) const;
  const std::string& name(std::uint32_t index) const { return names_.at(index); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// Implicit-feedback interactions: the positive set R and per-user lists R_u.
// Immutable once built.
class InteractionDataset {
 public:
  InteractionDataset() = default;

  // per_user[u] lists the items of user u in insertion order. Duplicates are
  // collapsed (first occurrence wins) and indices are range-checked.
  InteractionDataset(IdMap users, IdMap items, std::vector<std::vector<ItemIndex>> per_user);

  std::size_t num_users() const { return users_.size(); }
  std::size_t num_items() const { return items_.size(); }
  std::size_t num_positives() const { return num_positives_; }
  bool empty() const { return num_positives_ == 0; }

  const IdMap& users() const { return users_; }
  const IdMap& items() const { return items_; }

  std::span<const ItemIndex> items_of(UserIndex u) const { return per_user_.at(u); }
  bool contains(UserIndex u, ItemIndex i) const;

  // All positives, grouped by user in index order, each group in R_u order.
  std::vector<Interaction> positives() const;
  std::vector<std::size_t> item_degrees() const;

 private:
  IdMap users_;
  IdMap items_;
  std::vector<std::vector<ItemIndex>> per_user_;
  std::vector<std::vector<ItemIndex>> sorted_;
  std::size_t num_positives_ = 0;
};

// Train and test share the same id maps; only the positives differ.
struct SplitPair {
  InteractionDataset train;
  InteractionDataset test;
};

// Per-item text and visual feature vectors (F_t,i and F_v,i).
class FeatureStore {
 public:
  FeatureStore() = default;
  FeatureStore(Matrix text, Matrix visual);

  std::size_t num_items() const { return static_cast<std::size_t>(text_.rows()); }
  std::size_t text_dim() const { return static_cast<std::size_t>(text_.cols()); }
  std::size_t visual_dim() const { return static_cast<std::size_t>(visual_.cols()); }
  std::size_t input_dim() const { return text_dim() + visual_dim(); }

  const Matrix& text() const { return text_; }
  const Matrix& visual() const { return visual_; }

  // [F_t,i ; F_v,i]
  Vector concatenated(ItemIndex i) const;

 private:
  Matrix text_;
  Matrix visual_;
};

// Reads `user <TAB> item [<TAB> rating [<TAB> timestamp]]` lines; `#` lines
// and blank lines are skipped.
InteractionDataset load_interactions(const std::filesystem::path& path);
InteractionDataset parse_interactions(std::string_view text, const std::string& source = "<memory>");
void write_interactions(const std::filesystem::path& path, const InteractionDataset& ds);

// Iteratively drops users and items with fewer than k interactions until no
// such user or item is left. Survivors are re-indexed in their original order.
InteractionDataset filter_k_core(const InteractionDataset& ds, std::size_t k);

SplitPair split_per_user(const InteractionDataset& ds, double train_ratio, Rng& rng);
SplitPair split_per_user(const InteractionDataset& ds, double train_ratio, std::uint64_t seed);

// Number of training interactions for a user with n interactions: floor of
// n * ratio, clamped so that at least 3 go to train and 2 to test.
std::size_t train_count_for(std::size_t n, double train_ratio);

// Re-expresses interactions from `other` in the id space of `reference`.
// Pairs whose user or item is unknown to `reference` are dropped.
InteractionDataset align_to(const InteractionDataset& reference, const InteractionDataset& other);

FeatureStore load_features(const std::filesystem::path& path, const InteractionDataset& ds);
FeatureStore parse_features(std::string_view text, const InteractionDataset& ds,
                            const std::string& source = "<memory>");
void write_features(const std::filesystem::path& path, const InteractionDataset& ds, const FeatureStore& fs);

// Draws s items uniformly with replacement from the items u has not
// interacted with in `train`.
std::vector<ItemIndex> sample_negatives(const InteractionDataset& train, UserIndex u, std::size_t s, Rng& rng);

}  // namespace maml
