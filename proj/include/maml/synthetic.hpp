#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "maml/data.hpp"

namespace maml {

struct SyntheticConfig {
  std::size_t n_users = 200;
  std::size_t n_items = 300;
  std::size_t n_aspects = 8;
  std::size_t interactions_per_user = 20;
  double noise = 0.2;
  std::size_t text_dim = 32;
  std::size_t visual_dim = 64;
  std::uint64_t seed = 1;
};

// Latent structure the generator sampled from.
struct GroundTruth {
  // n_users x n_aspects, each row a sparse distribution over aspects.
  Matrix user_profiles;
  // n_items x n_aspects, non-negative aspect signatures.
  Matrix item_signatures;
  // argmax of each item signature.
  std::vector<std::size_t> item_primary_aspect;

  // Attention-weighted affinity of a user for an item.
  double affinity(UserIndex u, ItemIndex i) const;
};

struct SyntheticData {
  InteractionDataset interactions;
  FeatureStore features;
  GroundTruth truth;
};

// Users attend to 1-3 aspects; each item is dominated by one primary aspect.
// A noise fraction of every user's interactions is drawn uniformly at random;
// the rest are drawn without replacement, proportionally to affinity, from the
// items whose affinity exceeds that user's median. Item features are random
// linear images of the signatures plus Gaussian noise scaled by `noise`.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

void write_ground_truth(const std::filesystem::path& path, const SyntheticData& data);
GroundTruth load_ground_truth(const std::filesystem::path& path, const InteractionDataset& ds);

}  // namespace maml
