#pragma once

#include <cstddef>
#include <cstdint>

namespace maml {

// Hyperparameters for a training run. Zero-valued size knobs mean "derive
// from the embedding dimension"; see the resolve_* helpers.
struct TrainConfig {
  std::size_t dim = 64;
  double margin = 1.6;
  std::size_t neg_samples = 8;
  // Attention scale; 0 selects alpha = dim.
  double alpha = 0.0;
  double lambda_f = 7.0;
  double lambda_c = 5.0;
  double learning_rate = 0.001;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 1000;
  std::size_t checkpoint_every = 10;
  std::uint64_t seed = 1;
  bool attention_enabled = true;
  bool alpha_scaling_enabled = true;
  // false selects the unsquared ||F_tv - q|| anchoring term.
  bool squared_feature_loss = true;

  std::size_t hidden1 = 0;        // 0 -> 2 * dim
  std::size_t hidden2 = 0;        // 0 -> dim
  std::size_t fusion_layers = 2;  // >= 1
  std::size_t fusion_hidden = 0;  // 0 -> ceil((text_dim + visual_dim) / 4)

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  std::size_t resolved_hidden1() const { return hidden1 ? hidden1 : 2 * dim; }
  std::size_t resolved_hidden2() const { return hidden2 ? hidden2 : dim; }
  std::size_t resolved_fusion_hidden(std::size_t input_dim) const {
    return fusion_hidden ? fusion_hidden : (input_dim + 3) / 4;
  }
  double resolved_alpha() const {
    if (!alpha_scaling_enabled) return 1.0;
    return alpha > 0.0 ? alpha : static_cast<double>(dim);
  }

  // Throws InvalidInputError when a knob is out of range.
  void validate() const;
};

}  // namespace maml
