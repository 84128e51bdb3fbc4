#pragma once

#include <filesystem>
#include <iosfwd>

#include "maml/model.hpp"

namespace maml {

// Binary checkpoint layout (little-endian):
//   "MAMLCKPT" magic, u32 version,
//   u64 num_users, num_items, f, h1, h2, text_dim, visual_dim,
//   u64 fusion layer count L, then L+1 u64 layer widths (input first),
//   f32 alpha, u32 attention flag,
//   then row-major f32 tensors: users, items, w1, b1, w2, b2, v,
//   and each fusion layer's weight and bias.
inline constexpr char kCheckpointMagic[8] = {'M', 'A', 'M', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(std::ostream& out, const ModelParams& params);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(std::istream& in, const std::string& source = "<stream>");
ModelParams load_checkpoint(const std::filesystem::path& path);

// Rounds every parameter through 32-bit float, i.e. what a save/load cycle
// would produce.
ModelParams quantized(const ModelParams& params);

}  // namespace maml
