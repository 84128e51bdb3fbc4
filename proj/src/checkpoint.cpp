#include "maml/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "maml/errors.hpp"

namespace maml {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& source) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw CheckpointError(source + ": truncated checkpoint");
  return value;
}

void put_tensor(std::ostream& out, const double* data, Eigen::Index n) {
  for (Eigen::Index k = 0; k < n; ++k) put(out, static_cast<float>(data[k]));
}

void get_tensor(std::istream& in, double* data, Eigen::Index n, const std::string& source) {
  for (Eigen::Index k = 0; k < n; ++k) {
    float v = get<float>(in, source);
    if (!std::isfinite(v)) throw CheckpointError(source + ": non-finite parameter");
    data[k] = v;
  }
}

// Guards allocation against corrupt size fields.
std::uint64_t checked_dim(std::uint64_t v, const std::string& source) {
  if (v == 0 || v > (1ull << 26)) throw CheckpointError(source + ": implausible dimension " + std::to_string(v));
  return v;
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParams& params) {
  const auto& a = params.attention;
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, params.num_users());
  put<std::uint64_t>(out, params.num_items());
  put<std::uint64_t>(out, params.dim());
  put<std::uint64_t>(out, static_cast<std::uint64_t>(a.w1.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(a.w2.rows()));
  put<std::uint64_t>(out, params.text_dim);
  put<std::uint64_t>(out, params.visual_dim);
  put<std::uint64_t>(out, params.fusion.layers.size());
  put<std::uint64_t>(out, params.fusion.input_dim());
  for (const auto& layer : params.fusion.layers) put<std::uint64_t>(out, static_cast<std::uint64_t>(layer.weight.rows()));
  put<float>(out, static_cast<float>(params.alpha));
  put<std::uint32_t>(out, params.attention_enabled ? 1u : 0u);
  put_tensor(out, params.user_embeddings.data(), params.user_embeddings.size());
  put_tensor(out, params.item_embeddings.data(), params.item_embeddings.size());
  put_tensor(out, a.w1.data(), a.w1.size());
  put_tensor(out, a.b1.data(), a.b1.size());
  put_tensor(out, a.w2.data(), a.w2.size());
  put_tensor(out, a.b2.data(), a.b2.size());
  put_tensor(out, a.v.data(), a.v.size());
  for (const auto& layer : params.fusion.layers) {
    put_tensor(out, layer.weight.data(), layer.weight.size());
    put_tensor(out, layer.bias.data(), layer.bias.size());
  }
  if (!out) throw IoError("checkpoint write failed");
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    save_checkpoint(out, params);
  }
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(std::istream& in, const std::string& source) {
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw CheckpointError(source + ": bad checkpoint magic");
  auto version = get<std::uint32_t>(in, source);
  if (version != kCheckpointVersion)
    throw CheckpointError(source + ": unsupported checkpoint version " + std::to_string(version));
  const auto n_users = checked_dim(get<std::uint64_t>(in, source), source);
  const auto n_items = checked_dim(get<std::uint64_t>(in, source), source);
  const auto f = checked_dim(get<std::uint64_t>(in, source), source);
  const auto h1 = checked_dim(get<std::uint64_t>(in, source), source);
  const auto h2 = checked_dim(get<std::uint64_t>(in, source), source);
  const auto text_dim = checked_dim(get<std::uint64_t>(in, source), source);
  const auto visual_dim = checked_dim(get<std::uint64_t>(in, source), source);
  const auto input_dim = text_dim + visual_dim;
  const auto n_layers = checked_dim(get<std::uint64_t>(in, source), source);
  if (n_layers > 64) throw CheckpointError(source + ": implausible fusion depth");
  std::vector<std::uint64_t> widths(n_layers + 1);
  for (auto& w : widths) w = checked_dim(get<std::uint64_t>(in, source), source);
  if (widths.front() != input_dim || widths.back() != f)
    throw CheckpointError(source + ": fusion layer widths inconsistent with dims");

  ModelParams p;
  p.text_dim = text_dim;
  p.visual_dim = visual_dim;
  p.alpha = get<float>(in, source);
  p.attention_enabled = get<std::uint32_t>(in, source) != 0;
  if (!(p.alpha > 0.0)) throw CheckpointError(source + ": alpha must be positive");

  // Refuse to allocate more than the stream can possibly hold.
  std::uint64_t floats = (n_users + n_items) * f + h1 * 3 * f + h1 + h2 * h1 + h2 + f * h2;
  for (std::size_t l = 0; l < n_layers; ++l) floats += widths[l + 1] * (widths[l] + 1);
  const auto here = in.tellg();
  if (here != std::istream::pos_type(-1)) {
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    in.seekg(here);
    if (static_cast<std::uint64_t>(end - here) < floats * sizeof(float))
      throw CheckpointError(source + ": truncated checkpoint");
  }

  auto I = [](std::uint64_t v) { return static_cast<Eigen::Index>(v); };
  p.user_embeddings.resize(I(n_users), I(f));
  p.item_embeddings.resize(I(n_items), I(f));
  auto& a = p.attention;
  a.w1.resize(I(h1), I(3 * f));
  a.b1.resize(I(h1));
  a.w2.resize(I(h2), I(h1));
  a.b2.resize(I(h2));
  a.v.resize(I(f), I(h2));
  get_tensor(in, p.user_embeddings.data(), p.user_embeddings.size(), source);
  get_tensor(in, p.item_embeddings.data(), p.item_embeddings.size(), source);
  get_tensor(in, a.w1.data(), a.w1.size(), source);
  get_tensor(in, a.b1.data(), a.b1.size(), source);
  get_tensor(in, a.w2.data(), a.w2.size(), source);
  get_tensor(in, a.b2.data(), a.b2.size(), source);
  get_tensor(in, a.v.data(), a.v.size(), source);
  for (std::size_t l = 0; l < n_layers; ++l) {
    DenseLayer layer{Matrix(I(widths[l + 1]), I(widths[l])), Vector(I(widths[l + 1]))};
    get_tensor(in, layer.weight.data(), layer.weight.size(), source);
    get_tensor(in, layer.bias.data(), layer.bias.size(), source);
    p.fusion.layers.push_back(std::move(layer));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError(source + ": trailing bytes after checkpoint");
  return p;
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return load_checkpoint(in, path.string());
}

ModelParams quantized(const ModelParams& params) {
  ModelParams q = params;
  auto round = [](auto& m) { m = m.template cast<float>().template cast<double>(); };
  round(q.user_embeddings);
  round(q.item_embeddings);
  round(q.attention.w1);
  round(q.attention.b1);
  round(q.attention.w2);
  round(q.attention.b2);
  round(q.attention.v);
  for (auto& layer : q.fusion.layers) {
    round(layer.weight);
    round(layer.bias);
  }
  q.alpha = static_cast<float>(q.alpha);
  return q;
}

}  // namespace maml
