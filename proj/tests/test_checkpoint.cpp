#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "maml/checkpoint.hpp"
#include "maml/errors.hpp"

using namespace maml;

namespace {

std::string serialize(const ModelParams& p) {
  std::ostringstream os(std::ios::binary);
  save_checkpoint(os, p);
  return os.str();
}

ModelParams parse(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return load_checkpoint(is, "mem.ckpt");
}

}  // namespace

TEST_CASE("checkpoint round trip") {
  const auto t = fixture::tiny_instance(9);
  const auto back = parse(serialize(t.params));
  const auto q = quantized(t.params);
  CHECK(back.user_embeddings == q.user_embeddings);
  CHECK(back.item_embeddings == q.item_embeddings);
  CHECK(back.attention.w1 == q.attention.w1);
  CHECK(back.attention.v == q.attention.v);
  REQUIRE(back.fusion.layers.size() == q.fusion.layers.size());
  for (std::size_t l = 0; l < q.fusion.layers.size(); ++l) {
    CHECK(back.fusion.layers[l].weight == q.fusion.layers[l].weight);
    CHECK(back.fusion.layers[l].bias == q.fusion.layers[l].bias);
  }
  CHECK(back.alpha == q.alpha);
  CHECK(back.text_dim == t.params.text_dim);
  CHECK(back.visual_dim == t.params.visual_dim);
  CHECK(back.attention_enabled);

  // Forward outputs agree within single-precision rounding.
  FusedFeatureCache a(t.params, t.features), b(back, t.features);
  for (UserIndex u = 0; u < 5; ++u)
    for (ItemIndex i = 0; i < 6; ++i) {
      CHECK(distance(back, b, u, i) == doctest::Approx(distance(t.params, a, u, i)).epsilon(1e-5));
      CHECK((attention_weights(back, b, u, i) - attention_weights(t.params, a, u, i)).cwiseAbs().maxCoeff() < 1e-4);
    }
  // A second round trip is lossless.
  CHECK(serialize(back) == serialize(parse(serialize(back))));
}

TEST_CASE("checkpoint keeps the ablation flag") {
  auto t = fixture::tiny_instance(9, false);
  CHECK_FALSE(parse(serialize(t.params)).attention_enabled);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto t = fixture::tiny_instance(9);
  const auto good = serialize(t.params);
  SUBCASE("magic") {
    auto bad = good;
    bad[0] = 'X';
    try {
      parse(bad);
      FAIL("expected a checkpoint error");
    } catch (const CheckpointError& e) {
      CHECK(std::string(e.what()).find("mem.ckpt") != std::string::npos);
    }
  }
  SUBCASE("truncated") { CHECK_THROWS_AS(parse(good.substr(0, good.size() - 3)), CheckpointError); }
  SUBCASE("header only") { CHECK_THROWS_AS(parse(good.substr(0, 40)), CheckpointError); }
  SUBCASE("trailing bytes") { CHECK_THROWS_AS(parse(good + "x"), CheckpointError); }
  SUBCASE("empty") { CHECK_THROWS_AS(parse(""), CheckpointError); }
  SUBCASE("huge dimension") {
    auto bad = good;
    const std::uint64_t big = 1ull << 25;
    std::memcpy(bad.data() + 12, &big, sizeof(big));  // n_users
    CHECK_THROWS_AS(parse(bad), CheckpointError);
  }
  SUBCASE("non-finite value") {
    auto bad = good;
    const float inf = std::numeric_limits<float>::infinity();
    std::memcpy(bad.data() + bad.size() - sizeof(float), &inf, sizeof(inf));
    CHECK_THROWS_AS(parse(bad), CheckpointError);
  }
}

TEST_CASE("checkpoint files") {
  const auto dir = std::filesystem::temp_directory_path() / "maml_test_ckpt";
  std::filesystem::create_directories(dir);
  const auto t = fixture::tiny_instance(10);
  save_checkpoint(dir / "m.ckpt", t.params);
  CHECK_FALSE(std::filesystem::exists(dir / "m.ckpt.tmp"));
  CHECK(load_checkpoint(dir / "m.ckpt").item_embeddings == quantized(t.params).item_embeddings);
  CHECK_THROWS_AS(load_checkpoint(dir / "none.ckpt"), IoError);
}
