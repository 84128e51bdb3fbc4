#include <doctest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "maml/errors.hpp"
#include "maml/model.hpp"

using namespace maml;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v(k++) = x;
  return v;
}

TrainConfig small_cfg(std::size_t f = 8) {
  TrainConfig c;
  c.dim = f;
  return c;
}

}  // namespace

TEST_CASE("scaled softmax") {
  CHECK((scaled_softmax(vec({0.3, 0.3, 0.3, 0.3}), 4.0) - Vector::Ones(4)).norm() < 1e-12);
  const auto a = scaled_softmax(vec({std::log(3.0), 0.0}), 2.0);
  CHECK(a(0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(a(1) == doctest::Approx(0.5).epsilon(1e-12));
  // Large logits do not overflow.
  const auto big = scaled_softmax(vec({1000.0, 1000.0}), 2.0);
  CHECK(big(0) == doctest::Approx(1.0));
}

TEST_CASE("weighted and plain distances") {
  CHECK(weighted_distance(vec({1, 1}), vec({0, 1}), vec({2, 0})) == doctest::Approx(2.0));
  CHECK(cml_distance(vec({3, 4}), vec({0, 0})) == doctest::Approx(5.0));
  CHECK(cml_distance(vec({0.2, 0.1}), vec({0.2, 0.1})) == 0.0);

  Rng rng(17);
  for (int r = 0; r < 200; ++r) {
    Vector x = fixture::gaussian(6, 1, rng), y = fixture::gaussian(6, 1, rng), z = fixture::gaussian(6, 1, rng);
    Vector a = fixture::gaussian(6, 1, rng).cwiseAbs();
    CHECK(weighted_distance(x, y, Vector::Ones(6)) == doctest::Approx(cml_distance(x, y)).epsilon(1e-14));
    CHECK(weighted_distance(x, y, a) == doctest::Approx(weighted_distance(y, x, a)).epsilon(1e-14));
    CHECK(cml_distance(x, y) == cml_distance(y, x));
    CHECK(weighted_distance(x, z, a) <= weighted_distance(x, y, a) + weighted_distance(y, z, a) + 1e-12);
    CHECK(weighted_distance(x, y, 2.5 * a) == doctest::Approx(2.5 * weighted_distance(x, y, a)).epsilon(1e-13));
  }
}

TEST_CASE("init_params") {
  Rng a(5), b(5);
  const ModelDims dims{7, 9, 3, 4};
  const auto p = init_params(small_cfg(), dims, a);
  const auto q = init_params(small_cfg(), dims, b);
  CHECK(p.user_embeddings == q.user_embeddings);
  CHECK(p.attention.w1 == q.attention.w1);
  CHECK(p.fusion.layers.back().weight == q.fusion.layers.back().weight);
  CHECK(p.user_embeddings.rowwise().norm().maxCoeff() <= 1.0 + 1e-12);
  CHECK(p.item_embeddings.rowwise().norm().maxCoeff() <= 1.0 + 1e-12);
  CHECK(p.user_embeddings.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));
  CHECK(p.attention.b1.isZero());
  CHECK(p.attention.w1.rows() == 16);
  CHECK(p.attention.w1.cols() == 24);
  CHECK(p.attention.w2.rows() == 8);
  CHECK(p.attention.v.rows() == 8);
  CHECK(p.fusion.layers.size() == 2);
  CHECK(p.fusion.input_dim() == 7);
  CHECK(p.fusion.layers[0].weight.rows() == 2);
  CHECK(p.fusion.output_dim() == 8);
  CHECK(p.alpha == 8.0);
  CHECK(TrainConfig{}.dim == 64);

  auto off = small_cfg();
  off.alpha_scaling_enabled = false;
  CHECK(init_params(off, dims, a).alpha == 1.0);
  auto bad = small_cfg(0);
  CHECK_THROWS_AS(init_params(bad, dims, a), InvalidInputError);
}

TEST_CASE("fusion forward") {
  FusionParams fp;
  SUBCASE("zero network") {
    fp.layers.push_back({Matrix::Zero(3, 5), Vector::Zero(3)});
    CHECK(fuse_features(vec({1, -2}), vec({3, 4, 5}), fp).isZero());
  }
  SUBCASE("selecting the text block") {
    Matrix w = Matrix::Zero(2, 5);
    w(0, 0) = 1;
    w(1, 1) = 1;
    fp.layers.push_back({w, Vector::Zero(2)});
    CHECK(fuse_features(vec({0.25, 2}), vec({-3, 4, 5}), fp) == vec({0.25, 2}));
  }
  SUBCASE("matches a scalar-loop trace") {
    Rng rng(8);
    TrainConfig cfg = small_cfg(4);
    auto p = init_params(cfg, {2, 3, 3, 5}, rng);
    for (auto& l : p.fusion.layers) l.bias = fixture::gaussian(l.bias.size(), 1, rng, 0.3);
    FeatureStore fs(fixture::gaussian(3, 3, rng), fixture::gaussian(3, 5, rng));
    for (ItemIndex i = 0; i < 3; ++i) {
      double nearest = 1e9;
      const auto expected = oracle::fused(p, fs, i, nearest);
      const auto got = fuse_features(fs.text().row(i).transpose(), fs.visual().row(i).transpose(), p.fusion);
      for (std::size_t k = 0; k < expected.size(); ++k) CHECK(got(static_cast<Eigen::Index>(k)) == doctest::Approx(expected[k]).epsilon(1e-13));
    }
  }
  SUBCASE("dimension mismatch") {
    fp.layers.push_back({Matrix::Zero(3, 5), Vector::Zero(3)});
    CHECK_THROWS_AS(fuse_features(vec({1}), vec({3, 4, 5}), fp), InvalidInputError);
  }
}

TEST_CASE("attention forward") {
  Rng rng(21);
  const auto t = fixture::tiny_instance(21);
  const auto& p = t.params;
  FusedFeatureCache fused(p, t.features);
  for (UserIndex u = 0; u < 5; ++u)
    for (ItemIndex i = 0; i < 6; ++i) {
      const auto a = attention_weights(p, fused, u, i);
      CHECK(a.sum() == doctest::Approx(p.alpha).epsilon(1e-12));
      CHECK(a.minCoeff() > 0.0);
      double nearest = 1e9;
      const auto pu = oracle::row(p.user_embeddings, u), qi = oracle::row(p.item_embeddings, i);
      const auto expected = oracle::attention(p, pu, qi, oracle::fused(p, t.features, i, nearest), nearest);
      for (std::size_t k = 0; k < expected.size(); ++k) CHECK(a(static_cast<Eigen::Index>(k)) == doctest::Approx(expected[k]).epsilon(1e-12));
      CHECK(distance_sq(p, fused, u, i) == doctest::Approx(oracle::dist_sq(p, t.features, u, i, nearest)).epsilon(1e-12));
    }
  SUBCASE("non-finite input") {
    auto bad = p;
    bad.user_embeddings(0, 0) = std::numeric_limits<double>::infinity();
    FusedFeatureCache f2(bad, t.features);
    CHECK_THROWS_AS(attention_weights(bad, f2, 0, 0), NumericalError);
  }
  SUBCASE("disabled attention is the plain metric") {
    auto plain = p;
    plain.attention_enabled = false;
    FusedFeatureCache f2(plain, t.features);
    CHECK(attention_weights(plain, f2, 1, 2) == Vector::Ones(8));
    const Vector d = plain.user_embeddings.row(1) - plain.item_embeddings.row(2);
    CHECK(distance(plain, f2, 1, 2) == doctest::Approx(d.norm()).epsilon(1e-14));
  }
}

TEST_CASE("score_all_items") {
  const auto t = fixture::tiny_instance(33);
  FusedFeatureCache fused(t.params, t.features);
  std::vector<ItemIndex> none, some{1, 4}, all{0, 1, 2, 3, 4, 5};
  CHECK(score_all_items(t.params, fused, 2, all).empty());
  const auto ranked = score_all_items(t.params, fused, 2, none);
  REQUIRE(ranked.size() == 6);
  for (std::size_t k = 1; k < ranked.size(); ++k) CHECK(ranked[k - 1].distance <= ranked[k].distance);
  // Brute-force top-1.
  double best = 1e300;
  ItemIndex arg = 0;
  for (ItemIndex i = 0; i < 6; ++i) {
    double nearest = 1e9;
    const double d = oracle::dist_sq(t.params, t.features, 2, i, nearest);
    if (d < best) best = d, arg = i;
  }
  CHECK(ranked.front().item == arg);
  const auto partial = score_all_items(t.params, fused, 2, some);
  CHECK(partial.size() == 4);
  for (const auto& s : partial) CHECK((s.item != 1 && s.item != 4));

  SUBCASE("ties fall back to item order") {
    auto flat = t.params;
    flat.attention_enabled = false;
    flat.item_embeddings.setZero();
    FusedFeatureCache f2(flat, t.features);
    const auto r = score_all_items(flat, f2, 0, none);
    for (std::size_t k = 0; k < r.size(); ++k) CHECK(r[k].item == k);
  }
}

TEST_CASE("network tensor views cover every network parameter") {
  const auto t = fixture::tiny_instance(2);
  std::size_t n = 0;
  for (const auto& v : network_tensors(t.params)) n += v.values.size();
  std::size_t expected = static_cast<std::size_t>(t.params.attention.w1.size() + t.params.attention.b1.size() +
                                                  t.params.attention.w2.size() + t.params.attention.b2.size() +
                                                  t.params.attention.v.size());
  for (const auto& l : t.params.fusion.layers) expected += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  CHECK(n == expected);
}
