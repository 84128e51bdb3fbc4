#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "maml/errors.hpp"
#include "maml/loss.hpp"

using namespace maml;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> xs) {
  Matrix m(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(xs.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : xs) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

// Two users, two items, f=2, plain metric so distances are easy to set by hand.
ModelParams plain_model(const Matrix& users, const Matrix& items) {
  TrainConfig cfg;
  cfg.dim = static_cast<std::size_t>(users.cols());
  cfg.attention_enabled = false;
  Rng rng(1);
  auto p = init_params(cfg, {static_cast<std::size_t>(users.rows()), static_cast<std::size_t>(items.rows()), 1, 1}, rng);
  p.user_embeddings = users;
  p.item_embeddings = items;
  return p;
}

}  // namespace

TEST_CASE("hinge") {
  CHECK(hinge_term(0.5, 1.0, 0.2) == 0.0);
  CHECK(hinge_term(1.0, 0.5, 0.5) == doctest::Approx(1.25));
  CHECK(hinge_term(0.7, 0.7, 0.3) == doctest::Approx(0.3));
  double prev = 1e9;
  for (double dn = 0.0; dn < 2.0; dn += 0.05) {
    const double h = hinge_term(0.8, dn, 1.0);
    CHECK(h >= 0.0);
    CHECK(h <= prev);
    prev = h;
  }
}

TEST_CASE("rank estimate and warp weight") {
  CHECK(approximate_rank(100, 2, 10) == 20);
  CHECK(approximate_rank(100, 0, 10) == 0);
  CHECK(approximate_rank(100, 10, 10) == 100);
  CHECK(approximate_rank(30, 1, 7) == 4);
  CHECK_THROWS_AS(approximate_rank(30, 0, 0), InvalidInputError);
  CHECK(warp_weight(0) == 0.0);
  CHECK(warp_weight(9) == doctest::Approx(2.302585).epsilon(1e-6));
  for (std::size_t r = 1; r < 50; ++r) CHECK(warp_weight(r - 1) <= warp_weight(r));
}

TEST_CASE("estimate_rank is order invariant") {
  const auto t = fixture::tiny_instance(4);
  FusedFeatureCache fused(t.params, t.features);
  std::vector<ItemIndex> negs{1, 2, 3, 5, 2}, rev(negs.rbegin(), negs.rend());
  const auto a = estimate_rank(t.params, fused, 0, 0, negs, 0.8);
  const auto b = estimate_rank(t.params, fused, 0, 0, rev, 0.8);
  CHECK(a.rank == b.rank);
  CHECK(a.impostors.size() == b.impostors.size());
  CHECK(warp_weight(a.rank) == warp_weight(b.rank));
}

TEST_CASE("feature loss") {
  Vector zero = Vector::Zero(2), ones = Vector::Ones(2);
  CHECK(feature_loss(ones, ones) == 0.0);
  CHECK(feature_loss(zero, ones) == doctest::Approx(2.0));
  CHECK(feature_loss(zero, ones, false) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(feature_loss(zero, Vector::Ones(3)), InvalidInputError);
}

TEST_CASE("covariance loss") {
  CHECK(covariance_loss(rows({{1, 0}, {-1, 0}})) == doctest::Approx(0.0));
  CHECK(covariance_loss(rows({{1, 1}, {-1, -1}})) == doctest::Approx(1.0));
  CHECK_THROWS_AS(covariance_loss(rows({{1, 1}})), InvalidInputError);

  Rng rng(6);
  for (int r = 0; r < 20; ++r) {
    Matrix y = fixture::gaussian(7, 4, rng);
    const double base = covariance_loss(y);
    CHECK(base >= 0.0);
    Matrix shifted = y.rowwise() + fixture::gaussian(1, 4, rng).row(0);
    CHECK(covariance_loss(shifted) == doctest::Approx(base).epsilon(1e-10));
    Matrix swapped = y;
    swapped.row(0).swap(swapped.row(5));
    CHECK(covariance_loss(swapped) == doctest::Approx(base).epsilon(1e-12));
    std::vector<std::vector<double>> as_rows;
    for (Eigen::Index k = 0; k < y.rows(); ++k) as_rows.push_back(oracle::row(y, k));
    CHECK(base == doctest::Approx(oracle::covariance(as_rows)).epsilon(1e-12));
  }
  // Independent coordinates over a full factorial design have zero covariance.
  CHECK(covariance_loss(rows({{1, 1}, {1, -1}, {-1, 1}, {-1, -1}})) == doctest::Approx(0.0));
}

TEST_CASE("batch ranking loss") {
  SUBCASE("one positive, one negative, WARP weight from the sample") {
    // d_pos = 1, d_neg = 0.5, m = 0.5 -> hinge 1.25; M = N = 1 over 10 items -> rank 10.
    Matrix users = rows({{0, 0}});
    Matrix items = Matrix::Zero(10, 2);
    items.row(0) << 1, 0;
    items.row(1) << 0.5, 0;
    for (int k = 2; k < 10; ++k) items.row(k) << 0, 0.9;
    auto p = plain_model(users, items);
    FeatureStore fs(Matrix::Zero(10, 1), Matrix::Zero(10, 1));
    FusedFeatureCache fused(p, fs);
    Batch batch{{0, 0, {1}}};
    const auto loss = batch_ranking_loss(p, fused, batch, 0.5);
    CHECK(loss.examples[0].rank == 10);
    CHECK(loss.value == doctest::Approx(1.25 * std::log(11.0)));
  }
  SUBCASE("no impostors") {
    auto p = plain_model(rows({{0, 0}}), rows({{0.1, 0}, {1, 0}, {0, -1}}));
    FeatureStore fs(Matrix::Zero(3, 1), Matrix::Zero(3, 1));
    FusedFeatureCache fused(p, fs);
    const auto loss = batch_ranking_loss(p, fused, {{0, 0, {1, 2}}}, 0.2);
    CHECK(loss.value == 0.0);
    CHECK(loss.examples[0].impostors == 0);
  }
  SUBCASE("matches the scalar-loop objective") {
    const auto t = fixture::tiny_instance(12);
    FusedFeatureCache fused(t.params, t.features);
    const auto lib = batch_ranking_loss(t.params, fused, t.batch, t.cfg.margin, std::span<const double>(t.weights));
    const auto ref = oracle::objective(t.params, t.features, t.batch, t.cfg.margin, t.weights, {1, 0, 0});
    CHECK(lib.value == doctest::Approx(ref.l_m).epsilon(1e-12));
  }
  SUBCASE("an example without negatives is rejected") {
    const auto t = fixture::tiny_instance(12);
    FusedFeatureCache fused(t.params, t.features);
    CHECK_THROWS_AS(batch_ranking_loss(t.params, fused, {{0, 0, {}}}, 1.0), InvalidInputError);
  }
}

TEST_CASE("total loss") {
  const auto t = fixture::tiny_instance(13);
  auto cfg = t.cfg;
  SUBCASE("weights") {
    cfg.lambda_f = 0;
    cfg.lambda_c = 0;
    const auto l = total_loss(t.params, t.features, t.batch, cfg);
    CHECK(l.total == l.l_m);
    cfg.lambda_f = 3;
    const auto a = total_loss(t.params, t.features, t.batch, cfg);
    cfg.lambda_f = 6;
    const auto b = total_loss(t.params, t.features, t.batch, cfg);
    CHECK(b.total - b.l_m == doctest::Approx(2 * (a.total - a.l_m)).epsilon(1e-14));
    CHECK(TrainConfig{}.lambda_c == 5.0);
    CHECK(TrainConfig{}.lambda_f == 7.0);
  }
  SUBCASE("distinct items count once") {
    Batch twice = {t.batch[0], t.batch[0]};
    Batch once = {t.batch[0]};
    const auto a = total_loss(t.params, t.features, twice, cfg);
    const auto b = total_loss(t.params, t.features, once, cfg);
    CHECK(a.l_f == doctest::Approx(b.l_f));
    CHECK(b.l_c == 0.0);
  }
  SUBCASE("perfect model has zero loss") {
    // Orthogonal one-hot layout: each user sits on its positive item, items
    // are mutually far, and the fused features equal the item vectors.
    TrainConfig c;
    c.dim = 2;
    c.margin = 0.5;
    c.attention_enabled = false;
    Rng rng(3);
    auto p = init_params(c, {2, 2, 2, 1}, rng);
    p.user_embeddings << 1, 0, 0, 1;
    p.item_embeddings << 1, 0, 0, 1;
    p.fusion.layers.assign(1, {Matrix::Identity(2, 3), Vector::Zero(2)});
    FeatureStore fs(Matrix::Identity(2, 2), Matrix::Zero(2, 1));
    Batch b{{0, 0, {1}}, {1, 1, {0}}};
    const auto l = total_loss(p, fs, b, c, ObjectiveScales{1, 7, 5});
    CHECK(l.l_m == 0.0);
    CHECK(l.l_f == 0.0);
    CHECK(l.l_c == doctest::Approx(0.125));  // rows (1,0),(0,1) are anti-correlated
    // With a 4-row factorial batch the covariance vanishes too.
    auto q = p;
    q.user_embeddings.resize(4, 2);
    q.user_embeddings << 0.5, 0.5, 0.5, -0.5, -0.5, 0.5, -0.5, -0.5;
    q.item_embeddings = q.user_embeddings;
    q.fusion.layers.assign(1, {Matrix::Zero(2, 3), Vector::Zero(2)});
    FeatureStore fs4(Matrix::Zero(4, 2), Matrix::Zero(4, 1));
    Batch perfect{{0, 0, {3}}, {1, 1, {2}}, {2, 2, {1}}, {3, 3, {0}}};
    const auto z = total_loss(q, fs4, perfect, c, ObjectiveScales{1, 0, 5});
    CHECK(z.l_m == 0.0);
    CHECK(z.l_c == doctest::Approx(0.0));
    CHECK(z.total == doctest::Approx(0.0));
  }
  SUBCASE("non-finite total") {
    auto bad = t.params;
    bad.item_embeddings(t.batch[0].item, 0) = std::numeric_limits<double>::quiet_NaN();
    bad.attention_enabled = false;
    CHECK_THROWS_AS(total_loss(bad, t.features, t.batch, cfg), NumericalError);
  }
}

TEST_CASE("objective scales") {
  TrainConfig c;
  auto s = ObjectiveScales::from(c);
  CHECK(s.feature == 7.0);
  CHECK(s.covariance == 5.0);
  c.attention_enabled = false;
  CHECK(ObjectiveScales::from(c).feature == 0.0);
}
