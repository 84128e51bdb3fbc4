#include <doctest.h>

#include "fixtures.hpp"
#include "maml/errors.hpp"

using namespace maml;

namespace {

const oracle::Scales kTerms[] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 7, 5}};

}  // namespace

TEST_CASE("reference objective agrees with total_loss") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto t = fixture::tiny_instance(seed);
    const auto ref = oracle::objective(t.params, t.features, t.batch, t.cfg.margin, t.weights, {1, 7, 5});
    const auto lib = total_loss(t.params, t.features, t.batch, t.cfg, {1, 7, 5}, std::span<const double>(t.weights));
    CHECK(lib.l_m == doctest::Approx(ref.l_m).epsilon(1e-12));
    CHECK(lib.l_f == doctest::Approx(ref.l_f).epsilon(1e-12));
    CHECK(lib.l_c == doctest::Approx(ref.l_c).epsilon(1e-12));
    CHECK(lib.total == doctest::Approx(ref.total).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match central differences per term") {
  std::size_t accepted = 0;
  for (std::uint64_t seed = 100; accepted < 8 && seed < 200; ++seed) {
    const auto t = fixture::tiny_instance(seed);
    for (const auto& s : kTerms) {
      const auto r = fixture::fd_check(t, s);
      if (!r.accepted) break;
      INFO("seed " << seed << " worst " << r.check.worst_name << " excess " << r.check.worst_excess);
      CHECK(r.check.mismatches == 0);
    }
    if (fixture::fd_check(t, kTerms[0]).accepted) ++accepted;
  }
  CHECK(accepted == 8);
}

TEST_CASE("plain metric gradients match central differences") {
  std::size_t accepted = 0;
  for (std::uint64_t seed = 7; accepted < 4 && seed < 100; ++seed) {
    const auto r = fixture::fd_check(fixture::tiny_instance(seed, false), {1, 0, 5});
    if (!r.accepted) continue;
    ++accepted;
    INFO("seed " << seed << " worst " << r.check.worst_name);
    CHECK(r.check.mismatches == 0);
  }
  CHECK(accepted == 4);
}

TEST_CASE("networks receive no gradient with attention off") {
  const auto t = fixture::tiny_instance(3, false);
  Gradients g = Gradients::zeros_like(t.params);
  compute_gradients(t.params, t.features, t.batch, t.cfg, ObjectiveScales::from(t.cfg), g);
  for (const auto& tensor : network_tensors(std::as_const(g.d)))
    for (double v : tensor.values) CHECK(v == 0.0);
}

TEST_CASE("gradients touch only batch rows") {
  const auto t = fixture::tiny_instance(11);
  Gradients g = Gradients::zeros_like(t.params);
  compute_gradients(t.params, t.features, t.batch, t.cfg, ObjectiveScales::from(t.cfg), g);
  for (Eigen::Index u = 0; u < g.d.user_embeddings.rows(); ++u) {
    bool in_batch = false;
    for (const auto& ex : t.batch) in_batch |= ex.user == u;
    if (!in_batch) CHECK(g.d.user_embeddings.row(u).squaredNorm() == 0.0);
  }
}

TEST_CASE("non-finite parameters raise a numerical error") {
  auto t = fixture::tiny_instance(5);
  t.params.attention.w1(0, 0) = std::numeric_limits<double>::quiet_NaN();
  Gradients g = Gradients::zeros_like(t.params);
  CHECK_THROWS_AS(compute_gradients(t.params, t.features, t.batch, t.cfg, ObjectiveScales::from(t.cfg), g),
                  NumericalError);
}
