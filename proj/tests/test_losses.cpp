#include <cmath>

#include "chrono/losses.hpp"
#include "test_helpers.hpp"

// doctest last: torch's logging macros also define CHECK.
#include "doctest.h"

using namespace chrono;
using namespace chrono::losses;

TEST_CASE("adv_real_term analytic values") {
  CHECK(adv_real_term({0.5, 0.5}) == doctest::Approx(std::log(0.5)).epsilon(1e-9));
  CHECK(adv_real_term({1.0 - 1e-9}) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(adv_real_term({0.9, 0.1}) ==
        doctest::Approx((std::log(0.9) + std::log(0.1)) / 2).epsilon(1e-9));
  CHECK(adv_real_term({0.5, 0.5}) == doctest::Approx(-0.6931).epsilon(1e-3));
}

TEST_CASE("adv_fake_term analytic values") {
  CHECK(adv_fake_term({0.5}) == doctest::Approx(std::log(0.5)).epsilon(1e-9));
  CHECK(adv_fake_term({1e-9}) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(adv_fake_term({0.25, 0.75}) == doctest::Approx(-0.8370).epsilon(1e-3));
}

TEST_CASE("score domain is validated") {
  CHECK_THROWS_AS(adv_real_term({0.0}), Error);
  CHECK_THROWS_AS(adv_real_term({1.0}), Error);
  CHECK_THROWS_AS(adv_fake_term({-0.1}), Error);
  CHECK_THROWS_AS(adv_fake_term({2.0}), Error);
  CHECK_THROWS_AS(adv_real_term({}), Error);
  try {
    adv_real_term({0.0});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DomainError);
  }
}

TEST_CASE("literal paper form of the fake term") {
  CHECK(adv_fake_term({0.5}, /*literal_form=*/true) ==
        doctest::Approx(1.0 - std::log(0.5)).epsilon(1e-9));
}

TEST_CASE("loss_uncond composes real and fake terms") {
  auto report = loss_uncond(DatasetDomain::Labeled, {0.5}, {0.5});
  CHECK(report.value == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-9));
  CHECK(report.value == doctest::Approx(-1.3863).epsilon(1e-3));
  CHECK(report.term_breakdown.at("real") + report.term_breakdown.at("fake") ==
        doctest::Approx(report.value).epsilon(1e-12));

  auto ideal = loss_uncond(DatasetDomain::Unlabeled, {1.0 - 1e-9}, {1e-9});
  CHECK(std::abs(ideal.value) < 1e-6);

  // At 0.5 both terms coincide, so swapping real/fake lists changes nothing.
  auto swapped = loss_uncond(DatasetDomain::Labeled, {0.5}, {0.5});
  CHECK(swapped.value == doctest::Approx(report.value));
}

TEST_CASE("loss_cond analytic values") {
  auto report = loss_cond(0.5, 0.5, 0.5);
  CHECK(report.value == doctest::Approx(3.0 * std::log(0.5)).epsilon(1e-9));
  CHECK(report.value == doctest::Approx(-2.0794).epsilon(1e-3));

  auto ideal = loss_cond(1.0 - 1e-9, 1e-9, 1e-9);
  CHECK(std::abs(ideal.value) < 1e-5);

  auto mixed = loss_cond(0.9, 0.2, 0.3);
  CHECK(mixed.value ==
        doctest::Approx(std::log(0.9) + std::log(0.8) + std::log(0.7)).epsilon(1e-9));
  CHECK(mixed.value == doctest::Approx(-0.6851).epsilon(1e-3));
}

TEST_CASE("loss reports balance their breakdown") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto report = loss_cond(rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99),
                            rng.uniform(0.01, 0.99));
    double sum = 0;
    for (const auto& [k, v] : report.term_breakdown) sum += v;
    CHECK(std::abs(sum - report.value) < 1e-6);
  }
}

TEST_CASE("losses stay finite at clamped extremes") {
  const double eps = kScoreEps;
  CHECK(std::isfinite(adv_real_term({eps, 1.0 - eps})));
  CHECK(std::isfinite(adv_fake_term({eps, 1.0 - eps})));
  auto t = adv_fake_term_t(torch::tensor({0.0f, 1.0f}));  // sigmoid saturation
  CHECK(std::isfinite(t.item<double>()));
}

TEST_CASE("loss_rec examples and elementwise oracle") {
  ImageGrid a(4, 5, 3, 0.2f);
  CHECK(loss_rec(a, a) == 0.0);

  ImageGrid b(4, 5, 3, 0.3f);
  CHECK(loss_rec(b, a) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(loss_rec(a, b) == doctest::Approx(0.1).epsilon(1e-6));

  Rng rng(9);
  auto x = testutil::random_image(6, 7, rng);
  auto y = testutil::random_image(6, 7, rng);
  // Independent elementwise accumulation.
  double acc = 0;
  for (size_t i = 0; i < x.values.size(); ++i) acc += std::abs(x.values[i] - y.values[i]);
  acc /= static_cast<double>(x.values.size());
  CHECK(loss_rec(x, y) == doctest::Approx(acc).epsilon(1e-12));

  ImageGrid wrong(5, 5, 3);
  CHECK_THROWS_AS(loss_rec(x, wrong), Error);
}

TEST_CASE("loss_rec is a metric on small grids") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = testutil::random_image(3, 3, rng);
    auto y = testutil::random_image(3, 3, rng);
    auto z = testutil::random_image(3, 3, rng);
    CHECK(loss_rec(x, y) == doctest::Approx(loss_rec(y, x)).epsilon(1e-12));
    CHECK(loss_rec(x, x) == 0.0);
    if (x.values != y.values) CHECK(loss_rec(x, y) > 0.0);
    CHECK(loss_rec(x, z) <= loss_rec(x, y) + loss_rec(y, z) + 1e-12);
  }
}

TEST_CASE("total_objective weighting") {
  LossReport uncond{"uncond_labeled", -1.0, {}};
  LossReport cond{"cond", -2.0, {}};
  LossReport rec{"rec", 0.4, {}};

  auto total = total_objective({uncond, cond, rec}, 0.5);
  CHECK(total.value == doctest::Approx(-1.0 - 2.0 + 0.2).epsilon(1e-12));

  auto no_rec = total_objective({uncond, cond, rec}, 0.0);
  CHECK(no_rec.value == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK(no_rec.term_breakdown.at("rec") == 0.0);

  auto zero = total_objective({LossReport{"uncond_labeled", 0.0, {}}}, 0.5);
  CHECK(zero.value == 0.0);

  CHECK_THROWS_AS(total_objective({}, -1.0), Error);
}

TEST_CASE("tensor forms agree with scalar forms") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> scores;
    for (int i = 0; i < 8; ++i) scores.push_back(rng.uniform(0.01, 0.99));
    auto t = torch::tensor(std::vector<float>(scores.begin(), scores.end()));
    CHECK(adv_real_term_t(t).item<double>() ==
          doctest::Approx(adv_real_term(scores)).epsilon(1e-5));
    CHECK(adv_fake_term_t(t).item<double>() ==
          doctest::Approx(adv_fake_term(scores)).epsilon(1e-5));
    CHECK(adv_fake_term_t(t, true).item<double>() ==
          doctest::Approx(adv_fake_term(scores, true)).epsilon(1e-5));
  }
}
