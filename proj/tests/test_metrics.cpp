#include <cmath>
#include <random>

#include "doctest.h"
#include "estgcn/errors.hpp"
#include "estgcn/metrics.hpp"
#include "oracles.hpp"

using namespace estgcn;

TEST_CASE("point metrics on a small example") {
  const std::vector<double> y{10, 20, 30}, f{12, 18, 33};
  CHECK(mae(y, f) == doctest::Approx(7.0 / 3.0));
  CHECK(rmse(y, f) == doctest::Approx(std::sqrt(17.0 / 3.0)));
  // Training series 1, 3, 2: mean absolute step 1.5, scaled by q / (T - 1) * sum.
  const std::vector<double> train{1, 3, 2};
  CHECK(*mase(y, f, train) == doctest::Approx(7.0 / (3.0 / 2.0 * 3.0)));
  CHECK(smape(std::vector<double>{0.0}, std::vector<double>{0.0}) == 0.0);
  CHECK(smape(std::vector<double>{100.0}, std::vector<double>{50.0}) == doctest::Approx(100.0 * 2.0 * 50.0 / 150.0));
  // d = 10 - 12 = -2 at rho 0.8 costs 0.4; d = 2 costs 1.6.
  CHECK(pinball(std::vector<double>{10.0}, std::vector<double>{12.0}, 0.8) == doctest::Approx(0.4));
  CHECK(pinball(std::vector<double>{12.0}, std::vector<double>{10.0}, 0.8) == doctest::Approx(1.6));
}

TEST_CASE("metric edge cases") {
  const std::vector<double> y{1, 2}, f{1, 2};
  CHECK_FALSE(mase(y, f, std::vector<double>{5, 5, 5}));
  CHECK_THROWS_AS(mae(y, std::vector<double>{1}), InputError);
  CHECK_THROWS_AS(mae(std::vector<double>{}, std::vector<double>{}), InputError);
  CHECK_THROWS_AS(pinball(y, f, 1.0), InputError);
  CHECK_THROWS_AS(crps_samples({1.0}, 0.0), InputError);
}

TEST_CASE("property: metrics match scalar-loop oracles") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd(50.0, 20.0);
  std::uniform_int_distribution<int> len(1, 60);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t q = static_cast<std::size_t>(len(rng));
    std::vector<double> y(q), f(q), train(40);
    for (auto& v : y) v = nd(rng);
    for (auto& v : f) v = nd(rng);
    for (auto& v : train) v = nd(rng);
    CHECK(mae(y, f) == doctest::Approx(oracle::mae(y, f)).epsilon(1e-12));
    CHECK(rmse(y, f) == doctest::Approx(oracle::rmse(y, f)).epsilon(1e-12));
    CHECK(*mase(y, f, train) == doctest::Approx(oracle::mase(y, f, train)).epsilon(1e-12));
    CHECK(smape(y, f) == doctest::Approx(oracle::smape(y, f)).epsilon(1e-12));
    CHECK(pinball(y, f, 0.8) == doctest::Approx(oracle::pinball(y, f, 0.8)).epsilon(1e-12));
    CHECK(rmse(y, f) >= mae(y, f) - 1e-12);
  }
}

TEST_CASE("crps against the double-sum identity") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xs(50);
    for (auto& x : xs) x = nd(rng);
    const double y = nd(rng);
    CHECK(crps_samples(xs, y) == doctest::Approx(oracle::crps_double_sum(xs, y)).epsilon(1e-12));
  }
  // A point mass reduces CRPS to absolute error.
  CHECK(crps_samples({3.0, 3.0, 3.0}, 5.0) == doctest::Approx(2.0));
  const std::vector<double> actual{0.0, 1.0};
  const std::vector<std::vector<double>> ens{{-1.0, 1.0}, {1.0, 1.0}};
  // First: mean |x - 0| = 1, pair term 0.5 * 1 = 0.5 -> 0.5. Second: 0.
  CHECK(crps_ensemble(actual, ens) == doctest::Approx(0.25));
}

TEST_CASE("evaluate_forecast bundles the metrics") {
  const std::vector<double> y{10, 20, 30}, f{12, 18, 33}, train{1, 3, 2, 5};
  const std::vector<std::vector<double>> ens{{11, 13}, {17, 19}, {30, 34}};
  const auto r = evaluate_forecast(y, f, train, &ens, 0.8);
  CHECK(r.mae == doctest::Approx(mae(y, f)));
  CHECK(r.crps);
  CHECK(r.horizon == 3);
  CHECK(r.train_len == 4);
  CHECK_FALSE(evaluate_forecast(y, f, train, nullptr).crps);
}

TEST_CASE("diebold mariano") {
  const std::vector<double> y{1, 2, 3, 4};
  SUBCASE("identical forecasts leave the statistic undefined") {
    const auto r = dm_test(y, y, y);
    CHECK_FALSE(r.defined());
    CHECK_FALSE(r.p_value);
    CHECK(r.mean_diff == 0.0);
  }
  SUBCASE("worked example") {
    const std::vector<double> a{2, 4, 3, 6}, b{1, 2, 4, 4};
    // lambda = {1, 2, -1, 2}: mean 1, sd sqrt(2).
    const auto r = dm_test(y, a, b);
    REQUIRE(r.defined());
    CHECK(*r.statistic == doctest::Approx(2.0 / std::sqrt(2.0)));
    CHECK(*r.p_value == doctest::Approx(1.0 - oracle::normal_cdf(std::sqrt(2.0))));
  }
  SUBCASE("property: swapping the models negates the statistic") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> yy(30), a(30), b(30);
      for (std::size_t t = 0; t < 30; ++t) {
        yy[t] = nd(rng);
        a[t] = yy[t] + nd(rng);
        b[t] = yy[t] + 0.5 * nd(rng);
      }
      const auto ab = dm_test(yy, a, b), ba = dm_test(yy, b, a);
      REQUIRE(ab.defined());
      CHECK(*ab.statistic == doctest::Approx(-*ba.statistic).epsilon(1e-12));
      CHECK(*ab.p_value + *ba.p_value == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("studentized range against a Simpson-rule oracle") {
  for (std::size_t k : {2u, 4u, 8u, 14u}) {
    for (double q : {1.0, 2.5, 4.0}) {
      CHECK(studentized_range_cdf(q, k) == doctest::Approx(oracle::range_cdf(q, static_cast<int>(k))).epsilon(1e-7));
    }
    const double oq = oracle::range_quantile(0.95, static_cast<int>(k));
    CHECK(studentized_range_quantile(0.95, k) == doctest::Approx(oq).epsilon(1e-6));
  }
  // Published infinite-df table values.
  CHECK(studentized_range_quantile(0.95, 4) == doctest::Approx(3.633).epsilon(1e-3));
  CHECK(studentized_range_quantile(0.95, 2) == doctest::Approx(2.772).epsilon(1e-3));
}

TEST_CASE("average ranks share ties") {
  CHECK(average_ranks(std::vector<double>{3.0, 1.0, 2.0}) == std::vector<double>{3.0, 1.0, 2.0});
  CHECK(average_ranks(std::vector<double>{1.0, 1.0, 5.0, 0.5}) == std::vector<double>{2.5, 2.5, 4.0, 1.0});
}

TEST_CASE("mcb") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(1.0, 2.0);
  std::vector<std::vector<double>> losses;
  for (int d = 0; d < 12; ++d) losses.push_back({0.5, u(rng), u(rng), u(rng)});
  const auto r = mcb_test(losses);
  CHECK(r.mean_ranks[0] == 1.0);
  CHECK(r.best == 0);
  const double cd = oracle::range_quantile(0.95, 4) * std::sqrt(4.0 * 5.0 / (6.0 * 12.0));
  CHECK(r.critical_distance == doctest::Approx(cd).epsilon(1e-6));
  CHECK(r.in_reference[0]);
  double total = 0.0;
  for (double m : r.mean_ranks) total += m;
  CHECK(total == doctest::Approx(10.0));  // F (F + 1) / 2
  CHECK_THROWS_AS(mcb_test({{1.0, 2.0}}), InputError);
  CHECK_THROWS_AS(mcb_test({{1.0, 2.0}, {1.0}}), InputError);
}

TEST_CASE("property: mean ranks always sum to F (F + 1) / 2") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> tie(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t f = 2 + static_cast<std::size_t>(trial % 6);
    std::vector<std::vector<double>> losses(3 + static_cast<std::size_t>(trial % 5), std::vector<double>(f));
    for (auto& row : losses)
      for (auto& x : row) x = tie(rng);  // plenty of ties
    const auto r = mcb_test(losses);
    double total = 0.0;
    for (double m : r.mean_ranks) total += m;
    CHECK(total == doctest::Approx(static_cast<double>(f * (f + 1)) / 2.0));
    for (double m : r.mean_ranks) {
      CHECK(m >= 1.0);
      CHECK(m <= static_cast<double>(f));
    }
  }
}
