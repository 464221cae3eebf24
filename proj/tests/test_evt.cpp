#include <cmath>
#include <random>

#include "doctest.h"
#include "estgcn/evt.hpp"
#include "oracles.hpp"

using namespace estgcn;

TEST_CASE("gp cdf: exponential limit and heavy-tail value") {
  CHECK(gpd_cdf(1.0, 1.0, 0.0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  CHECK(gpd_cdf(2.0, 1.0, 0.5) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(gpd_cdf(0.0, 3.0, 0.2) == 0.0);
  CHECK_THROWS_AS(gpd_cdf(-0.1, 1.0, 0.0), InputError);
  // Negative shape: support ends at scale / |shape|.
  CHECK_THROWS_AS(gpd_cdf(3.0, 1.0, -0.5), InputError);
}

TEST_CASE("gp quantile inverts the cdf") {
  for (double xi : {-0.3, 0.0, 0.2, 0.7})
    for (double p : {0.01, 0.3, 0.5, 0.9, 0.999}) {
      const double z = gpd_quantile(p, 1.7, xi);
      CHECK(gpd_cdf(z, 1.7, xi) == doctest::Approx(p).epsilon(1e-10));
    }
}

TEST_CASE("gp log-likelihood matches a direct sum") {
  const auto z = oracle::gp_sample(200, 1.5, 0.2, 3);
  Exceedances exc{z, 0.0};
  CHECK(gpd_loglik(1.5, 0.2, exc) == doctest::Approx(oracle::gp_loglik(1.5, 0.2, z)).epsilon(1e-12));
  CHECK(gpd_loglik(1.5, 0.0, exc) == doctest::Approx(oracle::gp_loglik(1.5, 0.0, z)).epsilon(1e-12));
  // A point past the negative-shape endpoint makes the likelihood vanish.
  Exceedances far{{0.5, 10.0}, 0.0};
  CHECK(std::isinf(gpd_loglik(1.0, -0.5, far)));
}

TEST_CASE("gp fit recovers parameters") {
  SUBCASE("heavy tail") {
    const auto z = oracle::gp_sample(5000, 2.0, 0.3, 20240601);
    const auto fit = fit_gpd({z, 0.0});
    CHECK(fit.scale == doctest::Approx(2.0).epsilon(0.05));
    CHECK(fit.shape == doctest::Approx(0.3).epsilon(0.2));
    CHECK(fit.n_exceed == 5000);
    CHECK(fit.loglik == doctest::Approx(oracle::gp_loglik(fit.scale, fit.shape, z)).epsilon(1e-10));
  }
  SUBCASE("exponential tail") {
    const auto z = oracle::gp_sample(5000, 1.0, 0.0, 77);
    const auto fit = fit_gpd({z, 0.0});
    CHECK(fit.scale == doctest::Approx(1.0).epsilon(0.06));
    CHECK(std::fabs(fit.shape) < 0.05);
  }
  SUBCASE("the fit is a local maximum") {
    const auto z = oracle::gp_sample(1000, 1.3, 0.15, 5);
    const auto fit = fit_gpd({z, 0.0});
    const double best = oracle::gp_loglik(fit.scale, fit.shape, z);
    for (double ds : {-0.02, 0.02})
      for (double dx : {-0.02, 0.02}) CHECK(oracle::gp_loglik(fit.scale + ds, fit.shape + dx, z) <= best);
  }
}

TEST_CASE("gp fit refuses too few exceedances") {
  Exceedances exc{std::vector<double>(19, 1.0), 0.0};
  CHECK_THROWS_AS(fit_gpd(exc), GpdFitError);
}

TEST_CASE("exceedances are strict and shifted") {
  const std::vector<double> x{1.0, 5.0, 3.0, 7.0, 3.0};
  const auto e = extract_exceedances(x, 3.0);
  CHECK(e.values == std::vector<double>{2.0, 4.0});
  CHECK(e.threshold == 3.0);
}

TEST_CASE("block maxima") {
  const std::vector<double> x{1, 4, 2, 8, 3, 5, 9};
  CHECK(block_maxima(x, 3).maxima == std::vector<double>{4, 8});
  CHECK(block_maxima(x, 10).warning);
}

TEST_CASE("mean excess curve against a direct computation") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  const std::vector<double> grid{0.5, 3.0, 5.5, 10.0};
  const auto c = mean_excess_curve(x, grid);
  REQUIRE(c.me[0]);
  CHECK(*c.me[0] == doctest::Approx(3.0));
  CHECK(*c.me[1] == doctest::Approx(2.0));
  CHECK(c.counts[1] == 3);
  CHECK_FALSE(c.me[2]);  // one exceedance
  CHECK_FALSE(c.me[3]);
  CHECK(c.defined_points() == 2);
  // sd of {1, 2, 3} is 1.
  CHECK(*c.ci_half_width[1] == doctest::Approx(1.959963984540054 / std::sqrt(3.0)));
  const std::vector<double> bad{1.0, 1.0};
  CHECK_THROWS_AS(mean_excess_curve(x, bad), InputError);
}

TEST_CASE("mean excess slope follows shape / (1 - shape)") {
  const auto z = oracle::gp_sample(10000, 1.0, 0.25, 99);
  std::vector<double> grid;
  for (int i = 0; i < 30; ++i) grid.push_back(0.1 * i);
  const auto c = mean_excess_curve(z, grid);
  std::vector<double> gx, gy;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (c.me[i]) {
      gx.push_back(grid[i]);
      gy.push_back(*c.me[i]);
    }
  CHECK(oracle::ols_slope(gx, gy) == doctest::Approx(1.0 / 3.0).epsilon(0.1));
}

TEST_CASE("mep threshold on an exactly linear curve") {
  MeanExcessCurve c;
  for (int i = 0; i < 12; ++i) {
    c.grid.push_back(i);
    c.me.push_back(2.0 + 0.5 * i);
    c.ci_half_width.push_back(0.1);
    c.counts.push_back(100 - 5 * i);
  }
  const auto s = suggest_mep_threshold(c);
  CHECK(s.found);
  CHECK(s.threshold == 0.0);
  CHECK(s.slope == doctest::Approx(0.5));
  CHECK(s.intercept == doctest::Approx(2.0));
  CHECK(s.r2 == doctest::Approx(1.0));

  // A kinked head pushes the threshold to the linear part.
  c.me[0] = 9.0;
  c.me[1] = 0.0;
  const auto k = suggest_mep_threshold(c);
  CHECK(k.found);
  CHECK(k.threshold >= 2.0);

  c.me.assign(12, std::nullopt);
  CHECK_THROWS_AS(suggest_mep_threshold(c), InputError);
}

TEST_CASE("durbin watson") {
  // Alternating residuals: centred values +-1, differences of 2.
  Exceedances alt{{1, 3, 1, 3, 1, 3}, 0.0};
  CHECK(*durbin_watson(alt) == doctest::Approx(20.0 / 6.0));
  CHECK_FALSE(durbin_watson({{1, 2}, 0.0}));
  CHECK_FALSE(durbin_watson({{2, 2, 2, 2}, 0.0}));
  // Independent draws sit near 2.
  const auto z = oracle::gp_sample(4000, 1.0, 0.0, 8);
  CHECK(*durbin_watson({z, 0.0}) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("pot loss values and derivative") {
  GpdFit fit{10.0, 2.0, 0.5, 100, 0.0};
  // e = 2: log 2 + 3 log 1.5
  CHECK(pot_loss(12.0, fit) == doctest::Approx(std::log(2.0) + 3.0 * std::log(1.5)).epsilon(1e-12));
  GpdFit expo{10.0, 2.0, 0.0, 100, 0.0};
  CHECK(pot_loss(13.0, expo) == doctest::Approx(std::log(2.0) + 1.5).epsilon(1e-12));
  CHECK_THROWS_AS(pot_loss(10.0, fit), InputError);
  CHECK(pot_loss(12.0, fit, true) == doctest::Approx(std::log(2.0) + 3.0 * std::log(4.0)).epsilon(1e-12));

  for (double xi : {-0.4, 0.0, 0.3})
    for (double pred : {10.5, 11.0, 14.0}) {
      GpdFit f{10.0, 2.0, xi, 100, 0.0};
      const double h = 1e-6;
      const double fd = (pot_loss(pred + h, f) - pot_loss(pred - h, f)) / (2 * h);
      CHECK(pot_loss_derivative(pred, f) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("pot loss continues linearly past a negative-shape endpoint") {
  GpdFit f{0.0, 1.0, -0.5, 100, 0.0};
  // Support ends at e = 2; the loss stays finite and increasing beyond it.
  const double a = pot_loss(2.5, f), b = pot_loss(3.5, f);
  CHECK(std::isfinite(a));
  CHECK(b > a);
  CHECK(pot_loss_derivative(3.0, f) == doctest::Approx(b - a).epsilon(1e-9));
}

TEST_CASE("gev validation") {
  GevParams p;
  p.scale = 0.0;
  CHECK_THROWS_AS(p.validate(), InputError);
}
