#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#include "doctest.h"
#include "estgcn/errors.hpp"
#include "estgcn/synthetic.hpp"
#include "estgcn/training.hpp"

using namespace estgcn;

namespace {

SyntheticPanel small_synth(std::uint64_t seed, std::size_t days = 160) {
  SyntheticConfig sc;
  sc.n_stations = 4;
  sc.days = days;
  sc.spread_deg = 0.05;
  return generate_synthetic_panel(sc, seed);
}

EstgcnModel tiny_model(const SyntheticPanel& sp, std::size_t q, std::uint64_t seed) {
  const auto g = build_adjacency(sp.roster, {});
  ModelConfig mc;
  mc.k_layers = 1;
  mc.spatial_hidden = 3;
  mc.lag = 3;
  mc.hidden = 4;
  mc.horizon = q;
  return make_model(mc, g, laplacian_bundle(g), seed);
}

LossConfig plain_loss(std::size_t n, double threshold = 60.0) {
  LossConfig lc;
  lc.thresholds.assign(n, threshold);
  lc.gpd_fits.assign(n, std::nullopt);
  return lc;
}

LossConfig tail_loss(std::size_t n, double threshold = 60.0) {
  LossConfig lc = plain_loss(n, threshold);
  lc.beta2 = 0.5;
  lc.gpd_fits.assign(n, GpdFit{threshold, 20.0, 0.1, 50, 0.0});
  return lc;
}

}  // namespace

TEST_CASE("hybrid loss on both sides of the threshold") {
  const GpdFit fit{10.0, 2.0, 0.5, 100, 0.0};
  // At or below the threshold only the squared error counts, whatever the weights.
  CHECK(hybrid_loss(5.0, 3.0, 10.0, 0.5, 1.0, &fit) == 4.0);
  CHECK(hybrid_loss(10.0, 7.0, 10.0, 0.5, 1.0, &fit) == 9.0);
  CHECK(hybrid_loss(12.0, 10.0, 10.0, 2.0, 0.0, nullptr) == 8.0);
  CHECK(hybrid_loss(12.0, 10.0, 10.0, 2.0, 1.0, &fit) ==
        doctest::Approx(8.0 + std::log(2.0) + 3.0 * std::log(1.5)).epsilon(1e-14));
  CHECK_THROWS_AS(hybrid_loss(12.0, 10.0, 10.0, 1.0, 1.0, nullptr), ConfigError);
}

TEST_CASE("hybrid loss derivative matches finite differences") {
  auto lc = tail_loss(1, 10.0);
  lc.gpd_fits[0] = GpdFit{10.0, 2.0, 0.3, 100, 0.0};
  lc.beta1 = 0.7;
  for (double pred : {3.0, 9.5, 10.5, 15.0}) {
    const double h = 1e-6;
    const double fd = (hybrid_loss(pred + h, 8.0, 0, lc) - hybrid_loss(pred - h, 8.0, 0, lc)) / (2 * h);
    CHECK(hybrid_loss_derivative(pred, 8.0, 0, lc) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("per-station beta2 scale switches the tail term off") {
  auto lc = tail_loss(2, 10.0);
  lc.station_beta2_scale = {1.0, 0.0};
  lc.gpd_fits[1] = std::nullopt;
  CHECK_NOTHROW(lc.validate(2));
  CHECK(hybrid_loss(14.0, 10.0, 1, lc) == 16.0);
  CHECK(hybrid_loss(14.0, 10.0, 0, lc) > 16.0);
  auto bad = tail_loss(2, 10.0);
  bad.gpd_fits[1] = std::nullopt;
  CHECK_THROWS_AS(bad.validate(2), ConfigError);
  bad.beta1 = bad.beta2 = 0.0;
  CHECK_THROWS_AS(bad.validate(2), ConfigError);
}

TEST_CASE("panel loss de-normalises and its gradient matches finite differences") {
  auto lc = tail_loss(2, 10.0);
  lc.gpd_fits[0] = GpdFit{10.0, 3.0, 0.2, 100, 0.0};
  lc.gpd_fits[1] = GpdFit{10.0, 1.5, -0.1, 100, 0.0};
  NormStats norm{{8.0, 11.0}, {2.0, 3.0}};
  const ad::Tensor targets = ad::Tensor::matrix(2, 2, {9.0, 12.0, 10.5, 8.0});
  const ad::Tensor point = ad::Tensor::matrix(2, 2, {0.3, 1.7, -0.6, 0.9});
  {
    ad::Tape tape;
    auto v = panel_loss(tape.variable(point), targets, {0, 1}, norm, lc);
    double expect = 0.0;
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 2; ++c)
        expect += hybrid_loss(point.at(r, c) * norm.std[r] + norm.mean[r], targets.at(r, c), r, lc);
    CHECK(v.value().item() == doctest::Approx(expect / 4.0).epsilon(1e-14));
  }
  const double err = ad::grad_check(
      [&](ad::Tape&, ad::Variable x) { return panel_loss(x, targets, {0, 1}, norm, lc); }, point, 1e-6);
  CHECK(err < 1e-6);
}

TEST_CASE("training with zero learning rate leaves parameters unchanged") {
  const auto sp = small_synth(1);
  auto model = tiny_model(sp, 5, 3);
  const auto before = model;
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.epochs = 2;
  WindowSplit split{{0, 120}, {120, 140}, {140, 160}};
  train(model, sp.panel, split, plain_loss(4), tc);
  const auto pa = before.parameters();
  const auto pb = std::as_const(model).parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) CHECK(*pa[k].second == *pb[k].second);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto sp = small_synth(2);
  WindowSplit split{{0, 120}, {120, 140}, {140, 160}};
  TrainConfig tc;
  tc.epochs = 3;
  tc.learning_rate = 5e-3;
  auto a = tiny_model(sp, 5, 9), b = tiny_model(sp, 5, 9);
  const auto ra = train(a, sp.panel, split, tail_loss(4), tc);
  const auto rb = train(b, sp.panel, split, tail_loss(4), tc);
  CHECK(ra.train_loss == rb.train_loss);
  CHECK(ra.val_loss == rb.val_loss);
  const auto pa = std::as_const(a).parameters();
  const auto pb = std::as_const(b).parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) CHECK(*pa[k].second == *pb[k].second);
}

TEST_CASE("training reduces the loss on an autoregressive panel") {
  const auto sp = small_synth(3, 400);
  WindowSplit split{{0, 340}, {340, 370}, {370, 400}};
  TrainConfig tc;
  tc.epochs = 15;
  tc.learning_rate = 1e-2;
  auto model = tiny_model(sp, 1, 4);
  const auto r = train(model, sp.panel, split, plain_loss(4), tc);
  REQUIRE(r.train_loss.size() == 15);
  CHECK(r.train_loss.back() < 0.9 * r.train_loss.front());
  CHECK(*std::min_element(r.val_loss.begin(), r.val_loss.end()) < r.val_loss.front());
  CHECK(std::isfinite(r.val_rmse));
  CHECK(model.norm.mean[0] == doctest::Approx(fit_norm_stats(sp.panel, split.train).mean[0]));
}

TEST_CASE("beta selection") {
  const auto sp = small_synth(5);
  WindowSplit split{{0, 120}, {120, 140}, {140, 160}};
  TrainConfig tc;
  tc.epochs = 1;
  auto factory = [&] { return tiny_model(sp, 5, 6); };

  const auto one = select_betas({{0.5, 0.1}}, factory, sp.panel, split, tail_loss(4), tc);
  CHECK(one.beta1 == 0.5);
  CHECK(one.beta2 == 0.1);
  REQUIRE(one.table.size() == 1);
  CHECK(one.table[0].status == "ok");

  const auto grid = select_betas({{1.0, 0.0}, {0.5, 0.5}, {1.0, 1.0}}, factory, sp.panel, split, tail_loss(4), tc);
  REQUIRE(grid.table.size() == 3);
  double best = INFINITY;
  for (const auto& row : grid.table) best = std::min(best, *row.val_rmse);
  bool selected_is_best = false;
  for (const auto& row : grid.table)
    if (row.beta1 == grid.beta1 && row.beta2 == grid.beta2) selected_is_best = *row.val_rmse == best;
  CHECK(selected_is_best);
  CHECK(grid.models.size() == 3);

  CHECK_THROWS_AS(select_betas({}, factory, sp.panel, split, tail_loss(4), tc), ConfigError);
}

TEST_CASE("rolling windows") {
  for (auto [scheme, len, count] : {std::tuple{Scheme::short_term, 30u, 12u}, std::tuple{Scheme::medium_term, 60u, 6u},
                                    std::tuple{Scheme::long_term, 90u, 4u}}) {
    const auto ws = rolling_windows(800, scheme, 435);
    REQUIRE(ws.size() == count);
    for (std::size_t w = 0; w < ws.size(); ++w) {
      CHECK(ws[w].test.size() == len);
      CHECK(ws[w].val.size() == len);
      CHECK(ws[w].val.end == ws[w].test.begin);
      CHECK(ws[w].train.end == ws[w].val.begin);
      CHECK(ws[w].train.begin == 0);
      if (w > 0) CHECK(ws[w].test.begin == ws[w - 1].test.end);
    }
  }
  WindowOptions opt;
  opt.train_len = 100;
  opt.val_len = 10;
  const auto ws = rolling_windows(800, Scheme::long_term, 435, opt);
  CHECK(ws[0].train == IndexRange{325, 425});
  CHECK(ws[0].val == IndexRange{425, 435});

  CHECK_THROWS_AS(rolling_windows(800, Scheme::short_term, 770), InputError);
  CHECK_THROWS_AS(rolling_windows(800, Scheme::short_term, 40), InputError);
  CHECK_THROWS_AS(parse_scheme("weekly"), ConfigError);
  CHECK(parse_scheme("medium") == Scheme::medium_term);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.epochs = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = {};
  tc.learning_rate = -1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}
