#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "bayesdyn/predictor.hpp"

using namespace bayesdyn;

namespace {

Trajectory constant_trajectory(const TimeGrid& grid, double value) {
  Trajectory t;
  t.grid = grid;
  t.states.assign(grid.size(), State{value});
  return t;
}

// dx/dt = x^2 on the first component, zero elsewhere; blows up at t = 1/x0.
WeightSet blowup_net() {
  WeightSet w(NetworkShape{});
  w.w1(0, 0) = 1.0;
  w.w2(0, 0) = 1.0;
  return w;
}

EnvelopeConfig small_config(std::size_t m) {
  EnvelopeConfig cfg;
  cfg.trajectories = m;
  cfg.threads = 1;
  return cfg;
}

WeightSet trained_like_net(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_weights(NetworkShape{}, rng, 0.3);
}

}  // namespace

TEST_CASE("running moments worked examples") {
  const auto grid = TimeGrid::uniform(0.0, 1.0, 3);
  RunningMoments one(grid, 1);
  one.update(constant_trajectory(grid, 4.0));
  CHECK(one.mean(1, 0) == 4.0);
  CHECK(one.stddev(1, 0) == 0.0);

  RunningMoments two(grid, 1);
  two.update(constant_trajectory(grid, 1.0));
  update_moments(two, constant_trajectory(grid, 3.0));
  CHECK(two.mean(2, 0) == 2.0);
  CHECK(two.stddev(2, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("running moments match the two-pass oracle") {
  const auto grid = TimeGrid::uniform(0.0, 0.1, 50);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(2.0, 5.0);
  std::vector<Trajectory> trajs;
  RunningMoments mom(grid, 3);
  for (int k = 0; k < 100; ++k) {
    Trajectory t;
    t.grid = grid;
    for (std::size_t i = 0; i < grid.size(); ++i) t.states.push_back(State{n(rng), n(rng), 1e3 + n(rng)});
    mom.update(t);
    trajs.push_back(std::move(t));
  }
  const auto [mean, sd] = oracle::batch_moments(trajs);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(std::abs(mom.mean(i, c) - mean[i * 3 + c]) < 1e-10);
      CHECK(std::abs(mom.stddev(i, c) - sd[i * 3 + c]) < 1e-10);
    }
  }
}

TEST_CASE("running moments reject bad trajectories") {
  const auto grid = TimeGrid::uniform(0.0, 1.0, 3);
  RunningMoments mom(grid, 1);
  auto blown = constant_trajectory(grid, 1.0);
  blown.blew_up = true;
  CHECK_THROWS(mom.update(blown));
  CHECK_THROWS(mom.update(constant_trajectory(TimeGrid::uniform(0.0, 0.5, 3), 1.0)));
  CHECK(mom.count() == 0);
}

TEST_CASE("without dropout a sampled trajectory is the deterministic solve") {
  const auto w = trained_like_net(5);
  const auto grid = prediction_grid(0.0, 2.0, 40);
  Rng rng = make_stream(1, 1);
  const auto cfg = small_config(1);
  const auto t = sample_trajectory(w, DropoutRate(0.0), State{-1, -1, -1}, grid, cfg, rng);
  const VectorField f = [&](std::span<const double> u, std::span<double> du) {
    forward(w, u, DropoutMask::all_ones(10), du);
  };
  const auto ref = integrate(f, State{-1, -1, -1}, grid, cfg.integration);
  CHECK(t.states == ref.states);
}

TEST_CASE("sampled trajectories replay under a fixed seed") {
  const auto w = trained_like_net(6);
  const auto grid = prediction_grid(0.0, 2.0, 40);
  const auto cfg = small_config(1);
  Rng a = make_stream(9, 9), b = make_stream(9, 9);
  CHECK(sample_trajectory(w, DropoutRate(0.3), State{1, 0, 0}, grid, cfg, a).states ==
        sample_trajectory(w, DropoutRate(0.3), State{1, 0, 0}, grid, cfg, b).states);
}

TEST_CASE("blow-up is reported by the sampler") {
  const auto grid = prediction_grid(0.0, 2.0, 20);
  Rng rng = make_stream(2, 2);
  const auto t = sample_trajectory(blowup_net(), DropoutRate(0.0), State{2, 0, 0}, grid, small_config(1), rng);
  CHECK(t.blew_up);
}

TEST_CASE("prediction grid has N+1 points") {
  const auto g = prediction_grid(0.0, 10.0, 1000);
  CHECK(g.size() == 1001);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == doctest::Approx(10.0).epsilon(1e-14));
  CHECK_THROWS(prediction_grid(0.0, 10.0, 1));
  CHECK_THROWS(prediction_grid(1.0, 1.0, 10));
}

TEST_CASE("zero dropout gives a zero-width envelope") {
  const auto env = predict_envelope(trained_like_net(7), DropoutRate(0.0), State{-1, -1, -1}, 0.0, 2.0, 20,
                                    small_config(5), 3);
  CHECK(env.retained == 5);
  for (std::size_t i = 0; i < env.mean.size(); ++i) {
    CHECK(env.std[i] == 0.0);
    CHECK(env.lower[i] == env.mean[i]);
    CHECK(env.upper[i] == env.mean[i]);
  }
}

TEST_CASE("bounds are symmetric and grow with the confidence factor") {
  const auto w = trained_like_net(8);
  auto cfg = small_config(50);
  cfg.confidence = 1.0;
  const auto narrow = predict_envelope(w, DropoutRate(0.3), State{1, 1, 1}, 0.0, 2.0, 40, cfg, 4);
  cfg.confidence = 1.96;
  const auto wide = predict_envelope(w, DropoutRate(0.3), State{1, 1, 1}, 0.0, 2.0, 40, cfg, 4);
  CHECK(narrow.mean == wide.mean);
  for (std::size_t i = 0; i < wide.mean.size(); ++i) {
    CHECK(wide.upper[i] - wide.mean[i] == doctest::Approx(wide.mean[i] - wide.lower[i]).epsilon(1e-12));
    CHECK(wide.lower[i] <= narrow.lower[i]);
    CHECK(wide.upper[i] >= narrow.upper[i]);
  }
}

TEST_CASE("envelope statistics come from the first M finite attempts") {
  // A fixed point at x = 1 when unit 0 is dropped, blow-up when it is kept.
  WeightSet w(NetworkShape{});
  w.w1(0, 0) = 1.0;
  w.w2(0, 0) = 1.0;
  w.b1()[1] = 1.0;
  w.w2(0, 1) = -1.0;
  w.w1(1, 0) = 0.0;
  const DropoutRate rate(0.5);
  const State u0{2, 0, 0};
  const auto grid = prediction_grid(0.0, 2.0, 20);
  auto cfg = small_config(20);
  const auto env = predict_envelope(w, rate, u0, 0.0, 2.0, 20, cfg, 13);

  std::vector<Trajectory> kept;
  std::size_t discarded = 0;
  for (std::uint64_t k = 0; kept.size() < 20; ++k) {
    Rng rng = attempt_stream(13, k);
    auto t = sample_trajectory(w, rate, u0, grid, cfg, rng);
    if (t.blew_up)
      ++discarded;
    else
      kept.push_back(std::move(t));
  }
  CHECK(discarded > 0);
  CHECK(env.retained == 20);
  CHECK(env.discarded == discarded);
  const auto [mean, sd] = oracle::batch_moments(kept);
  for (std::size_t i = 0; i < mean.size(); ++i) {
    CHECK(std::isfinite(env.mean[i]));
    CHECK(std::abs(env.mean[i] - mean[i]) < 1e-10);
    CHECK(std::abs(env.std[i] - sd[i]) < 1e-10);
  }
}

TEST_CASE("thread count does not change the envelope") {
  const auto w = trained_like_net(10);
  auto cfg = small_config(64);
  const auto base = predict_envelope(w, DropoutRate(0.25), State{-1, -1, -1}, 0.0, 3.0, 60, cfg, 99);
  for (unsigned threads : {2u, 4u}) {
    cfg.threads = threads;
    const auto other = predict_envelope(w, DropoutRate(0.25), State{-1, -1, -1}, 0.0, 3.0, 60, cfg, 99);
    CHECK(other.mean == base.mean);
    CHECK(other.lower == base.lower);
    CHECK(other.upper == base.upper);
    CHECK(other.discarded == base.discarded);
  }
}

TEST_CASE("exhausted attempts raise InsufficientTrajectories") {
  auto cfg = small_config(5);
  cfg.max_attempts = 12;
  try {
    predict_envelope(blowup_net(), DropoutRate(0.0), State{2, 0, 0}, 0.0, 2.0, 20, cfg, 1);
    FAIL("expected InsufficientTrajectories");
  } catch (const InsufficientTrajectories& e) {
    CHECK(e.retained() == 0);
    CHECK(e.discarded() == 12);
    CHECK(e.required() == 5);
  }
}

TEST_CASE("config validation") {
  EnvelopeConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.attempt_cap() == 10000);
  cfg.trajectories = 0;
  CHECK_THROWS(cfg.validate());
  cfg = EnvelopeConfig{};
  cfg.confidence = -1.0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("coverage worked examples") {
  const auto grid = TimeGrid::uniform(0.0, 1.0, 4);
  TrajectoryEnvelope env;
  env.grid = grid;
  env.dim = 1;
  env.mean = {0, 0, 0, 0};
  env.lower = {-1, -1, -1, -1};
  env.upper = {1, 1, 1, 1};
  env.std = {0.5, 0.5, 0.5, 0.5};

  CHECK(coverage(env, constant_trajectory(grid, 0.0), 0) == 1.0);
  CHECK(coverage(env, constant_trajectory(grid, 5.0), 0) == 0.0);
  Trajectory mixed = constant_trajectory(grid, 0.5);
  mixed.states[2] = State{1.5};
  CHECK(coverage(env, mixed, 0) == 0.75);
  CHECK(coverage(env, constant_trajectory(grid, 1.0), 0) == 1.0);
  CHECK_THROWS(coverage(env, constant_trajectory(TimeGrid::uniform(0.0, 0.5, 4), 0.0), 0));
}

TEST_CASE("sigma_eps is metadata unless folded into the bounds") {
  const auto grid = TimeGrid::uniform(0.0, 1.0, 2);
  RunningMoments mom(grid, 1);
  mom.update(constant_trajectory(grid, 1.0));
  const auto plain = make_envelope(mom, 2.0, 0.5);
  CHECK(plain.sigma_eps == 0.5);
  CHECK(plain.upper[0] == 1.0);
  const auto folded = make_envelope(mom, 2.0, 0.5, true);
  CHECK(folded.upper[0] == doctest::Approx(2.0));
  CHECK(folded.lower[0] == doctest::Approx(0.0));
}
