#include "bayesdyn/predictor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <thread>

namespace bayesdyn {

namespace {

constexpr std::uint64_t kAttemptStreamBase = 0x9e3779b97f4a7c15ULL;

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

void EnvelopeConfig::validate() const {
  if (trajectories == 0) throw std::invalid_argument("M (trajectories to retain) must be >= 1");
  if (!(confidence > 0.0)) throw std::invalid_argument("confidence multiplier must be > 0");
  if (attempt_cap() < trajectories) throw std::invalid_argument("max_attempts must be >= M");
  if (integration.method == Method::rk45 && !(integration.tol > 0.0)) {
    throw std::invalid_argument("rk45 tolerance must be > 0");
  }
}

RunningMoments::RunningMoments(const TimeGrid& grid, std::size_t dim)
    : grid_(grid), dim_(dim), mean_(grid.size() * dim, 0.0), m2_(grid.size() * dim, 0.0) {
  if (dim == 0) throw std::invalid_argument("moment dimension must be >= 1");
}

void RunningMoments::update(const Trajectory& traj) {
  if (traj.blew_up) throw std::invalid_argument("blown-up trajectories cannot enter the moments");
  if (!(traj.grid == grid_)) throw std::invalid_argument("trajectory grid does not match the moment grid");
  if (traj.states.size() != grid_.size()) throw std::invalid_argument("trajectory length does not match its grid");
  ++count_;
  const double n = static_cast<double>(count_);
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    const auto& s = traj.states[i];
    if (s.size() != dim_) throw std::invalid_argument("trajectory state has the wrong dimension");
    for (std::size_t c = 0; c < dim_; ++c) {
      const std::size_t at = i * dim_ + c;
      const double delta = s[c] - mean_[at];
      mean_[at] += delta / n;
      m2_[at] += delta * (s[c] - mean_[at]);
    }
  }
}

double RunningMoments::variance(std::size_t point, std::size_t component) const {
  if (count_ < 2) return 0.0;
  return m2_[point * dim_ + component] / static_cast<double>(count_ - 1);
}

double RunningMoments::stddev(std::size_t point, std::size_t component) const {
  return std::sqrt(variance(point, component));
}

void update_moments(RunningMoments& moments, const Trajectory& traj) { moments.update(traj); }

TrajectoryEnvelope make_envelope(const RunningMoments& moments, double confidence, double sigma_eps,
                                 bool sigma_eps_in_bounds) {
  TrajectoryEnvelope env;
  env.grid = moments.grid();
  env.dim = moments.dimension();
  env.confidence = confidence;
  env.sigma_eps = sigma_eps;
  env.retained = moments.count();
  const std::size_t total = moments.points() * env.dim;
  env.mean.resize(total);
  env.std.resize(total);
  env.lower.resize(total);
  env.upper.resize(total);
  for (std::size_t i = 0; i < moments.points(); ++i) {
    for (std::size_t c = 0; c < env.dim; ++c) {
      const std::size_t at = env.index(i, c);
      const double mu = moments.mean(i, c);
      double sd = moments.stddev(i, c);
      if (sigma_eps_in_bounds) sd = std::sqrt(sd * sd + sigma_eps * sigma_eps);
      const double half = confidence * sd;
      env.mean[at] = mu;
      env.std[at] = sd;
      env.upper[at] = mu + half;
      env.lower[at] = mu - half;
    }
  }
  return env;
}

InsufficientTrajectories::InsufficientTrajectories(std::size_t retained, std::size_t discarded,
                                                   std::size_t required)
    : std::runtime_error("only " + std::to_string(retained) + " of " + std::to_string(required) +
                         " trajectories stayed finite (" + std::to_string(discarded) +
                         " discarded for finite-time blow-up)"),
      retained_(retained),
      discarded_(discarded),
      required_(required) {}

Trajectory sample_trajectory(const WeightSet& weights, DropoutRate rate, const State& u0,
                             const TimeGrid& grid, const EnvelopeConfig& cfg, Rng& rng) {
  const auto& shape = weights.shape();
  if (u0.size() != shape.input_dim || shape.input_dim != shape.output_dim) {
    throw std::invalid_argument("network must map the state space onto itself");
  }
  if (cfg.resample_mask_per_eval) {
    VectorField rhs = [&](std::span<const double> u, std::span<double> du) {
      forward(weights, u, sample_mask(rate, shape.hidden_dim, rng), du);
    };
    return integrate(rhs, u0, grid, cfg.integration);
  }
  const DropoutMask mask = sample_mask(rate, shape.hidden_dim, rng);
  VectorField rhs = [&](std::span<const double> u, std::span<double> du) {
    forward(weights, u, mask, du);
  };
  return integrate(rhs, u0, grid, cfg.integration);
}

TimeGrid prediction_grid(double t_start, double t_end, std::size_t intervals) {
  if (!(t_end > t_start)) throw std::invalid_argument("t_end must exceed t_start");
  if (intervals < 2) throw std::invalid_argument("N must be >= 2");
  const double h = (t_end - t_start) / static_cast<double>(intervals);
  return TimeGrid::uniform(t_start, h, intervals + 1);
}

Rng attempt_stream(std::uint64_t seed, std::uint64_t attempt) {
  return make_stream(seed, kAttemptStreamBase + attempt);
}

TrajectoryEnvelope predict_envelope(const WeightSet& weights, DropoutRate rate, const State& u0,
                                    double t_start, double t_end, std::size_t intervals,
                                    const EnvelopeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const TimeGrid grid = prediction_grid(t_start, t_end, intervals);
  const double sigma_eps = std::pow(*grid.spacing(), cfg.sigma_eps_exponent);
  RunningMoments moments(grid, u0.size());

  const unsigned threads = resolve_threads(cfg.threads);
  const std::size_t cap = cfg.attempt_cap();
  const std::size_t batch_size = std::max<std::size_t>(16, 8 * static_cast<std::size_t>(threads));
  std::vector<Trajectory> batch;

  std::size_t next_attempt = 0;
  std::size_t discarded = 0;
  while (moments.count() < cfg.trajectories && next_attempt < cap) {
    const std::size_t first = next_attempt;
    const std::size_t count = std::min(batch_size, cap - first);
    batch.assign(count, Trajectory{});

    auto work = [&](std::atomic<std::size_t>& cursor) {
      for (std::size_t slot = cursor++; slot < count; slot = cursor++) {
        Rng rng = attempt_stream(seed, first + slot);
        batch[slot] = sample_trajectory(weights, rate, u0, grid, cfg, rng);
      }
    };
    std::atomic<std::size_t> cursor{0};
    if (threads == 1) {
      work(cursor);
    } else {
      std::vector<std::jthread> pool;
      const unsigned spawn = static_cast<unsigned>(std::min<std::size_t>(threads, count));
      for (unsigned t = 0; t < spawn; ++t) pool.emplace_back([&] { work(cursor); });
    }

    // Merge strictly in attempt order.
    for (std::size_t slot = 0; slot < count && moments.count() < cfg.trajectories; ++slot) {
      ++next_attempt;
      if (batch[slot].blew_up) {
        ++discarded;
      } else {
        moments.update(batch[slot]);
      }
    }
  }

  if (moments.count() < cfg.trajectories) {
    throw InsufficientTrajectories(moments.count(), discarded, cfg.trajectories);
  }
  auto env = make_envelope(moments, cfg.confidence, sigma_eps, cfg.sigma_eps_in_bounds);
  env.discarded = discarded;
  env.seed = seed;
  return env;
}

double coverage(const TrajectoryEnvelope& envelope, const Trajectory& reference,
                std::size_t component) {
  if (component >= envelope.dim) throw std::invalid_argument("component index out of range");
  if (!envelope.grid.matches(reference.grid) || reference.states.size() != envelope.grid.size()) {
    throw std::invalid_argument("reference grid does not match the envelope grid");
  }
  std::size_t inside = 0;
  for (std::size_t i = 0; i < envelope.grid.size(); ++i) {
    const double v = reference.states[i][component];
    const std::size_t at = envelope.index(i, component);
    if (envelope.lower[at] <= v && v <= envelope.upper[at]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(envelope.grid.size());
}

}  // namespace bayesdyn
