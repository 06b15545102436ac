#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bayesdyn/ode.hpp"
#include "bayesdyn/polykernel_net.hpp"

namespace bayesdyn {

struct EnvelopeConfig {
  /// Trajectories to retain (M).
  std::size_t trajectories = 1000;
  /// Confidence multiplier c; bounds are mean +/- c*std.
  double confidence = 1.96;
  /// Order m of the integrator error model sigma_eps = h^m.
  int sigma_eps_exponent = 4;
  IntegrationOptions integration{Method::rk45, 1e-8, 0.0};
  /// Cap on sampled trajectories, retained plus discarded. 0 means 10*M.
  std::size_t max_attempts = 0;
  /// Draw a new mask at every right-hand-side evaluation instead of once
  /// per trajectory.
  bool resample_mask_per_eval = false;
  /// Fold sigma_eps into the reported std in quadrature before forming bounds.
  bool sigma_eps_in_bounds = false;
  /// Worker threads; 0 uses the hardware concurrency.
  unsigned threads = 0;

  std::size_t attempt_cap() const { return max_attempts == 0 ? 10 * trajectories : max_attempts; }
  void validate() const;
};

/// Welford accumulator per grid point and state component.
class RunningMoments {
 public:
  RunningMoments(const TimeGrid& grid, std::size_t dim);

  /// Rejects blown-up trajectories and mismatched grids.
  void update(const Trajectory& traj);

  std::size_t count() const { return count_; }
  std::size_t points() const { return grid_.size(); }
  std::size_t dimension() const { return dim_; }
  const TimeGrid& grid() const { return grid_; }

  double mean(std::size_t point, std::size_t component) const { return mean_[point * dim_ + component]; }
  double sum_sq(std::size_t point, std::size_t component) const { return m2_[point * dim_ + component]; }
  /// Sample variance with the 1/(n-1) denominator; 0 when fewer than two samples.
  double variance(std::size_t point, std::size_t component) const;
  double stddev(std::size_t point, std::size_t component) const;

 private:
  TimeGrid grid_;
  std::size_t dim_;
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

void update_moments(RunningMoments& moments, const Trajectory& traj);

/// Per-point statistics stored point-major: value(i, c) = data[i*dim + c].
struct TrajectoryEnvelope {
  TimeGrid grid;
  std::size_t dim = 0;
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<double> lower;
  std::vector<double> upper;
  std::size_t retained = 0;
  std::size_t discarded = 0;
  double confidence = 0.0;
  double sigma_eps = 0.0;
  std::uint64_t seed = 0;

  std::size_t index(std::size_t point, std::size_t component) const { return point * dim + component; }
};

/// Builds bounds mean +/- c*std from accumulated moments.
TrajectoryEnvelope make_envelope(const RunningMoments& moments, double confidence,
                                 double sigma_eps = 0.0, bool sigma_eps_in_bounds = false);

/// Raised when max_attempts runs out before M finite trajectories are found.
class InsufficientTrajectories : public std::runtime_error {
 public:
  InsufficientTrajectories(std::size_t retained, std::size_t discarded, std::size_t required);
  std::size_t retained() const { return retained_; }
  std::size_t discarded() const { return discarded_; }
  std::size_t required() const { return required_; }

 private:
  std::size_t retained_;
  std::size_t discarded_;
  std::size_t required_;
};

/// One trajectory of the network field under a single sampled mask.
Trajectory sample_trajectory(const WeightSet& weights, DropoutRate rate, const State& u0,
                             const TimeGrid& grid, const EnvelopeConfig& cfg, Rng& rng);

/// Grid of N+1 points t_start + i*h, h = (t_end - t_start)/N.
TimeGrid prediction_grid(double t_start, double t_end, std::size_t intervals);

/// Random stream used for sampling attempt `attempt` under `seed`.
Rng attempt_stream(std::uint64_t seed, std::uint64_t attempt);

/// Samples trajectories until M finite ones are retained, discarding blow-ups.
/// The retained set is the first M finite attempts in attempt order, so the
/// result does not depend on the thread count.
TrajectoryEnvelope predict_envelope(const WeightSet& weights, DropoutRate rate, const State& u0,
                                    double t_start, double t_end, std::size_t intervals,
                                    const EnvelopeConfig& cfg, std::uint64_t seed);

/// Fraction of grid points where lower <= reference <= upper for `component`.
double coverage(const TrajectoryEnvelope& envelope, const Trajectory& reference,
                std::size_t component);

}  // namespace bayesdyn
