#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "bayesdyn/ode.hpp"
#include "bayesdyn/polykernel_net.hpp"

namespace bayesdyn {

/// Forward-difference derivative targets paired with the state they start
/// from, and the Gaussian noise scale sigma_gamma = c h^2 (c = 1).
struct DerivativeSet {
  Batch points;
  double h = 0.0;
  double sigma_gamma = 0.0;

  std::size_t size() const { return points.size(); }
};

inline constexpr double kSigmaGammaScale = 1.0;

DerivativeSet estimate_derivatives(const ObservationSet& obs);

/// Full-data batch whose targets carry i.i.d. N(0, sigma_gamma) noise per component.
Batch sample_training_batch(const DerivativeSet& derivatives, Rng& rng);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t parameters) : m(parameters, 0.0), v(parameters, 0.0) {}
};

/// Thrown when optimisation meets a non-finite loss or gradient.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

/// One bias-corrected Adam update of `weights` in place.
void adam_step(AdamState& state, WeightSet& weights, const WeightSet& grad, double lr);

struct TrainingSchedule {
  std::size_t outer_iters = 1000;
  std::size_t phase1_steps = 10;
  double phase1_lr = 0.01;
  std::size_t phase2_steps = 100;
  double phase2_lr = 0.001;

  void validate() const;
};

/// Separate streams for weight initialisation, target noise and masks.
struct TrainingSeeds {
  std::uint64_t init = 0;
  std::uint64_t noise = 0;
  std::uint64_t mask = 0;

  static TrainingSeeds from(std::uint64_t seed) { return {seed, seed, seed}; }
};

struct TrainingResult {
  WeightSet weights;
  /// Full-data loss on noise-free targets with every unit kept, recorded
  /// before training (entry 0) and after each outer iteration.
  std::vector<double> loss_history;
};

using TrainingObserver = std::function<void(std::size_t iteration, double loss)>;

/// Each outer iteration draws one noisy batch, then takes phase1_steps Adam
/// steps at phase1_lr followed by phase2_steps at phase2_lr on it, with a
/// fresh dropout mask per step. Adam moments persist across the whole run.
TrainingResult train(const NetworkShape& shape, const DerivativeSet& derivatives, DropoutRate rate,
                     const TrainingSchedule& schedule, const TrainingSeeds& seeds,
                     const TrainingObserver& observer = {});

TrainingResult train(const NetworkShape& shape, const ObservationSet& obs, DropoutRate rate,
                     const TrainingSchedule& schedule, std::uint64_t seed,
                     const TrainingObserver& observer = {});

}  // namespace bayesdyn
