#include "bayesdyn/trainer.hpp"

#include <cmath>
#include <string>

namespace bayesdyn {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kMaskStream = 3;

}  // namespace

DerivativeSet estimate_derivatives(const ObservationSet& obs) {
  if (obs.size() < 2) throw std::invalid_argument("need at least two observations");
  if (!obs.grid.is_uniform()) throw std::invalid_argument("observations must be uniformly spaced");
  if (!(obs.h > 0.0)) throw std::invalid_argument("observation spacing must be > 0");
  const double spacing = *obs.grid.spacing();
  if (std::abs(spacing - obs.h) > 1e-9 * std::max(1.0, obs.h)) {
    throw std::invalid_argument("observation spacing disagrees with declared h");
  }

  const std::size_t dim = obs.states.front().size();
  DerivativeSet out;
  out.h = obs.h;
  out.sigma_gamma = kSigmaGammaScale * obs.h * obs.h;
  out.points = Batch(dim, dim);
  out.points.inputs.reserve((obs.size() - 1) * dim);
  out.points.targets.reserve((obs.size() - 1) * dim);
  std::vector<double> target(dim);
  for (std::size_t i = 0; i + 1 < obs.size(); ++i) {
    const auto& u = obs.states[i];
    const auto& next = obs.states[i + 1];
    for (std::size_t c = 0; c < dim; ++c) target[c] = (next[c] - u[c]) / obs.h;
    out.points.add(u, target);
  }
  return out;
}

Batch sample_training_batch(const DerivativeSet& derivatives, Rng& rng) {
  Batch batch = derivatives.points;
  if (derivatives.sigma_gamma == 0.0) return batch;
  std::normal_distribution<double> noise(0.0, derivatives.sigma_gamma);
  for (auto& t : batch.targets) t += noise(rng);
  return batch;
}

void adam_step(AdamState& state, WeightSet& weights, const WeightSet& grad, double lr) {
  auto w = weights.flat();
  const auto g = grad.flat();
  if (g.size() != w.size() || state.m.size() != w.size() || state.v.size() != w.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment sizes differ");
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw TrainingError("non-finite gradient at parameter " + std::to_string(i), state.step);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < w.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    w[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

void TrainingSchedule::validate() const {
  if (outer_iters == 0) throw std::invalid_argument("outer_iters must be positive");
  if (phase1_steps == 0 || phase2_steps == 0) throw std::invalid_argument("phase step counts must be positive");
  if (!(phase1_lr > 0.0) || !(phase2_lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
}

TrainingResult train(const NetworkShape& shape, const DerivativeSet& derivatives, DropoutRate rate,
                     const TrainingSchedule& schedule, const TrainingSeeds& seeds,
                     const TrainingObserver& observer) {
  shape.validate();
  schedule.validate();
  if (derivatives.points.empty()) throw std::invalid_argument("no training points");
  if (derivatives.points.input_dim != shape.input_dim ||
      derivatives.points.output_dim != shape.output_dim) {
    throw std::invalid_argument("training data dimensions do not match the network shape");
  }

  Rng init_rng = make_stream(seeds.init, kInitStream);
  Rng noise_rng = make_stream(seeds.noise, kNoiseStream);
  Rng mask_rng = make_stream(seeds.mask, kMaskStream);

  TrainingResult result;
  result.weights = init_weights(shape, init_rng);
  AdamState adam(shape.parameter_count());
  WeightSet grad(shape);
  const auto full = DropoutMask::all_ones(shape.hidden_dim);

  auto monitor = [&](std::size_t iteration) {
    const double loss = loss_mse(result.weights, derivatives.points, full);
    result.loss_history.push_back(loss);
    if (observer) observer(iteration, loss);
  };
  monitor(0);

  std::size_t step_index = 0;
  auto run_phase = [&](const Batch& batch, std::size_t steps, double lr, std::size_t iteration) {
    for (std::size_t s = 0; s < steps; ++s, ++step_index) {
      const auto mask = sample_mask(rate, shape.hidden_dim, mask_rng);
      const double loss = loss_and_gradient(result.weights, batch, mask, grad);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite training loss at outer iteration " +
                                std::to_string(iteration) + " (step " +
                                std::to_string(step_index) + ")",
                            iteration);
      }
      try {
        adam_step(adam, result.weights, grad, lr);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at outer iteration " +
                                std::to_string(iteration),
                            iteration);
      }
    }
  };

  for (std::size_t iter = 1; iter <= schedule.outer_iters; ++iter) {
    const Batch batch = sample_training_batch(derivatives, noise_rng);
    run_phase(batch, schedule.phase1_steps, schedule.phase1_lr, iter);
    run_phase(batch, schedule.phase2_steps, schedule.phase2_lr, iter);
    monitor(iter);
  }
  if (!result.weights.all_finite()) {
    throw TrainingError("training produced non-finite weights", schedule.outer_iters);
  }
  return result;
}

TrainingResult train(const NetworkShape& shape, const ObservationSet& obs, DropoutRate rate,
                     const TrainingSchedule& schedule, std::uint64_t seed,
                     const TrainingObserver& observer) {
  return train(shape, estimate_derivatives(obs), rate, schedule, TrainingSeeds::from(seed),
               observer);
}

}  // namespace bayesdyn
