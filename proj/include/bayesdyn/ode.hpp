#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bayesdyn {

using State = std::vector<double>;

/// Autonomous right-hand side du/dt = f(u), written into `du`.
using VectorField = std::function<void(std::span<const double> u, std::span<double> du)>;

/// Strictly increasing sample times. Grids built by uniform() carry their
/// spacing; arbitrary grids are checked for uniformity on construction.
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> times);

  /// times[i] = t0 + i*h for i in [0, count).
  static TimeGrid uniform(double t0, double h, std::size_t count);

  const std::vector<double>& times() const { return times_; }
  std::size_t size() const { return times_.size(); }
  double operator[](std::size_t i) const { return times_[i]; }
  double front() const { return times_.front(); }
  double back() const { return times_.back(); }

  std::optional<double> spacing() const { return spacing_; }
  bool is_uniform() const { return spacing_.has_value(); }

  /// Same length and every time equal within `rel_tol`·max(1,|t|).
  bool matches(const TimeGrid& other, double rel_tol = 1e-9) const;

  bool operator==(const TimeGrid& other) const { return times_ == other.times_; }

 private:
  std::vector<double> times_;
  std::optional<double> spacing_;
};

struct Trajectory {
  TimeGrid grid;
  std::vector<State> states;
  bool blew_up = false;

  std::size_t dimension() const { return states.empty() ? 0 : states.front().size(); }
};

/// Uniformly sampled observations of one trajectory.
struct ObservationSet {
  TimeGrid grid;
  std::vector<State> states;
  double h = 0.0;

  /// Validates uniform spacing, N >= 2 and finite states.
  static ObservationSet from_trajectory(const Trajectory& traj,
                                        std::optional<double> h = std::nullopt);

  /// Every `stride`-th sample, starting from the first.
  ObservationSet subsample(std::size_t stride) const;

  std::size_t size() const { return states.size(); }
};

enum class Method { euler, rk4, rk45 };

Method parse_method(const std::string& name);
std::string to_string(Method method);

struct IntegrationOptions {
  Method method = Method::rk45;
  /// Absolute and relative tolerance of the adaptive method.
  double tol = 1e-8;
  /// Largest fixed step for euler/rk4; 0 steps once per grid interval.
  double max_step = 0.0;
};

/// Sprott B: (yz, x - y, 1 - xy).
void sprott_b(std::span<const double> u, std::span<double> du);
State sprott_b_rhs(std::span<const double> u);

State step_euler(const VectorField& rhs, std::span<const double> u, double h);
State step_rk4(const VectorField& rhs, std::span<const double> u, double h);

/// Integrates from u0 = states[0] through every grid time. A non-finite
/// state or an adaptive step below 1e-14 of the grid span marks the
/// trajectory as blown up; every later state is NaN.
Trajectory integrate(const VectorField& rhs, const State& u0, const TimeGrid& grid,
                     const IntegrationOptions& options = {});

/// Tolerance used for ground-truth data.
inline constexpr double kObservationTolerance = 1e-9;

/// Number of samples floor(t_end/h)+1, robust to t_end/h landing a rounding
/// error below an integer.
std::size_t sample_count(double t_end, double h);

/// Sprott B sampled every h on [0, t_end], integrated with rk45.
ObservationSet generate_observations(const State& u0, double t_end, double h);

}  // namespace bayesdyn
