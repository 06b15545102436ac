#include "bayesdyn/ode.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bayesdyn {

namespace {

constexpr double kUniformTolerance = 1e-12;
constexpr double kUnderflowFraction = 1e-14;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool all_finite(std::span<const double> u) {
  return std::all_of(u.begin(), u.end(), [](double v) { return std::isfinite(v); });
}

void mark_blow_up(Trajectory& traj, std::size_t from, std::size_t dim) {
  traj.blew_up = true;
  for (std::size_t i = from; i < traj.states.size(); ++i) traj.states[i].assign(dim, kNaN);
}

// Dormand-Prince 5(4) tableau.
namespace dp {
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                 b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
// Fifth-order minus embedded fourth-order weights.
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
}  // namespace dp

class DormandPrince {
 public:
  DormandPrince(const VectorField& rhs, std::size_t dim, double tol)
      : rhs_(rhs), tol_(tol), k1_(dim), k2_(dim), k3_(dim), k4_(dim), k5_(dim), k6_(dim),
        k7_(dim), tmp_(dim), next_(dim) {}

  std::vector<double>& derivative() { return k1_; }

  // Initial step size heuristic of Hairer, Norsett and Wanner.
  double initial_step(const State& y, double span) {
    const std::size_t n = y.size();
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = tol_ + tol_ * std::abs(y[i]);
      d0 = std::max(d0, std::abs(y[i]) / sc);
      d1 = std::max(d1, std::abs(k1_[i]) / sc);
    }
    const double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h0 * k1_[i];
    rhs_(tmp_, k2_);
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = tol_ + tol_ * std::abs(y[i]);
      d2 = std::max(d2, std::abs(k2_[i] - k1_[i]) / sc);
    }
    d2 /= h0;
    const double dmax = std::max(d1, d2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
    double h = std::min(100.0 * h0, h1);
    if (!std::isfinite(h) || h <= 0.0) h = 1e-6;
    return std::min(h, span);
  }

  // Attempts one step of size h from y (derivative k1_). Returns the scaled
  // error norm; the candidate state is left in next_ and its derivative in k7_.
  double attempt(const State& y, double h) {
    using namespace dp;
    const std::size_t n = y.size();
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * a21 * k1_[i];
    rhs_(tmp_, k2_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * (a31 * k1_[i] + a32 * k2_[i]);
    rhs_(tmp_, k3_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = y[i] + h * (a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]);
    rhs_(tmp_, k4_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = y[i] + h * (a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i]);
    rhs_(tmp_, k5_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = y[i] + h * (a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] +
                            a65 * k5_[i]);
    rhs_(tmp_, k6_);
    for (std::size_t i = 0; i < n; ++i)
      next_[i] = y[i] + h * (b1 * k1_[i] + b3 * k3_[i] + b4 * k4_[i] + b5 * k5_[i] +
                             b6 * k6_[i]);
    rhs_(next_, k7_);

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] +
                            e6 * k6_[i] + e7 * k7_[i]);
      const double sc = tol_ + tol_ * std::max(std::abs(y[i]), std::abs(next_[i]));
      const double scaled = std::abs(e) / sc;
      if (!std::isfinite(scaled)) return std::numeric_limits<double>::infinity();
      err = std::max(err, scaled);
    }
    return err;
  }

  void accept(State& y) {
    std::copy(next_.begin(), next_.end(), y.begin());
    std::swap(k1_, k7_);
  }

 private:
  const VectorField& rhs_;
  double tol_;
  std::vector<double> k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, next_;
};

void integrate_adaptive(const VectorField& rhs, const TimeGrid& grid, double tol,
                        Trajectory& traj) {
  const std::size_t dim = traj.states[0].size();
  const double span = grid.back() - grid.front();
  const double h_min = kUnderflowFraction * span;

  State y = traj.states[0];
  DormandPrince stepper(rhs, dim, tol);
  rhs(y, stepper.derivative());
  if (!all_finite(stepper.derivative())) {
    mark_blow_up(traj, 1, dim);
    return;
  }
  double h = stepper.initial_step(y, span);
  double t = grid.front();

  for (std::size_t idx = 1; idx < grid.size(); ++idx) {
    const double target = grid[idx];
    while (t < target) {
      const double remaining = target - t;
      const bool last = h >= remaining * (1.0 - 1e-10);
      const double h_try = last ? remaining : h;
      const double err = stepper.attempt(y, h_try);
      if (err <= 1.0) {
        stepper.accept(y);
        t = last ? target : t + h_try;
        if (!all_finite(y) || !all_finite(stepper.derivative())) {
          if (last) traj.states[idx] = y;
          mark_blow_up(traj, last ? idx + 1 : idx, dim);
          return;
        }
        const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        h = last ? std::max(h, h_try * factor) : h_try * factor;
      } else {
        const double factor =
            std::isfinite(err) ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0) : 0.2;
        h = h_try * factor;
        if (h < h_min) {
          mark_blow_up(traj, idx, dim);
          return;
        }
      }
    }
    traj.states[idx] = y;
  }
}

using Stepper = State (*)(const VectorField&, std::span<const double>, double);

void integrate_fixed(const VectorField& rhs, const TimeGrid& grid, double max_step,
                     Stepper step, Trajectory& traj) {
  const std::size_t dim = traj.states[0].size();
  State y = traj.states[0];
  for (std::size_t idx = 1; idx < grid.size(); ++idx) {
    const double dt = grid[idx] - grid[idx - 1];
    std::size_t substeps = 1;
    if (max_step > 0.0) {
      substeps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt / max_step - 1e-9)));
    }
    const double h = dt / static_cast<double>(substeps);
    for (std::size_t s = 0; s < substeps; ++s) y = step(rhs, y, h);
    traj.states[idx] = y;
    if (!all_finite(y)) {
      mark_blow_up(traj, idx + 1, dim);
      return;
    }
  }
}

}  // namespace

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.empty()) throw std::invalid_argument("time grid must contain at least one time");
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (!std::isfinite(times_[i])) throw std::invalid_argument("time grid contains a non-finite time");
    if (i > 0 && !(times_[i] > times_[i - 1])) {
      throw std::invalid_argument("time grid must be strictly increasing (index " +
                                  std::to_string(i) + ")");
    }
  }
  if (times_.size() >= 2) {
    const double h = (times_.back() - times_.front()) / static_cast<double>(times_.size() - 1);
    const double tol = kUniformTolerance * std::max(1.0, std::abs(h));
    bool uniform = true;
    for (std::size_t i = 1; i < times_.size() && uniform; ++i) {
      uniform = std::abs((times_[i] - times_[i - 1]) - h) < tol;
    }
    if (uniform) spacing_ = h;
  }
}

TimeGrid TimeGrid::uniform(double t0, double h, std::size_t count) {
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("grid spacing must be > 0");
  if (count == 0) throw std::invalid_argument("grid must contain at least one time");
  std::vector<double> times(count);
  for (std::size_t i = 0; i < count; ++i) times[i] = t0 + static_cast<double>(i) * h;
  TimeGrid grid(std::move(times));
  grid.spacing_ = h;
  return grid;
}

bool TimeGrid::matches(const TimeGrid& other, double rel_tol) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (std::abs(times_[i] - other.times_[i]) > rel_tol * std::max(1.0, std::abs(times_[i]))) {
      return false;
    }
  }
  return true;
}

ObservationSet ObservationSet::from_trajectory(const Trajectory& traj, std::optional<double> h) {
  if (traj.blew_up) throw std::invalid_argument("observations cannot come from a blown-up trajectory");
  if (traj.states.size() != traj.grid.size()) {
    throw std::invalid_argument("trajectory states and grid differ in length");
  }
  if (traj.grid.size() < 2) throw std::invalid_argument("observations need at least two samples");
  if (!traj.grid.is_uniform()) throw std::invalid_argument("observation grid is not uniformly spaced");
  const double spacing = *traj.grid.spacing();
  if (h && std::abs(*h - spacing) > 1e-9 * std::max(1.0, spacing)) {
    throw std::invalid_argument("declared spacing h does not match the observation grid");
  }
  for (const auto& s : traj.states) {
    if (!all_finite(s)) throw std::invalid_argument("observations must be finite");
  }
  ObservationSet obs;
  obs.grid = traj.grid;
  obs.states = traj.states;
  obs.h = h.value_or(spacing);
  return obs;
}

ObservationSet ObservationSet::subsample(std::size_t stride) const {
  if (stride == 0) throw std::invalid_argument("subsample stride must be >= 1");
  if (stride == 1) return *this;
  std::vector<double> times;
  ObservationSet out;
  for (std::size_t i = 0; i < states.size(); i += stride) {
    times.push_back(grid[i]);
    out.states.push_back(states[i]);
  }
  if (out.states.size() < 2) throw std::invalid_argument("subsampled observations have fewer than two samples");
  out.grid = TimeGrid(std::move(times));
  out.h = h * static_cast<double>(stride);
  return out;
}

Method parse_method(const std::string& name) {
  if (name == "euler") return Method::euler;
  if (name == "rk4") return Method::rk4;
  if (name == "rk45") return Method::rk45;
  throw std::invalid_argument("unknown integration method '" + name + "'");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::euler: return "euler";
    case Method::rk4: return "rk4";
    case Method::rk45: return "rk45";
  }
  return "unknown";
}

void sprott_b(std::span<const double> u, std::span<double> du) {
  const double x = u[0], y = u[1], z = u[2];
  du[0] = y * z;
  du[1] = x - y;
  du[2] = 1.0 - x * y;
}

State sprott_b_rhs(std::span<const double> u) {
  if (u.size() != 3) throw std::invalid_argument("Sprott B state must have dimension 3");
  State du(3);
  sprott_b(u, du);
  return du;
}

State step_euler(const VectorField& rhs, std::span<const double> u, double h) {
  State du(u.size());
  rhs(u, du);
  State out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] + h * du[i];
  return out;
}

State step_rk4(const VectorField& rhs, std::span<const double> u, double h) {
  const std::size_t n = u.size();
  State k1(n), k2(n), k3(n), k4(n), tmp(n);
  rhs(u, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * h * k1[i];
  rhs(tmp, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * h * k2[i];
  rhs(tmp, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + h * k3[i];
  rhs(tmp, k4);
  State out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = u[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

Trajectory integrate(const VectorField& rhs, const State& u0, const TimeGrid& grid,
                     const IntegrationOptions& options) {
  if (grid.size() == 0) throw std::invalid_argument("cannot integrate over an empty grid");
  if (u0.empty()) throw std::invalid_argument("initial state is empty");
  if (options.method == Method::rk45 && !(options.tol > 0.0)) {
    throw std::invalid_argument("rk45 tolerance must be > 0");
  }
  if (options.max_step < 0.0) throw std::invalid_argument("max_step must be >= 0");

  Trajectory traj;
  traj.grid = grid;
  traj.states.assign(grid.size(), State(u0.size(), 0.0));
  traj.states[0] = u0;
  if (!all_finite(u0)) {
    mark_blow_up(traj, 1, u0.size());
    return traj;
  }
  if (grid.size() == 1) return traj;

  switch (options.method) {
    case Method::euler: integrate_fixed(rhs, grid, options.max_step, &step_euler, traj); break;
    case Method::rk4: integrate_fixed(rhs, grid, options.max_step, &step_rk4, traj); break;
    case Method::rk45: integrate_adaptive(rhs, grid, options.tol, traj); break;
  }
  return traj;
}

std::size_t sample_count(double t_end, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("h must be > 0");
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw std::invalid_argument("t_end must be > 0");
  return static_cast<std::size_t>(std::floor(t_end / h + 1e-9)) + 1;
}

ObservationSet generate_observations(const State& u0, double t_end, double h) {
  if (u0.size() != 3) throw std::invalid_argument("Sprott B initial state must have dimension 3");
  const auto grid = TimeGrid::uniform(0.0, h, sample_count(t_end, h));
  IntegrationOptions opts;
  opts.method = Method::rk45;
  opts.tol = kObservationTolerance;
  const auto traj = integrate(&sprott_b, u0, grid, opts);
  if (traj.blew_up) throw std::runtime_error("ground-truth integration blew up");
  return ObservationSet::from_trajectory(traj, h);
}

}  // namespace bayesdyn
