#pragma once

// Reference implementations used only by the tests. They are written
// directly from the model equations with explicit matrices and loops and
// share no code path with the library routines they check.

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "bayesdyn/ode.hpp"
#include "bayesdyn/polykernel_net.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<long double>>;

struct Dense {
  Matrix w1, w2;
  std::vector<long double> b1, b2;
  unsigned order = 1;
};

inline Dense to_dense(const bayesdyn::WeightSet& w) {
  const auto& s = w.shape();
  Dense d;
  d.order = s.kernel_order;
  d.w1.assign(s.hidden_dim, std::vector<long double>(s.input_dim));
  d.w2.assign(s.output_dim, std::vector<long double>(s.hidden_dim));
  for (std::size_t j = 0; j < s.hidden_dim; ++j)
    for (std::size_t i = 0; i < s.input_dim; ++i) d.w1[j][i] = w.flat()[j * s.input_dim + i];
  const std::size_t b1_at = s.hidden_dim * s.input_dim;
  const std::size_t w2_at = b1_at + s.hidden_dim;
  const std::size_t b2_at = w2_at + s.output_dim * s.hidden_dim;
  for (std::size_t j = 0; j < s.hidden_dim; ++j) d.b1.push_back(w.flat()[b1_at + j]);
  for (std::size_t o = 0; o < s.output_dim; ++o)
    for (std::size_t j = 0; j < s.hidden_dim; ++j) d.w2[o][j] = w.flat()[w2_at + o * s.hidden_dim + j];
  for (std::size_t o = 0; o < s.output_dim; ++o) d.b2.push_back(w.flat()[b2_at + o]);
  return d;
}

/// y = W2 [pow_m(d o (W1 x + B1))] + B2, evaluated in extended precision.
inline std::vector<long double> forward(const Dense& net, const std::vector<double>& x,
                                        const std::vector<std::uint8_t>& mask) {
  const std::size_t k = net.b1.size();
  std::vector<long double> z(k);
  for (std::size_t j = 0; j < k; ++j) {
    long double acc = net.b1[j];
    for (std::size_t i = 0; i < x.size(); ++i) acc += net.w1[j][i] * x[i];
    z[j] = acc * mask[j];
  }
  std::vector<long double> p(z);
  for (unsigned r = 0; r < net.order; ++r)
    for (std::size_t j = 0; j < k; ++j) p[j] = p[j] * z[j];
  std::vector<long double> y(net.b2);
  for (std::size_t o = 0; o < y.size(); ++o)
    for (std::size_t j = 0; j < k; ++j) y[o] += net.w2[o][j] * p[j];
  return y;
}

inline long double loss(const bayesdyn::WeightSet& w, const bayesdyn::Batch& batch,
                        const std::vector<std::uint8_t>& mask) {
  const auto net = to_dense(w);
  long double total = 0.0L;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto in = batch.input(n);
    const auto y = forward(net, std::vector<double>(in.begin(), in.end()), mask);
    const auto t = batch.target(n);
    for (std::size_t o = 0; o < y.size(); ++o) total += (t[o] - y[o]) * (t[o] - y[o]);
  }
  return total / static_cast<long double>(batch.size());
}

/// Central differences of the extended-precision loss.
inline std::vector<double> finite_difference_gradient(const bayesdyn::WeightSet& w,
                                                      const bayesdyn::Batch& batch,
                                                      const std::vector<std::uint8_t>& mask,
                                                      double step = 1e-5) {
  std::vector<double> g(w.flat().size());
  for (std::size_t p = 0; p < g.size(); ++p) {
    auto plus = w;
    auto minus = w;
    plus.flat()[p] += step;
    minus.flat()[p] -= step;
    const long double diff = loss(plus, batch, mask) - loss(minus, batch, mask);
    g[p] = static_cast<double>(diff / (static_cast<long double>(plus.flat()[p]) - minus.flat()[p]));
  }
  return g;
}

/// Two-pass sample mean and standard deviation (1/(n-1)) over trajectories.
inline std::pair<std::vector<double>, std::vector<double>> batch_moments(
    const std::vector<bayesdyn::Trajectory>& trajs) {
  const std::size_t points = trajs.front().states.size();
  const std::size_t dim = trajs.front().states.front().size();
  const double n = static_cast<double>(trajs.size());
  std::vector<double> mean(points * dim, 0.0), sd(points * dim, 0.0);
  for (std::size_t i = 0; i < points; ++i) {
    for (std::size_t c = 0; c < dim; ++c) {
      double sum = 0.0;
      for (const auto& t : trajs) sum += t.states[i][c];
      const double mu = sum / n;
      double ss = 0.0;
      for (const auto& t : trajs) ss += (t.states[i][c] - mu) * (t.states[i][c] - mu);
      mean[i * dim + c] = mu;
      sd[i * dim + c] = trajs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
  }
  return {mean, sd};
}

/// Least-squares slope of log(err) against log(h).
inline double loglog_slope(const std::vector<double>& h, const std::vector<double>& err) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double x = std::log(h[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline bayesdyn::WeightSet random_weights(const bayesdyn::NetworkShape& shape, std::mt19937_64& rng,
                                          double scale = 1.0) {
  bayesdyn::WeightSet w(shape);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : w.flat()) v = u(rng);
  return w;
}

/// Component-wise max distance of the final state from a reference.
inline double max_abs_diff(const bayesdyn::State& a, const bayesdyn::State& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oracle
