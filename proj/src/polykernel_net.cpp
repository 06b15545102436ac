#include "bayesdyn/polykernel_net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bayesdyn {

namespace {

// a^(m+1) with m repeated products, matching hadamard_power element-wise.
inline double power_of(double a, unsigned m) {
  double p = a;
  for (unsigned i = 0; i < m; ++i) p *= a;
  return p;
}

void check_compatible(const WeightSet& weights, std::size_t in_dim, const DropoutMask& mask) {
  const auto& s = weights.shape();
  if (in_dim != s.input_dim) {
    throw std::invalid_argument("input dimension " + std::to_string(in_dim) +
                                " does not match network input_dim " +
                                std::to_string(s.input_dim));
  }
  if (mask.size() != s.hidden_dim) {
    throw std::invalid_argument("dropout mask has " + std::to_string(mask.size()) +
                                " entries, network hidden_dim is " +
                                std::to_string(s.hidden_dim));
  }
}

}  // namespace

void NetworkShape::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0) {
    throw std::invalid_argument("network dimensions must all be >= 1");
  }
}

std::size_t NetworkShape::parameter_count() const {
  return hidden_dim * input_dim + hidden_dim + output_dim * hidden_dim + output_dim;
}

DropoutRate::DropoutRate(double r) : r_(r) {
  if (!(r >= 0.0 && r < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(r));
  }
}

DropoutMask::DropoutMask(std::vector<std::uint8_t> entries) : entries_(std::move(entries)) {
  for (auto e : entries_) {
    if (e > 1) throw std::invalid_argument("dropout mask entries must be 0 or 1");
  }
}

DropoutMask DropoutMask::all_ones(std::size_t k) {
  return DropoutMask(std::vector<std::uint8_t>(k, 1));
}

std::size_t DropoutMask::retained_count() const {
  return static_cast<std::size_t>(std::count(entries_.begin(), entries_.end(), 1));
}

WeightSet::WeightSet(const NetworkShape& shape) : shape_(shape) {
  shape_.validate();
  values_.assign(shape_.parameter_count(), 0.0);
}

bool WeightSet::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Batch::add(std::span<const double> x, std::span<const double> target) {
  if (x.size() != input_dim || target.size() != output_dim) {
    throw std::invalid_argument("batch item has the wrong dimension");
  }
  inputs.insert(inputs.end(), x.begin(), x.end());
  targets.insert(targets.end(), target.begin(), target.end());
}

std::vector<double> hadamard_power(std::span<const double> a, unsigned m) {
  std::vector<double> out(a.begin(), a.end());
  for (unsigned i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) out[j] *= a[j];
  }
  return out;
}

DropoutMask sample_mask(DropoutRate rate, std::size_t k, Rng& rng) {
  std::vector<std::uint8_t> entries(k, 1);
  if (rate.value() == 0.0) return DropoutMask(std::move(entries));
  std::bernoulli_distribution keep(rate.retain());
  for (auto& e : entries) e = keep(rng) ? 1 : 0;
  return DropoutMask(std::move(entries));
}

WeightSet init_weights(const NetworkShape& shape, Rng& rng) {
  WeightSet w(shape);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(shape.input_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(shape.hidden_dim));
  std::uniform_real_distribution<double> u1(-s1, s1);
  std::uniform_real_distribution<double> u2(-s2, s2);
  for (auto& v : w.w1()) v = u1(rng);
  for (auto& v : w.b1()) v = u1(rng);
  for (auto& v : w.w2()) v = u2(rng);
  for (auto& v : w.b2()) v = u2(rng);
  return w;
}

void forward(const WeightSet& weights, std::span<const double> x, const DropoutMask& mask,
             std::span<double> out) {
  check_compatible(weights, x.size(), mask);
  const auto& s = weights.shape();
  const auto b1 = weights.b1();
  const auto b2 = weights.b2();
  std::copy(b2.begin(), b2.end(), out.begin());
  for (std::size_t j = 0; j < s.hidden_dim; ++j) {
    if (!mask.kept(j)) continue;
    double z = b1[j];
    for (std::size_t i = 0; i < s.input_dim; ++i) z += weights.w1(j, i) * x[i];
    const double p = power_of(z, s.kernel_order);
    for (std::size_t o = 0; o < s.output_dim; ++o) out[o] += weights.w2(o, j) * p;
  }
}

std::vector<double> forward(const WeightSet& weights, std::span<const double> x,
                            const DropoutMask& mask) {
  std::vector<double> out(weights.shape().output_dim);
  forward(weights, x, mask, out);
  return out;
}

std::vector<double> expected_forward(const WeightSet& weights, std::span<const double> x,
                                     DropoutRate rate) {
  const auto& s = weights.shape();
  const auto full = DropoutMask::all_ones(s.hidden_dim);
  auto out = forward(weights, x, full);
  const auto b2 = weights.b2();
  for (std::size_t o = 0; o < s.output_dim; ++o) {
    out[o] = b2[o] + rate.retain() * (out[o] - b2[o]);
  }
  return out;
}

double loss_mse(const WeightSet& weights, const Batch& batch, const DropoutMask& mask) {
  if (batch.empty()) throw std::invalid_argument("loss_mse requires a non-empty batch");
  if (batch.output_dim != weights.shape().output_dim) {
    throw std::invalid_argument("batch target dimension does not match network output_dim");
  }
  std::vector<double> y(weights.shape().output_dim);
  double total = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    forward(weights, batch.input(n), mask, y);
    const auto t = batch.target(n);
    for (std::size_t o = 0; o < y.size(); ++o) {
      const double r = t[o] - y[o];
      total += r * r;
    }
  }
  return total / static_cast<double>(batch.size());
}

double loss_and_gradient(const WeightSet& weights, const Batch& batch, const DropoutMask& mask,
                         WeightSet& grad) {
  if (batch.empty()) throw std::invalid_argument("gradient requires a non-empty batch");
  check_compatible(weights, batch.input_dim, mask);
  const auto& s = weights.shape();
  if (batch.output_dim != s.output_dim) {
    throw std::invalid_argument("batch target dimension does not match network output_dim");
  }
  if (!(grad.shape() == s)) grad = WeightSet(s);
  std::fill(grad.flat().begin(), grad.flat().end(), 0.0);

  const std::size_t k = s.hidden_dim;
  const unsigned m = s.kernel_order;
  const double scale = 2.0 / static_cast<double>(batch.size());

  std::vector<double> p(k), dp(k), y(s.output_dim), gy(s.output_dim);
  auto gw1 = grad.w1();
  auto gb1 = grad.b1();
  auto gw2 = grad.w2();
  auto gb2 = grad.b2();
  const auto b1 = weights.b1();
  const auto b2 = weights.b2();

  double total = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto x = batch.input(n);
    const auto t = batch.target(n);

    std::copy(b2.begin(), b2.end(), y.begin());
    for (std::size_t j = 0; j < k; ++j) {
      if (!mask.kept(j)) {
        p[j] = dp[j] = 0.0;
        continue;
      }
      double z = b1[j];
      for (std::size_t i = 0; i < s.input_dim; ++i) z += weights.w1(j, i) * x[i];
      const double lower = m == 0 ? 1.0 : power_of(z, m - 1);  // z^m
      p[j] = lower * z;
      dp[j] = static_cast<double>(m + 1) * lower;
      for (std::size_t o = 0; o < s.output_dim; ++o) y[o] += weights.w2(o, j) * p[j];
    }

    // dL/dy = -2/N (t - y)
    for (std::size_t o = 0; o < s.output_dim; ++o) {
      const double r = t[o] - y[o];
      total += r * r;
      gy[o] = -scale * r;
      gb2[o] += gy[o];
    }

    for (std::size_t j = 0; j < k; ++j) {
      if (!mask.kept(j)) continue;
      double gp = 0.0;
      for (std::size_t o = 0; o < s.output_dim; ++o) {
        gw2[o * k + j] += gy[o] * p[j];
        gp += weights.w2(o, j) * gy[o];
      }
      const double gz = gp * dp[j];
      gb1[j] += gz;
      for (std::size_t i = 0; i < s.input_dim; ++i) gw1[j * s.input_dim + i] += gz * x[i];
    }
  }
  return total / static_cast<double>(batch.size());
}

WeightSet gradient(const WeightSet& weights, const Batch& batch, const DropoutMask& mask) {
  WeightSet grad(weights.shape());
  loss_and_gradient(weights, batch, mask, grad);
  return grad;
}

}  // namespace bayesdyn
