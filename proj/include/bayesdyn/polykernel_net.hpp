#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bayesdyn/rng.hpp"

namespace bayesdyn {

/// Layer sizes of the polynomial kernel network
///
///   f(x | d) = W2 [ pow_m(d * (W1 x + B1)) ] + B2
///
/// where pow_m is the repeated Hadamard product with pow_0(a) = a and
/// pow_1(a) = a*a. The effective polynomial degree is kernel_order + 1.
struct NetworkShape {
  std::size_t input_dim = 3;
  std::size_t hidden_dim = 10;
  std::size_t output_dim = 3;
  unsigned kernel_order = 1;

  void validate() const;
  std::size_t parameter_count() const;

  bool operator==(const NetworkShape&) const = default;
};

/// Probability that a hidden unit is dropped. Retain probability is 1 - r.
class DropoutRate {
 public:
  explicit DropoutRate(double r);

  double value() const { return r_; }
  double retain() const { return 1.0 - r_; }

 private:
  double r_;
};

/// Binary mask over the hidden layer.
class DropoutMask {
 public:
  DropoutMask() = default;
  explicit DropoutMask(std::vector<std::uint8_t> entries);

  static DropoutMask all_ones(std::size_t k);

  std::size_t size() const { return entries_.size(); }
  bool kept(std::size_t j) const { return entries_[j] != 0; }
  const std::vector<std::uint8_t>& entries() const { return entries_; }
  std::size_t retained_count() const;

 private:
  std::vector<std::uint8_t> entries_;
};

/// The four parameter tensors, stored contiguously as [W1 | B1 | W2 | B2]
/// with W1 (hidden x input) and W2 (output x hidden) row-major. The same
/// layout doubles as the gradient container.
class WeightSet {
 public:
  WeightSet() = default;
  explicit WeightSet(const NetworkShape& shape);

  const NetworkShape& shape() const { return shape_; }

  std::span<double> w1() { return {values_.data(), w1_size()}; }
  std::span<double> b1() { return {values_.data() + b1_offset(), shape_.hidden_dim}; }
  std::span<double> w2() { return {values_.data() + w2_offset(), w2_size()}; }
  std::span<double> b2() { return {values_.data() + b2_offset(), shape_.output_dim}; }
  std::span<const double> w1() const { return {values_.data(), w1_size()}; }
  std::span<const double> b1() const { return {values_.data() + b1_offset(), shape_.hidden_dim}; }
  std::span<const double> w2() const { return {values_.data() + w2_offset(), w2_size()}; }
  std::span<const double> b2() const { return {values_.data() + b2_offset(), shape_.output_dim}; }

  double& w1(std::size_t j, std::size_t i) { return values_[j * shape_.input_dim + i]; }
  double& w2(std::size_t o, std::size_t j) { return values_[w2_offset() + o * shape_.hidden_dim + j]; }
  double w1(std::size_t j, std::size_t i) const { return values_[j * shape_.input_dim + i]; }
  double w2(std::size_t o, std::size_t j) const { return values_[w2_offset() + o * shape_.hidden_dim + j]; }

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }

  bool all_finite() const;

  bool operator==(const WeightSet&) const = default;

 private:
  std::size_t w1_size() const { return shape_.hidden_dim * shape_.input_dim; }
  std::size_t w2_size() const { return shape_.output_dim * shape_.hidden_dim; }
  std::size_t b1_offset() const { return w1_size(); }
  std::size_t w2_offset() const { return b1_offset() + shape_.hidden_dim; }
  std::size_t b2_offset() const { return w2_offset() + w2_size(); }

  NetworkShape shape_;
  std::vector<double> values_;
};

/// Row-major (input, target) pairs evaluated together.
struct Batch {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<double> inputs;
  std::vector<double> targets;

  Batch() = default;
  Batch(std::size_t in_dim, std::size_t out_dim) : input_dim(in_dim), output_dim(out_dim) {}

  std::size_t size() const { return input_dim == 0 ? 0 : inputs.size() / input_dim; }
  bool empty() const { return size() == 0; }
  void add(std::span<const double> x, std::span<const double> target);

  std::span<const double> input(std::size_t i) const { return {inputs.data() + i * input_dim, input_dim}; }
  std::span<const double> target(std::size_t i) const {
    return {targets.data() + i * output_dim, output_dim};
  }
};

std::vector<double> hadamard_power(std::span<const double> a, unsigned m);

DropoutMask sample_mask(DropoutRate rate, std::size_t k, Rng& rng);

/// Uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer.
WeightSet init_weights(const NetworkShape& shape, Rng& rng);

void forward(const WeightSet& weights, std::span<const double> x, const DropoutMask& mask,
             std::span<double> out);
std::vector<double> forward(const WeightSet& weights, std::span<const double> x,
                            const DropoutMask& mask);

/// Exact mean of forward() over the mask distribution. Masks are binary, so
/// d^(m+1) = d and the expectation collapses to (1 - r) W2 pow_m(z) + B2.
std::vector<double> expected_forward(const WeightSet& weights, std::span<const double> x,
                                     DropoutRate rate);

double loss_mse(const WeightSet& weights, const Batch& batch, const DropoutMask& mask);

WeightSet gradient(const WeightSet& weights, const Batch& batch, const DropoutMask& mask);

/// Loss and its gradient from a single pass over the batch.
double loss_and_gradient(const WeightSet& weights, const Batch& batch, const DropoutMask& mask,
                         WeightSet& grad);

}  // namespace bayesdyn
