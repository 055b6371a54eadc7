#pragma once

#include <optional>
#include <vector>

#include "loopcert/linsys.hpp"

namespace loopcert {

enum class Activation { kRelu, kLinear };

struct Layer {
  Matrix weights;
  Vector bias;
  Activation activation = Activation::kRelu;
};

/// Fully connected network. Layer k maps a_{k-1} to act(W_k a_{k-1} + b_k);
/// the last layer is always linear.
class ReluNetwork {
 public:
  ReluNetwork() = default;
  explicit ReluNetwork(std::vector<Layer> layers);

  const std::vector<Layer>& layers() const { return layers_; }
  int input_dim() const;
  int output_dim() const;

  // Single affine layer u = W y + b.
  static ReluNetwork linear(Matrix W, Vector b);

 private:
  std::vector<Layer> layers_;
};

struct Box {
  Vector center;
  Vector radius;

  Box() = default;
  Box(Vector center, Vector radius);
  static Box symmetric(Vector radius);

  int dim() const { return static_cast<int>(center.size()); }
  Vector lower() const { return center - radius; }
  Vector upper() const { return center + radius; }
};

/// K_L y + b_L <= pi(y) <= K_U y + b_U on the box they were computed for.
struct LinearBounds {
  Matrix K_lower, K_upper;
  Vector b_lower, b_upper;

  Matrix midpoint_gain() const { return 0.5 * (K_lower + K_upper); }
};

struct Interval {
  Vector lower, upper;
};

struct OutputRange {
  Vector lower, upper;
  // Elementwise max(|lower|, |upper|).
  Vector magnitude() const;
};

struct IntervalBounds {
  // Pre-activation interval of every layer (including the output layer).
  std::vector<Interval> pre_activations;
  Interval output;
};

/// Round-to-nearest multiple of `step`.
struct QuantizationSpec {
  double step = 0.0;
  double apply(double u) const;
  Vector apply(const Vector& u) const;
};

Vector evaluate(const ReluNetwork& net, const Vector& y);

IntervalBounds interval_bounds(const ReluNetwork& net, const Box& box);

/// Backward linear relaxation. Intermediate pre-activation bounds come from
/// the same backward pass applied to each hidden layer, intersected with IBP.
LinearBounds linear_relaxation(const ReluNetwork& net, const Box& box);

OutputRange concretize(const LinearBounds& lb, const Box& box);

// concretize(lb, box) widened by step/2.
OutputRange quantized_concretize(const LinearBounds& lb, const Box& box, const QuantizationSpec& q);

/// Output interval: IBP intersected with the backward relaxation run once
/// with lower slope 0 and once with lower slope 1 on every unstable neuron.
/// Never looser than IBP and never looser on a sub-box.
OutputRange output_range(const ReluNetwork& net, const Box& box);

struct ResidualBounds {
  LinearBounds relaxation;  // bounds on pi itself
  OutputRange residual;     // range of pi(y) - K0 y
  Vector u0_bar;            // residual magnitude
  Vector u_bar;             // magnitude of pi over the box
};

/// Bounds on pi_0(y) = pi(y) - K0 y via the relaxation with K0 subtracted
/// from both slopes, plus the full-policy magnitude from output_range.
/// Quantization widens both by step/2.
ResidualBounds residual_bounds(const ReluNetwork& net, const Box& box, const Matrix& K0,
                               const std::optional<QuantizationSpec>& quantization = std::nullopt);

/// Exact Jacobian through the activation pattern at y0. Throws OnKink when a
/// ReLU pre-activation lies within 1e-12 of zero.
Matrix jacobian_at(const ReluNetwork& net, const Vector& y0);

/// Network plus optional output quantization: the object placed in the loop.
struct Policy {
  ReluNetwork network;
  std::optional<QuantizationSpec> quantization;

  Vector act(const Vector& y) const;
  int input_dim() const { return network.input_dim(); }
  int output_dim() const { return network.output_dim(); }
};

}  // namespace loopcert
