#pragma once

#include <cstdint>
#include <vector>

#include "loopcert/linsys.hpp"
#include "loopcert/neural.hpp"

namespace loopcert {

struct LqrSolution {
  Matrix P;
  Matrix K;  // u = -K x
  int iterations = 0;
};

/// Discrete Riccati fixed point P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA
/// starting from P = Q, stopped when the max entry change drops below
/// tol * max(1, max |P|). Throws NoConvergence after max_iter sweeps.
LqrSolution dare_solve(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                       double tol = 1e-12, int max_iter = 100000);

// Max entry of P - (Q + A'PA - A'PB (R + B'PB)^-1 B'PA).
double riccati_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                        const Matrix& P);

struct CloneConfig {
  std::vector<int> hidden_widths{16, 16, 16};
  // Inputs are sampled uniformly on [-radius, radius] per coordinate.
  Vector sample_radius;
  int samples = 10000;
  int steps = 10000;
  int batch_size = 256;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct CloneResult {
  ReluNetwork network;
  double mse = 0.0;  // on the training set, in target units
};

/// Fits a ReLU network to the linear law u = -K y by minibatch gradient
/// descent with momentum. Inputs and targets are
/// standardized during training and the scaling is folded back into the
/// first and last layers; the output bias is then shifted so the network
/// maps 0 to 0.
CloneResult behavior_clone(const Matrix& K, const CloneConfig& config);

}  // namespace loopcert
