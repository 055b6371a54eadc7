#pragma once

#include <cstdint>

#include "loopcert/linsys.hpp"

namespace loopcert {

/// Step map x[t+1] = F(x[t], u[t]) of a plant simulated outside the LTI model.
class NonlinearPlant {
 public:
  virtual ~NonlinearPlant() = default;
  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual Vector step(const Vector& x, const Vector& u) const = 0;
};

struct CartPoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;   // M
  double pole_mass = 0.1;   // m
  double length = 0.5;      // l
  double tau = 0.02;        // Euler step

  void validate() const;
};

// State [eta, eta_dot, theta, theta_dot], scalar force input, Euler step.
Vector cartpole_step(const CartPoleParams& params, const Vector& x, double u);

class CartPole final : public NonlinearPlant {
 public:
  explicit CartPole(CartPoleParams params = {});
  int state_dim() const override { return 4; }
  int input_dim() const override { return 1; }
  Vector step(const Vector& x, const Vector& u) const override;
  const CartPoleParams& params() const { return params_; }

 private:
  CartPoleParams params_;
};

/// x[t+1] = A x + B u, for driving identification and simulation with a
/// known linear model through the same interface.
class LinearDynamics final : public NonlinearPlant {
 public:
  LinearDynamics(Matrix A, Matrix B);
  int state_dim() const override { return static_cast<int>(A_.rows()); }
  int input_dim() const override { return static_cast<int>(B_.cols()); }
  Vector step(const Vector& x, const Vector& u) const override;

 private:
  Matrix A_, B_;
};

/// Linearization about the upright equilibrium. The measurement is the full
/// state, with the scalar perturbation entering the pole-angle reading only.
StateSpacePlant cartpole_linearized(const CartPoleParams& params = {});

/// max over samples (x, u) uniform in [-radius, radius]^5 of
/// ||F(x, u) - (A x + B u)||_inf / radius^2.
double linearization_consistency(const CartPoleParams& params, double radius, int n_samples,
                                 std::uint64_t seed);

}  // namespace loopcert
