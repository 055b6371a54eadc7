#include "loopcert/plant.hpp"

#include <cmath>
#include <random>

#include "loopcert/errors.hpp"

namespace loopcert {

void CartPoleParams::validate() const {
  for (double v : {gravity, cart_mass, pole_mass, length, tau}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error("cart-pole parameters must be positive");
  }
}

Vector cartpole_step(const CartPoleParams& p, const Vector& x, double u) {
  if (x.size() != 4) throw DimensionMismatch("cart-pole state has 4 entries");
  const double M = p.cart_mass, m = p.pole_mass, l = p.length, g = p.gravity;
  const double eta_dot = x(1), theta = x(2), theta_dot = x(3);
  const double s = std::sin(theta), c = std::cos(theta);
  const double denom = 4.0 / 3.0 * (M + m) * l - m * l * c * c;
  const double eta_ddot =
      (4.0 / 3.0 * m * l * l * theta_dot * theta_dot * s - m * g * l * s * c + 4.0 / 3.0 * l * u) /
      denom;
  const double theta_ddot =
      (-m * l * theta_dot * theta_dot * s * c + (M + m) * g * s - c * u) / denom;
  Vector next(4);
  next << x(0) + p.tau * eta_dot, eta_dot + p.tau * eta_ddot, theta + p.tau * theta_dot,
      theta_dot + p.tau * theta_ddot;
  return next;
}

CartPole::CartPole(CartPoleParams params) : params_(params) { params_.validate(); }

Vector CartPole::step(const Vector& x, const Vector& u) const {
  if (u.size() != 1) throw DimensionMismatch("cart-pole input is scalar");
  return cartpole_step(params_, x, u(0));
}

LinearDynamics::LinearDynamics(Matrix A, Matrix B) : A_(std::move(A)), B_(std::move(B)) {
  if (A_.rows() != A_.cols() || B_.rows() != A_.rows()) throw DimensionMismatch("bad (A, B) shapes");
}

Vector LinearDynamics::step(const Vector& x, const Vector& u) const { return A_ * x + B_ * u; }

StateSpacePlant cartpole_linearized(const CartPoleParams& p) {
  p.validate();
  const double M = p.cart_mass, m = p.pole_mass, l = p.length, g = p.gravity, tau = p.tau;
  Matrix A = Matrix::Identity(4, 4);
  A(0, 1) = tau;
  A(1, 2) = -3.0 * m * g * tau / (4.0 * M + m);
  A(2, 3) = tau;
  A(3, 2) = 3.0 * (M + m) * g * tau / ((4.0 * M + m) * l);
  Matrix B(4, 1);
  B << 0.0, 4.0 * tau / (4.0 * M + m), 0.0, -3.0 * tau / ((4.0 * M + m) * l);
  Matrix Dw = Matrix::Zero(4, 1);
  Dw(2, 0) = 1.0;
  return StateSpacePlant::nominal(std::move(A), std::move(B), Matrix::Zero(4, 1),
                                  Matrix::Identity(4, 4), std::move(Dw));
}

double linearization_consistency(const CartPoleParams& params, double radius, int n_samples,
                                 std::uint64_t seed) {
  if (!(radius > 0.0)) throw Error("radius must be positive");
  const StateSpacePlant lin = cartpole_linearized(params);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-radius, radius);
  double worst = 0.0;
  for (int k = 0; k < n_samples; ++k) {
    Vector x(4);
    for (int i = 0; i < 4; ++i) x(i) = dist(rng);
    const double u = dist(rng);
    const Vector residual = cartpole_step(params, x, u) - (lin.A * x + lin.B * Vector::Constant(1, u));
    worst = std::max(worst, residual.cwiseAbs().maxCoeff() / (radius * radius));
  }
  return worst;
}

}  // namespace loopcert
