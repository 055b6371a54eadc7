#include "loopcert/attack.hpp"

#include <cmath>
#include <random>

namespace loopcert {

namespace {

constexpr double kDivergenceLevel = 1e100;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Vector column_max_abs(const Matrix& m) {
  if (m.rows() == 0) return Vector::Zero(m.cols());
  return m.cwiseAbs().colwise().maxCoeff().transpose();
}

void fill_random(Matrix& w, int from, int to, const RandomDisturbance& r) {
  if (!(r.amplitude >= 0.0)) throw Error("disturbance amplitude must be nonnegative");
  std::mt19937_64 rng(r.seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (int t = from; t < to; ++t) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      const double s = r.mode == RandomMode::kUniform ? uniform(rng) : (coin(rng) ? 1.0 : -1.0);
      w(t, j) = r.amplitude * s;
    }
  }
}

SimTrace finish(SimTrace trace) {
  trace.max_abs_w = column_max_abs(trace.w);
  trace.max_abs_x = column_max_abs(trace.x);
  trace.max_abs_y = column_max_abs(trace.y);
  trace.max_abs_u = column_max_abs(trace.u);
  return trace;
}

}  // namespace

AttackPlan design_attack(const ClosedLoopMaps& maps, int target, int horizon, double w_inf) {
  if (!maps.has_impulse) throw Error("attack design needs closed-loop impulse coefficients");
  if (target < 0 || target >= maps.num_states) throw Error("attack target is not a state index");
  if (horizon < 0) throw Error("attack horizon must be nonnegative");
  AttackPlan plan;
  plan.target = target;
  plan.horizon = horizon;
  plan.w_inf = w_inf;
  plan.signs = Matrix::Zero(horizon + 1, maps.num_w);
  const auto& phi = maps.xw;
  for (int t = 0; t <= horizon; ++t) {
    const std::size_t lag = static_cast<std::size_t>(horizon - t);
    if (lag >= phi.length()) continue;
    for (int j = 0; j < maps.num_w; ++j) plan.signs(t, j) = sign(phi[lag](target, j));
  }
  return plan;
}

ClosedLoopMaps shaping_loop(const StateSpacePlant& plant, const Policy& policy, const Matrix& K_d,
                            double eps_trunc) {
  std::vector<Matrix> candidates;
  try {
    candidates.push_back(jacobian_at(policy.network, Vector::Zero(plant.num_outputs())));
  } catch (const OnKink&) {
  }
  if (K_d.size() > 0) candidates.push_back(K_d);
  candidates.push_back(Matrix::Zero(plant.num_inputs(), plant.num_outputs()));
  double rho = 0.0;
  for (const Matrix& K : candidates) {
    try {
      return close_loop(plant, K, eps_trunc, /*keep_impulse=*/true);
    } catch (const NotSchurStable& e) {
      rho = e.spectral_radius();
    }
  }
  throw NotSchurStable(rho);
}

Matrix materialize(const Disturbance& source, int steps, int channels) {
  if (steps < 0) throw Error("step count must be nonnegative");
  Matrix w = Matrix::Zero(steps, channels);
  if (const auto* r = std::get_if<RandomDisturbance>(&source)) {
    fill_random(w, 0, steps, *r);
  } else if (const auto* p = std::get_if<PlanDisturbance>(&source)) {
    if (p->plan.signs.cols() != channels) throw DimensionMismatch("plan channel count mismatch");
    if (p->background) fill_random(w, 0, steps, *p->background);
    for (int k = 0; k < p->plan.signs.rows(); ++k) {
      const int t = p->start + k;
      if (t < 0 || t >= steps) continue;
      w.row(t) = p->plan.w_inf * p->plan.signs.row(k);
    }
  }
  return w;
}

SimulationDiverged::SimulationDiverged(int step, SimTrace partial)
    : Error("simulation diverged at step " + std::to_string(step)),
      step_(step),
      partial_(std::move(partial)) {}

SimTrace simulate(const StateSpacePlant& plant, const Policy& policy, const Disturbance& source,
                  int steps, const Vector& x0, const NonlinearPlant* dynamics) {
  return simulate(plant, policy, materialize(source, steps, plant.num_disturbances()), x0, dynamics);
}

SimTrace simulate(const StateSpacePlant& plant, const Policy& policy, const Matrix& w,
                  const Vector& x0, const NonlinearPlant* dynamics) {
  plant.validate();
  const int n = plant.num_states(), r = plant.num_outputs(), m = plant.num_inputs();
  const int p = plant.num_disturbances();
  if (w.cols() != p) throw DimensionMismatch("disturbance channel count mismatch");
  if (x0.size() != n) throw DimensionMismatch("initial state size mismatch");
  if (policy.input_dim() != r || policy.output_dim() != m) {
    throw DimensionMismatch("policy must map measurements to inputs");
  }
  if (dynamics && (dynamics->state_dim() != n || dynamics->input_dim() != m)) {
    throw DimensionMismatch("nonlinear dynamics do not match the plant");
  }
  const int steps = static_cast<int>(w.rows());
  SimTrace trace;
  trace.w = w;
  trace.x = Matrix::Zero(steps, n);
  trace.y = Matrix::Zero(steps, r);
  trace.u = Matrix::Zero(steps, m);

  Vector x = x0;
  for (int t = 0; t < steps; ++t) {
    const Vector wt = w.row(t).transpose();
    const Vector y = plant.C * x + plant.Dw * wt;
    const Vector u = policy.act(y);
    trace.x.row(t) = x.transpose();
    trace.y.row(t) = y.transpose();
    trace.u.row(t) = u.transpose();
    Vector next = dynamics ? dynamics->step(x, u) : Vector(plant.A * x + plant.B * u);
    next += plant.Bw * wt;
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > kDivergenceLevel) {
      SimTrace partial = trace;
      partial.w.conservativeResize(t + 1, Eigen::NoChange);
      partial.x.conservativeResize(t + 1, Eigen::NoChange);
      partial.y.conservativeResize(t + 1, Eigen::NoChange);
      partial.u.conservativeResize(t + 1, Eigen::NoChange);
      throw SimulationDiverged(t, finish(std::move(partial)));
    }
    x = std::move(next);
  }
  return finish(std::move(trace));
}

DeviationStats state_stats(const SimTrace& trace) {
  const auto n = trace.x.cols();
  const double count = static_cast<double>(trace.x.rows());
  DeviationStats s{Vector::Zero(n), Vector::Zero(n), Vector::Zero(n)};
  if (trace.x.rows() == 0) return s;
  s.mean = trace.x.colwise().sum().transpose() / count;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double var = (trace.x.col(j).array() - s.mean(j)).square().sum() / count;
    s.stddev(j) = std::sqrt(var);
  }
  s.max_abs = column_max_abs(trace.x);
  return s;
}

MonteCarloResult monte_carlo_attack(const StateSpacePlant& plant, const Policy& policy, double w_inf,
                                    int steps, std::uint64_t seed, RandomMode mode,
                                    const NonlinearPlant* dynamics) {
  if (steps < 1) throw Error("Monte-Carlo run needs at least one step");
  MonteCarloResult r;
  r.trace = simulate(plant, policy, RandomDisturbance{w_inf, seed, mode}, steps,
                     Vector::Zero(plant.num_states()), dynamics);
  r.stats = state_stats(r.trace);
  return r;
}

}  // namespace loopcert
