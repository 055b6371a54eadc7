#pragma once

#include <cstdint>
#include <optional>
#include <variant>

#include "loopcert/errors.hpp"
#include "loopcert/linsys.hpp"
#include "loopcert/neural.hpp"
#include "loopcert/plant.hpp"

namespace loopcert {

/// Sign sequence w[0..T] (rows = time, cols = disturbance channels) aimed
/// at driving state `target` at time T. The injected signal is w_inf * signs.
struct AttackPlan {
  Matrix signs;
  double w_inf = 1.0;
  int target = 0;
  int horizon = 0;
};

/// w_j[t] = sign(Phi_xw[T - t]_{target, j}) for t = 0..T, with sign(0) = 0 and
/// zero entries wherever T - t runs past the stored impulse response.
AttackPlan design_attack(const ClosedLoopMaps& maps, int target, int horizon, double w_inf = 1.0);

/// Closed-loop maps used to shape attacks: the policy Jacobian at 0 if it
/// stabilizes, else K_d, else no feedback. Impulse coefficients are kept.
/// Throws NotSchurStable when none of these stabilize.
ClosedLoopMaps shaping_loop(const StateSpacePlant& plant, const Policy& policy, const Matrix& K_d,
                            double eps_trunc = kDefaultEpsTrunc);

enum class RandomMode { kUniform, kRademacher };

struct ZeroDisturbance {};

struct RandomDisturbance {
  double amplitude = 0.0;
  std::uint64_t seed = 0;
  RandomMode mode = RandomMode::kUniform;
};

/// Plan injected from step `start`; outside its window the background
/// source (zero when absent) is used.
struct PlanDisturbance {
  AttackPlan plan;
  int start = 0;
  std::optional<RandomDisturbance> background;
};

using Disturbance = std::variant<ZeroDisturbance, RandomDisturbance, PlanDisturbance>;

// Rows are time steps, columns channels.
Matrix materialize(const Disturbance& source, int steps, int channels);

/// Time series of one closed-loop run; row t of each matrix is the value at step t.
struct SimTrace {
  Matrix w, x, y, u;
  Vector max_abs_w, max_abs_x, max_abs_y, max_abs_u;
  int steps() const { return static_cast<int>(x.rows()); }
};

class SimulationDiverged : public Error {
 public:
  SimulationDiverged(int step, SimTrace partial);
  int step() const { return step_; }
  const SimTrace& partial() const { return partial_; }

 private:
  int step_;
  SimTrace partial_;
};

/// Runs u[t] = policy(y[t]), y[t] = C x[t] + Dw w[t] for `steps` steps from
/// x0. The state update is the plant's linear model, or dynamics->step when
/// given, plus Bw w[t]. The uncertainty channel is left at zero.
SimTrace simulate(const StateSpacePlant& plant, const Policy& policy, const Disturbance& source,
                  int steps, const Vector& x0, const NonlinearPlant* dynamics = nullptr);

// Same with an explicit disturbance matrix (steps x channels).
SimTrace simulate(const StateSpacePlant& plant, const Policy& policy, const Matrix& w,
                  const Vector& x0, const NonlinearPlant* dynamics = nullptr);

struct DeviationStats {
  Vector mean, stddev, max_abs;
};

// Per-state statistics over the rows of x.
DeviationStats state_stats(const SimTrace& trace);

struct MonteCarloResult {
  SimTrace trace;
  DeviationStats stats;
};

/// Random persistent perturbation of amplitude w_inf from the zero state.
MonteCarloResult monte_carlo_attack(const StateSpacePlant& plant, const Policy& policy, double w_inf,
                                    int steps, std::uint64_t seed,
                                    RandomMode mode = RandomMode::kUniform,
                                    const NonlinearPlant* dynamics = nullptr);

}  // namespace loopcert
