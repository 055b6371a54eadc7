#pragma once

#include <cstdint>
#include <vector>

#include "loopcert/linsys.hpp"
#include "loopcert/plant.hpp"

namespace loopcert {

/// One recorded run: states x[0..T] and inputs u[0..T-1].
struct Episode {
  std::vector<Vector> states;
  std::vector<Vector> inputs;
};

/// N episodes of T steps each from x0 = 0 with inputs i.i.d. uniform on
/// [-u_amplitude, u_amplitude].
std::vector<Episode> collect(const NonlinearPlant& plant, int episodes, int steps = 30,
                             double u_amplitude = 0.5, std::uint64_t seed = 0);

struct LinearFit {
  Matrix A, B;
};

/// Least-squares (A, B) for x[t+1] ~ A x[t] + B u[t] over every transition.
/// Throws RankDeficient when the regressor Gram matrix has condition
/// number above 1e12 or there are fewer transitions than unknowns per row.
LinearFit least_squares_fit(const std::vector<Episode>& data);

// Sum over transitions of ||x[t+1] - A x[t] - B u[t]||^2.
double fit_residual(const LinearFit& fit, const std::vector<Episode>& data);

struct LearnedModel {
  Matrix A0, B0;
  Matrix delta_A, delta_B;
  std::vector<LinearFit> bootstrap_fits;

  // [delta_A delta_B]
  Matrix gamma_delta() const;
};

/// Nominal fit on all data plus n_boot fits on episode resamples drawn with
/// replacement; delta_A / delta_B are the elementwise max deviations.
LearnedModel bootstrap_uncertainty(const std::vector<Episode>& data, int n_boot = 100,
                                   std::uint64_t seed = 0);

/// Uncertain plant x+ = A0 x + B0 u + Bw w + delta, alpha = [x; u], keeping
/// the measurement model, disturbance channels and limits of `io`.
StateSpacePlant learned_plant(const LearnedModel& model, const StateSpacePlant& io);

}  // namespace loopcert
