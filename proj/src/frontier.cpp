#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <thread>

#include "loopcert/attack.hpp"
#include "loopcert/certify.hpp"
#include "loopcert/errors.hpp"

namespace loopcert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxAmplitude = 1152921504606846976.0;  // 2^60
constexpr double kMinAmplitude = 1e-30;
constexpr int kMaxBisections = 200;

struct Bracket {
  double lo, hi;
  bool bracketed;
};

// Geometric search from 1 (doubling while ok, halving while not), then
// bisection to relative width tol. `lo` always satisfies ok (or is 0).
Bracket bisect_boundary(const std::function<bool(double)>& ok, double tol) {
  double lo = 0.0, hi = 1.0;
  if (ok(hi)) {
    while (ok(2.0 * hi)) {
      hi *= 2.0;
      if (hi >= kMaxAmplitude) return Bracket{hi, kInf, false};
    }
    lo = hi;
    hi *= 2.0;
  } else {
    while (!ok(0.5 * hi)) {
      hi *= 0.5;
      if (hi < kMinAmplitude) return Bracket{0.0, hi, true};
    }
    lo = 0.5 * hi;
  }
  for (int it = 0; it < kMaxBisections && hi - lo > tol * lo; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ok(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return Bracket{lo, hi, true};
}

StateSpacePlant with_limit(StateSpacePlant plant, const std::vector<int>& states, double x_lim,
                           double w_inf) {
  plant.x_lim.setConstant(kInf);
  for (int i : states) plant.x_lim(i) = x_lim;
  plant.w_inf = w_inf;
  return plant;
}

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count && !failed; i = next++) {
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

int default_thread_count() {
  if (const char* env = std::getenv("LOOPCERT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<FrontierPoint> frontier(const StateSpacePlant& plant, const Policy& policy,
                                    const Matrix& K_d, const Matrix& gamma_delta,
                                    const std::vector<double>& x_lim_values,
                                    const FrontierOptions& options) {
  plant.validate();
  if (!(options.tol > 0.0)) throw Error("frontier tolerance must be positive");
  std::vector<int> states = options.constrained_states;
  if (states.empty()) {
    for (int i = 0; i < plant.num_states(); ++i) states.push_back(i);
  }
  for (int i : states) {
    if (i < 0 || i >= plant.num_states()) throw Error("constrained state index out of range");
  }
  for (double v : x_lim_values) {
    if (!(v >= 0.0)) throw Error("x_lim values must be nonnegative");
  }

  std::vector<AttackPlan> plans;
  if (options.with_attack) {
    const ClosedLoopMaps maps = shaping_loop(plant, policy, K_d, options.cert.eps_trunc);
    for (int i : states) plans.push_back(design_attack(maps, i, options.attack_horizon));
  }

  std::vector<FrontierPoint> points(x_lim_values.size());
  const int threads = options.threads > 0 ? options.threads : default_thread_count();
  parallel_for(static_cast<int>(points.size()), threads, [&](int idx) {
    const double x_lim = x_lim_values[idx];
    FrontierPoint& pt = points[idx];
    pt.x_lim = x_lim;

    auto certified = [&](double w) {
      return algorithm1(with_limit(plant, states, x_lim, w), policy, K_d, gamma_delta, options.cert)
          .success;
    };
    pt.w_certified = bisect_boundary(certified, options.tol).lo;

    if (options.with_baseline) {
      auto baseline_ok = [&](double w) {
        return lemma1_certify(with_limit(plant, states, x_lim, w), policy, K_d, gamma_delta,
                              options.baseline)
            .certified;
      };
      pt.w_baseline = bisect_boundary(baseline_ok, options.tol).lo;
    }

    if (options.with_attack) {
      // Smallest amplitude at which some designed attack breaks the limit.
      auto safe = [&](double w) {
        for (std::size_t k = 0; k < plans.size(); ++k) {
          PlanDisturbance d{plans[k], 0, std::nullopt};
          d.plan.w_inf = w;
          try {
            const SimTrace tr = simulate(plant, policy, d, plans[k].horizon + 1,
                                         Vector::Zero(plant.num_states()));
            if (tr.max_abs_x(plans[k].target) > x_lim) return false;
          } catch (const SimulationDiverged&) {
            return false;
          }
        }
        return true;
      };
      pt.w_attack = bisect_boundary(safe, options.tol).hi;
    }
  });
  return points;
}

}  // namespace loopcert
