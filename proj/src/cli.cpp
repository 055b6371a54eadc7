#include "loopcert/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "loopcert/attack.hpp"
#include "loopcert/certify.hpp"
#include "loopcert/errors.hpp"
#include "loopcert/io.hpp"
#include "loopcert/plant.hpp"
#include "loopcert/policysynth.hpp"
#include "loopcert/sysid.hpp"

// Units: every JSON file read or written holds angles in radians. --degrees
// only rescales angle-valued command-line options (w_inf, x_lim) and the
// frontier CSV columns.

namespace loopcert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNegative = 2;

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  double eps_trunc = kDefaultEpsTrunc;
  bool degrees = false;

  double to_internal() const { return degrees ? std::numbers::pi / 180.0 : 1.0; }
  double to_external() const { return degrees ? 180.0 / std::numbers::pi : 1.0; }
};

class Emitter {
 public:
  Emitter(const Globals& g, std::ostream& out) : g_(g), out_(out) {}
  void operator()(const std::string& text) const {
    if (g_.out.empty() || g_.out == "-") {
      out_ << text;
      out_.flush();
    } else {
      write_text_file(g_.out, text);
    }
  }

 private:
  const Globals& g_;
  std::ostream& out_;
};

struct LimitArgs {
  std::vector<double> x_lim;
  std::vector<int> states;
  std::optional<double> w_inf;
};

void add_limit_options(CLI::App* sub, LimitArgs& a) {
  sub->add_option("--x-lim", a.x_lim,
                  "State limits: one per state, or a single value for --states (all states if omitted)");
  sub->add_option("--states", a.states, "State indices constrained by a single --x-lim value");
  sub->add_option("--w-inf", a.w_inf, "Perturbation amplitude bound")->check(CLI::NonNegativeNumber);
}

void check_index(int i, int n, const char* what) {
  if (i < 0 || i >= n) {
    throw Error(std::string(what) + " index " + std::to_string(i) + " out of range [0, " +
                std::to_string(n) + ")");
  }
}

void apply_limits(StateSpacePlant& p, const LimitArgs& a, double scale) {
  if (a.w_inf) p.w_inf = *a.w_inf * scale;
  if (a.x_lim.empty()) {
    if (!a.states.empty()) throw Error("--states requires --x-lim");
    return;
  }
  const int n = p.num_states();
  if (!a.states.empty() || a.x_lim.size() == 1) {
    if (a.x_lim.size() != 1) throw Error("--states takes a single --x-lim value");
    p.x_lim.setConstant(a.states.empty() ? a.x_lim[0] * scale : kInf);
    for (int i : a.states) {
      check_index(i, n, "state");
      p.x_lim(i) = a.x_lim[0] * scale;
    }
    return;
  }
  if (static_cast<int>(a.x_lim.size()) != n) {
    throw Error("--x-lim expects 1 or " + std::to_string(n) + " values, got " +
                std::to_string(a.x_lim.size()));
  }
  for (int i = 0; i < n; ++i) p.x_lim(i) = a.x_lim[i] * scale;
}

Vector to_vector(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

PlantFile load_plant(const std::string& path) {
  try {
    PlantFile f = plant_from_json(read_json_file(path));
    f.plant.validate();
    return f;
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

Policy load_policy(const std::string& path, std::optional<double> quantize) {
  Policy policy;
  try {
    policy = policy_from_json(read_json_file(path));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
  if (quantize) {
    if (!(*quantize > 0.0)) throw Error("--quantize step must be positive");
    policy.quantization = QuantizationSpec{*quantize};
  }
  return policy;
}

// Bare matrices are feedback gains (u = G y). Objects may carry
// "feedback_gain" (same convention) or "K" (u = -K y).
Matrix load_gain(const std::string& path) {
  const Json j = read_json_file(path);
  if (j.is_object() && j.contains("feedback_gain")) return matrix_from_json(j["feedback_gain"], path);
  if (j.is_object() && j.contains("K") && !j.contains("rows")) return -matrix_from_json(j["K"], path);
  return matrix_from_json(j, path);
}

Matrix load_gamma(const std::string& path, const PlantFile& plant) {
  if (path.empty()) return plant.gamma_delta.value_or(Matrix());
  const Json j = read_json_file(path);
  if (j.is_object() && j.contains("Gamma_Delta")) return matrix_from_json(j["Gamma_Delta"], path);
  return matrix_from_json(j, path);
}

CartPoleParams load_params(const std::string& path) {
  if (path.empty()) return CartPoleParams{};
  return cartpole_params_from_json(read_json_file(path));
}

Json with_units(Json j) {
  j["units"] = "radians";
  return j;
}

std::optional<RandomMode> parse_mode(const std::string& s) {
  if (s == "uniform") return RandomMode::kUniform;
  if (s == "rademacher") return RandomMode::kRademacher;
  return std::nullopt;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Invariant-set certification and attack synthesis for neural feedback loops",
               "loopcert"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random draw");
  app.add_option("--out", g.out, "Output file (stdout when omitted)");
  app.add_option("--eps-trunc", g.eps_trunc, "Impulse-response truncation tolerance")
      ->check(CLI::PositiveNumber);
  app.add_flag("--degrees", g.degrees, "Read w_inf/x_lim options and write frontier CSV in degrees");
  const Emitter emit(g, out);

  std::string plant_path, policy_path, kd_path, gamma_path;
  std::optional<double> quantize;
  LimitArgs limits;
  double eps = 1e-6;
  int max_iter = 200;

  auto plant_policy = [&](CLI::App* sub) {
    sub->add_option("--plant", plant_path, "Plant JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--policy", policy_path, "Policy JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--kd", kd_path, "Fallback feedback gain JSON")->check(CLI::ExistingFile);
    sub->add_option("--quantize", quantize, "Quantize the policy output with this step");
  };
  auto search_options = [&](CLI::App* sub) {
    sub->add_option("--gamma-delta", gamma_path, "Uncertainty gain JSON (default: plant Gamma_Delta)")
        ->check(CLI::ExistingFile);
    sub->add_option("--eps", eps, "Inflation step")->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", max_iter, "Iteration cap")->check(CLI::PositiveNumber);
  };

  // certify
  auto* certify = app.add_subcommand("certify", "Search for an invariant box (exit 2 when none is found)");
  certify->fallthrough();
  plant_policy(certify);
  search_options(certify);
  add_limit_options(certify, limits);

  // baseline
  int samples = 2000, probe_pairs = 200;
  double probe_radius = 1.0;
  auto* baseline = app.add_subcommand("baseline", "Small-gain baseline with a sampled policy gain");
  baseline->fallthrough();
  plant_policy(baseline);
  search_options(baseline);
  add_limit_options(baseline, limits);
  baseline->add_option("--samples", samples, "Gain samples per radius")->check(CLI::PositiveNumber);
  baseline->add_option("--probe-pairs", probe_pairs, "Lipschitz probe pairs")->check(CLI::PositiveNumber);
  baseline->add_option("--probe-radius", probe_radius, "Lipschitz probe box radius")
      ->check(CLI::PositiveNumber);

  // frontier
  std::vector<double> x_lims;
  double tol = 1e-4;
  bool with_baseline = false, with_attack = false;
  int horizon = 2500, threads = 0;
  auto* front = app.add_subcommand("frontier", "Largest certified w_inf per x_lim (CSV)");
  front->fallthrough();
  plant_policy(front);
  search_options(front);
  front->add_option("--x-lims", x_lims, "Limit values to sweep")->required();
  front->add_option("--states", limits.states, "Constrained state indices (default: all)");
  front->add_option("--tol", tol, "Relative bisection tolerance")->check(CLI::PositiveNumber);
  front->add_flag("--baseline", with_baseline, "Add the baseline column");
  front->add_flag("--attack", with_attack, "Add the designed-attack column");
  front->add_option("--horizon", horizon, "Attack horizon T")->check(CLI::PositiveNumber);
  front->add_option("--threads", threads, "Worker threads (default: LOOPCERT_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  front->add_option("--samples", samples, "Baseline gain samples")->check(CLI::PositiveNumber);

  // attack
  int target = 0;
  auto* attack = app.add_subcommand("attack", "Design a worst-case sign sequence (JSON)");
  attack->fallthrough();
  plant_policy(attack);
  attack->add_option("--target", target, "State index to drive")->required();
  attack->add_option("--horizon", horizon, "Horizon T")->check(CLI::PositiveNumber);
  attack->add_option("--w-inf", limits.w_inf, "Amplitude (default: plant w_inf)")
      ->check(CLI::NonNegativeNumber);

  // simulate
  std::string plan_path, stats_path, params_path, mode_name = "uniform";
  int start = 0;
  std::optional<int> steps_opt;
  std::optional<double> random_amp;
  std::vector<double> x0_values;
  bool nonlinear = false;
  auto* sim = app.add_subcommand("simulate", "Closed-loop simulation trace (CSV); exit 2 if limits break");
  sim->fallthrough();
  plant_policy(sim);
  sim->add_option("--plan", plan_path, "Attack plan JSON")->check(CLI::ExistingFile);
  sim->add_option("--start", start, "Step at which the plan is injected")->check(CLI::NonNegativeNumber);
  sim->add_option("--random", random_amp, "Random perturbation amplitude (background when a plan is given)")
      ->check(CLI::NonNegativeNumber);
  sim->add_option("--mode", mode_name, "Random perturbation law: uniform or rademacher");
  sim->add_option("--steps", steps_opt, "Number of steps (default: plan window or 1000)")
      ->check(CLI::PositiveNumber);
  sim->add_option("--x0", x0_values, "Initial state");
  sim->add_flag("--nonlinear", nonlinear, "Step the nonlinear cart-pole instead of the linear model");
  sim->add_option("--params", params_path, "Cart-pole parameter JSON")->check(CLI::ExistingFile);
  sim->add_option("--stats", stats_path, "Also write per-state deviation statistics (JSON)");
  sim->add_option("--w-inf", limits.w_inf, "Plan amplitude override")->check(CLI::NonNegativeNumber);

  // learn
  int episodes = 100, ep_steps = 30, n_boot = 100;
  double u_amp = 0.5;
  std::string learn_plant_path, data_path;
  auto* learn = app.add_subcommand("learn", "Identify a linear model with bootstrap uncertainty (JSON)");
  learn->fallthrough();
  learn->add_option("--episodes", episodes, "Number of episodes")->check(CLI::PositiveNumber);
  learn->add_option("--steps", ep_steps, "Steps per episode")->check(CLI::PositiveNumber);
  learn->add_option("--u-amp", u_amp, "Input excitation amplitude")->check(CLI::PositiveNumber);
  learn->add_option("--n-boot", n_boot, "Bootstrap resamples")->check(CLI::PositiveNumber);
  learn->add_option("--params", params_path, "Cart-pole parameter JSON")->check(CLI::ExistingFile);
  learn->add_option("--plant", learn_plant_path, "Identify this linear plant instead of the cart-pole")
      ->check(CLI::ExistingFile);
  learn->add_option("--data-out", data_path, "Also write the collected episodes (CSV)");
  add_limit_options(learn, limits);

  // train-policy
  std::string gain_path;
  std::vector<double> radius;
  CloneConfig clone;
  auto* train = app.add_subcommand("train-policy", "Clone a linear feedback law into a ReLU network (JSON)");
  train->fallthrough();
  train->add_option("--gain", gain_path, "Feedback gain JSON (bare matrix G: u = G y; or lqr output)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--radius", radius, "Sampling half-widths: one per input or one for all")->required();
  train->add_option("--hidden", clone.hidden_widths, "Hidden layer widths");
  train->add_option("--samples", clone.samples, "Training set size")->check(CLI::PositiveNumber);
  train->add_option("--steps", clone.steps, "Gradient steps")->check(CLI::NonNegativeNumber);
  train->add_option("--batch", clone.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", clone.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
  train->add_option("--momentum", clone.momentum, "Momentum")->check(CLI::Range(0.0, 0.999999));
  train->add_option("--quantize", quantize, "Attach output quantization with this step");

  // lqr
  std::vector<double> q_diag, r_diag;
  auto* lqr = app.add_subcommand("lqr", "Discrete-time LQR gain (JSON)");
  lqr->fallthrough();
  lqr->add_option("--plant", plant_path, "Plant JSON (uses A and B)")->required()->check(CLI::ExistingFile);
  lqr->add_option("--q", q_diag, "State weight diagonal: one per state or one for all (default 1)");
  lqr->add_option("--r", r_diag, "Input weight diagonal: one per input or one for all (default 1)");

  // cartpole
  auto* cp = app.add_subcommand("cartpole", "Write the linearized cart-pole plant (JSON)");
  cp->fallthrough();
  cp->add_option("--params", params_path, "Cart-pole parameter JSON")->check(CLI::ExistingFile);
  add_limit_options(cp, limits);

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("loopcert");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    const double in_scale = g.to_internal();

    if (certify->parsed() || baseline->parsed() || front->parsed() || attack->parsed() ||
        sim->parsed()) {
      PlantFile pf = load_plant(plant_path);
      const Policy policy = load_policy(policy_path, quantize);
      const Matrix K_d = kd_path.empty() ? Matrix() : load_gain(kd_path);
      StateSpacePlant& plant = pf.plant;

      if (certify->parsed()) {
        apply_limits(plant, limits, in_scale);
        CertOptions opt{eps, max_iter, g.eps_trunc};
        const CertResult r = algorithm1(plant, policy, K_d, load_gamma(gamma_path, pf), opt);
        emit(dump_json(with_units(cert_result_to_json(r))));
        return r.success ? kExitOk : kExitNegative;
      }

      if (baseline->parsed()) {
        apply_limits(plant, limits, in_scale);
        BaselineOptions opt;
        opt.samples = samples;
        opt.probe_pairs = probe_pairs;
        opt.probe_radius = probe_radius;
        opt.seed = g.seed;
        opt.eps = eps;
        opt.max_iter = max_iter;
        opt.eps_trunc = g.eps_trunc;
        const BaselineCertification r =
            lemma1_certify(plant, policy, K_d, load_gamma(gamma_path, pf), opt);
        emit(dump_json(with_units(baseline_to_json(r))));
        return r.applicable && r.certified ? kExitOk : kExitNegative;
      }

      if (front->parsed()) {
        FrontierOptions opt;
        opt.tol = tol;
        opt.constrained_states = limits.states;
        opt.with_baseline = with_baseline;
        opt.with_attack = with_attack;
        opt.attack_horizon = horizon;
        opt.threads = threads;
        opt.cert = CertOptions{eps, max_iter, g.eps_trunc};
        opt.baseline.samples = samples;
        opt.baseline.seed = g.seed;
        opt.baseline.eps = eps;
        opt.baseline.max_iter = max_iter;
        opt.baseline.eps_trunc = g.eps_trunc;
        std::vector<double> values;
        for (double v : x_lims) values.push_back(v * in_scale);
        const auto points = frontier(plant, policy, K_d, load_gamma(gamma_path, pf), values, opt);
        emit(frontier_csv(points, g.to_external()));
        return kExitOk;
      }

      if (attack->parsed()) {
        check_index(target, plant.num_states(), "target");
        const ClosedLoopMaps maps = shaping_loop(plant, policy, K_d, g.eps_trunc);
        const double w = limits.w_inf ? *limits.w_inf * in_scale : plant.w_inf;
        emit(dump_json(plan_to_json(design_attack(maps, target, horizon, w))));
        return kExitOk;
      }

      // simulate
      const auto mode = parse_mode(mode_name);
      if (!mode) throw Error("--mode must be uniform or rademacher");
      std::optional<RandomDisturbance> background;
      if (random_amp) background = RandomDisturbance{*random_amp * in_scale, g.seed, *mode};
      Disturbance source = ZeroDisturbance{};
      int steps = steps_opt.value_or(1000);
      if (!plan_path.empty()) {
        PlanDisturbance d{plan_from_json(read_json_file(plan_path)), start, background};
        if (limits.w_inf) d.plan.w_inf = *limits.w_inf * in_scale;
        if (d.plan.signs.cols() != plant.num_disturbances()) {
          throw Error(plan_path + ": plan has " + std::to_string(d.plan.signs.cols()) +
                      " channels, plant has " + std::to_string(plant.num_disturbances()));
        }
        if (!steps_opt) steps = start + static_cast<int>(d.plan.signs.rows());
        source = d;
      } else if (background) {
        source = *background;
      }
      Vector x0 = Vector::Zero(plant.num_states());
      if (!x0_values.empty()) {
        if (static_cast<int>(x0_values.size()) != plant.num_states()) {
          throw Error("--x0 expects " + std::to_string(plant.num_states()) + " values");
        }
        x0 = to_vector(x0_values);
      }
      std::optional<CartPole> dynamics;
      if (nonlinear) {
        if (plant.num_states() != 4 || plant.num_inputs() != 1) {
          throw Error("--nonlinear requires a 4-state, 1-input cart-pole plant");
        }
        dynamics.emplace(load_params(params_path));
      }
      SimTrace trace;
      bool diverged = false;
      try {
        trace = simulate(plant, policy, source, steps, x0, dynamics ? &*dynamics : nullptr);
      } catch (const SimulationDiverged& e) {
        trace = e.partial();
        diverged = true;
        err << "simulation diverged at step " << e.step() << "\n";
      }
      emit(trace_csv(trace));
      if (!stats_path.empty()) {
        const DeviationStats s = state_stats(trace);
        Json j{{"steps", trace.steps()},
               {"mean", vector_to_json(s.mean)},
               {"std", vector_to_json(s.stddev)},
               {"max_abs", vector_to_json(s.max_abs)},
               {"diverged", diverged},
               {"units", "radians"}};
        write_text_file(stats_path, dump_json(j));
      }
      const bool within = !diverged && (trace.max_abs_x.array() <= plant.x_lim.array()).all() &&
                          (trace.max_abs_y.array() <= plant.y_lim.array()).all() &&
                          (trace.max_abs_u.array() <= plant.u_lim.array()).all();
      return within ? kExitOk : kExitNegative;
    }

    if (learn->parsed()) {
      StateSpacePlant io;
      std::vector<Episode> data;
      if (!learn_plant_path.empty()) {
        io = load_plant(learn_plant_path).plant;
        const LinearDynamics truth(io.A, io.B);
        data = collect(truth, episodes, ep_steps, u_amp, g.seed);
      } else {
        const CartPole truth(load_params(params_path));
        io = cartpole_linearized(truth.params());
        data = collect(truth, episodes, ep_steps, u_amp, g.seed);
      }
      apply_limits(io, limits, in_scale);
      const LearnedModel model = bootstrap_uncertainty(data, n_boot, g.seed);
      if (!data_path.empty()) write_text_file(data_path, episodes_csv(data));
      emit(dump_json(learned_model_to_json(model, io)));
      return kExitOk;
    }

    if (train->parsed()) {
      const Matrix K = -load_gain(gain_path);
      const auto r = K.cols();
      if (radius.size() == 1) {
        clone.sample_radius = Vector::Constant(r, radius[0]);
      } else if (static_cast<Eigen::Index>(radius.size()) == r) {
        clone.sample_radius = to_vector(radius);
      } else {
        throw Error("--radius expects 1 or " + std::to_string(r) + " values");
      }
      clone.seed = g.seed;
      const CloneResult res = behavior_clone(K, clone);
      Policy policy{res.network, std::nullopt};
      if (quantize) {
        if (!(*quantize > 0.0)) throw Error("--quantize step must be positive");
        policy.quantization = QuantizationSpec{*quantize};
      }
      Json j = policy_to_json(policy);
      j["metadata"] = Json{{"teacher", "linear feedback u = -K y"},
                           {"K", matrix_to_json(K)},
                           {"hidden_widths", clone.hidden_widths},
                           {"hidden_activation", "relu"},
                           {"output_activation", "linear"},
                           {"sample_radius", vector_to_json(clone.sample_radius)},
                           {"sampling", "uniform on the box"},
                           {"samples", clone.samples},
                           {"steps", clone.steps},
                           {"batch_size", clone.batch_size},
                           {"learning_rate", clone.learning_rate},
                           {"momentum", clone.momentum},
                           {"seed", g.seed},
                           {"training_mse", res.mse}};
      emit(dump_json(j));
      return kExitOk;
    }

    if (lqr->parsed()) {
      const StateSpacePlant plant = load_plant(plant_path).plant;
      auto diag = [](const std::vector<double>& v, Eigen::Index n, const char* name) -> Matrix {
        if (v.empty()) return Matrix::Identity(n, n);
        if (v.size() == 1) return v[0] * Matrix::Identity(n, n);
        if (static_cast<Eigen::Index>(v.size()) != n) {
          throw Error(std::string(name) + " expects 1 or " + std::to_string(n) + " values");
        }
        return to_vector(v).asDiagonal();
      };
      const Matrix Q = diag(q_diag, plant.A.rows(), "--q");
      const Matrix R = diag(r_diag, plant.B.cols(), "--r");
      emit(dump_json(lqr_to_json(dare_solve(plant.A, plant.B, Q, R))));
      return kExitOk;
    }

    if (cp->parsed()) {
      StateSpacePlant plant = cartpole_linearized(load_params(params_path));
      apply_limits(plant, limits, in_scale);
      emit(dump_json(plant_to_json(plant)));
      return kExitOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace loopcert
