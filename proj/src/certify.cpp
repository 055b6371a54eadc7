#include "loopcert/certify.hpp"

#include <cmath>
#include <limits>

#include "loopcert/errors.hpp"

namespace loopcert {

namespace {

using Signal = ClosedLoopMaps::Signal;
using Source = ClosedLoopMaps::Source;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ScalarNorms {
  double yw, yu, yd, aw, au, ad;
};

ScalarNorms l1_norms(const ClosedLoopMaps& maps) {
  return ScalarNorms{inf_norm(maps.abs_block(Signal::kY, Source::kW)),
                     inf_norm(maps.abs_block(Signal::kY, Source::kU)),
                     inf_norm(maps.abs_block(Signal::kY, Source::kDelta)),
                     inf_norm(maps.abs_block(Signal::kAlpha, Source::kW)),
                     inf_norm(maps.abs_block(Signal::kAlpha, Source::kU)),
                     inf_norm(maps.abs_block(Signal::kAlpha, Source::kDelta))};
}

double hinf_of(const ClosedLoopMaps& maps, Signal out, Source in, int grid) {
  const Realization r = maps.realization(out, in);
  if (r.C.rows() == 0 || r.B.cols() == 0) return 0.0;
  return hinf_norm(r.A, r.B, r.C, r.D, grid);
}

bool leq(const Vector& a, const Vector& b) { return (a.array() <= b.array()).all(); }

// Small-gain quantities shared by the L1 and H-infinity versions.
struct Betas {
  double beta1, beta2, implied;
};

Betas small_gain(const ScalarNorms& n, double gamma_pi, double gamma_delta, double w_inf) {
  Betas b{gamma_delta * n.ad, kInf, kInf};
  if (!(b.beta1 < 1.0)) return b;
  const double coupling = gamma_delta / (1.0 - b.beta1);
  b.beta2 = gamma_pi * (n.yu + coupling * n.yd * n.au);
  if (!(b.beta2 < 1.0)) return b;
  b.implied = (n.yw + coupling * n.yd * n.aw) * w_inf / (1.0 - b.beta2);
  return b;
}

void check_gains(double gamma_pi, double gamma_delta) {
  if (!(gamma_pi >= 0.0) || !(gamma_delta >= 0.0)) throw Error("gains must be nonnegative");
}

std::optional<ClosedLoopMaps> try_close(const StateSpacePlant& plant, const Matrix& K,
                                        double eps_trunc) {
  if (!K.allFinite()) return std::nullopt;
  try {
    return close_loop(plant, K, eps_trunc, /*keep_impulse=*/false);
  } catch (const NotSchurStable&) {
    return std::nullopt;
  } catch (const NoConvergence&) {
    return std::nullopt;
  }
}

}  // namespace

std::string to_string(FailureReason r) {
  switch (r) {
    case FailureReason::kConstraintViolated: return "ConstraintViolated";
    case FailureReason::kMaxIterExceeded: return "MaxIterExceeded";
    case FailureReason::kNoStabilizingGain: return "NoStabilizingGain";
  }
  return "unknown";
}

Theorem1Check check_theorem1(const ClosedLoopMaps& maps, const Quadruplet& quad, const Vector& w_bar) {
  if (w_bar.size() != maps.num_w || quad.u_bar.size() != maps.num_u ||
      quad.delta_bar.size() != maps.num_delta || quad.y_bar.size() != maps.num_outputs ||
      quad.alpha_bar.size() != maps.num_alpha) {
    throw DimensionMismatch("quadruplet does not match the closed-loop maps");
  }
  Vector input(maps.num_w + maps.num_u + maps.num_delta);
  input << w_bar, quad.u_bar, quad.delta_bar;
  const Vector out = maps.abs_stacked * input;
  Theorem1Check check;
  check.x_bar = out.head(maps.num_states);
  check.holds = leq(out.segment(maps.num_states, maps.num_outputs), quad.y_bar) &&
                leq(out.tail(maps.num_alpha), quad.alpha_bar);
  return check;
}

BaselineResult check_lemma1(const ClosedLoopMaps& maps, double gamma_pi, double gamma_delta,
                            double w_inf, double y_inf) {
  check_gains(gamma_pi, gamma_delta);
  const Betas b = small_gain(l1_norms(maps), gamma_pi, gamma_delta, w_inf);
  BaselineResult r;
  r.beta1 = b.beta1;
  r.beta2 = b.beta2;
  r.y_inf_implied = b.implied;
  r.certified = b.beta1 < 1.0 && b.beta2 < 1.0 && b.implied <= y_inf;
  return r;
}

bool hinf_corollary(const ClosedLoopMaps& maps, double gamma_pi, double gamma_delta, int grid) {
  check_gains(gamma_pi, gamma_delta);
  const ScalarNorms n{hinf_of(maps, Signal::kY, Source::kW, grid),
                      hinf_of(maps, Signal::kY, Source::kU, grid),
                      hinf_of(maps, Signal::kY, Source::kDelta, grid),
                      hinf_of(maps, Signal::kAlpha, Source::kW, grid),
                      hinf_of(maps, Signal::kAlpha, Source::kU, grid),
                      hinf_of(maps, Signal::kAlpha, Source::kDelta, grid)};
  const Betas b = small_gain(n, gamma_pi, gamma_delta, 0.0);
  return b.beta1 < 1.0 && b.beta2 < 1.0;
}

Quadruplet constructive_quadruplet(const ClosedLoopMaps& maps, double gamma_pi, double gamma_delta,
                                   double w_inf) {
  check_gains(gamma_pi, gamma_delta);
  if (!(w_inf >= 0.0)) throw Error("w_inf must be nonnegative");
  const ScalarNorms n = l1_norms(maps);
  const Betas b = small_gain(n, gamma_pi, gamma_delta, w_inf);
  if (!(b.beta1 < 1.0) || !(b.beta2 < 1.0)) {
    throw Error("small-gain conditions fail (beta1 = " + std::to_string(b.beta1) +
                ", beta2 = " + std::to_string(b.beta2) + ")");
  }
  const double det = (1.0 - b.beta1) * (1.0 - b.beta2);
  double y_ref = ((1.0 - gamma_delta * n.ad) * n.yw + gamma_delta * n.yd * n.aw) * w_inf / det;
  double a_ref = (gamma_pi * n.au * n.yw + (1.0 - gamma_pi * n.yu) * n.aw) * w_inf / det;
  // The closed form meets the inequalities with equality in exact
  // arithmetic; a relative nudge keeps them true after rounding.
  y_ref *= 1.0 + 1e-12;
  a_ref *= 1.0 + 1e-12;

  Quadruplet q;
  q.y_bar = Vector::Constant(maps.num_outputs, y_ref);
  q.u_bar = Vector::Constant(maps.num_u, gamma_pi * y_ref);
  q.alpha_bar = Vector::Constant(maps.num_alpha, a_ref);
  q.delta_bar = Vector::Constant(maps.num_delta, gamma_delta * a_ref);
  q.x_bar = check_theorem1(maps, q, Vector::Constant(maps.num_w, w_inf)).x_bar;
  return q;
}

double gamma_delta_norm(const Matrix& gamma_delta) { return inf_norm(gamma_delta); }

CertResult algorithm1(const StateSpacePlant& plant, const Policy& policy, const Matrix& K_d,
                      const Matrix& gamma_delta, const CertOptions& options) {
  plant.validate();
  const int r = plant.num_outputs(), m = plant.num_inputs();
  const int q = plant.num_uncertainty_inputs(), s = plant.num_uncertainty_outputs();
  if (policy.input_dim() != r || policy.output_dim() != m) {
    throw DimensionMismatch("policy must map measurements to inputs");
  }
  const bool have_kd = K_d.size() > 0;
  if (have_kd && (K_d.rows() != m || K_d.cols() != r)) {
    throw DimensionMismatch("K_d must be (inputs) x (measurements)");
  }
  const Matrix gamma = gamma_delta.size() == 0 ? Matrix::Zero(q, s) : gamma_delta;
  if (gamma.rows() != q || gamma.cols() != s) {
    throw DimensionMismatch("Gamma_Delta must be (uncertainty inputs) x (uncertainty outputs)");
  }
  if (!gamma.allFinite() || (gamma.array() < 0.0).any()) {
    throw Error("Gamma_Delta must be finite and nonnegative");
  }
  if (!(options.eps > 0.0) || options.max_iter < 1) throw Error("invalid iteration options");

  const int n = plant.num_states(), p = plant.num_disturbances();
  const Vector w_bar = Vector::Constant(p, plant.w_inf);
  Vector y_ref = Vector::Zero(r);
  Vector alpha_ref = Vector::Zero(s);

  std::optional<ClosedLoopMaps> maps;
  CertResult result;

  for (int k = 0; k < options.max_iter; ++k) {
    result.iterations = k + 1;
    const Box box = Box::symmetric(y_ref);

    // Gain extraction: midpoint of the relaxation, Jacobian at 0, K_d.
    bool found = false;
    auto attempt = [&](const Matrix& K, GainSource source) {
      if (found) return;
      if (maps && K.rows() == maps->K0.rows() && K.cols() == maps->K0.cols() && K == maps->K0) {
        found = true;
      } else if (auto closed = try_close(plant, K, options.eps_trunc)) {
        maps = std::move(closed);
        found = true;
      }
      if (found) result.gain_source = source;
    };
    if ((y_ref.array() > 0.0).any()) {
      attempt(linear_relaxation(policy.network, box).midpoint_gain(), GainSource::kMidpoint);
    }
    if (!found) {
      try {
        attempt(jacobian_at(policy.network, Vector::Zero(r)), GainSource::kJacobian);
      } catch (const OnKink&) {
      }
    }
    if (!found && have_kd) attempt(K_d, GainSource::kDefault);
    if (!found) {
      result.failure_reason = FailureReason::kNoStabilizingGain;
      return result;
    }
    result.gain = maps->K0;

    const ResidualBounds rb = residual_bounds(policy.network, box, maps->K0, policy.quantization);
    const Vector delta_bar = gamma * alpha_ref;

    Vector input(p + m + q);
    input << w_bar, rb.u0_bar, delta_bar;
    const Vector out = maps->abs_stacked * input;
    result.x_bar = out.head(n);
    result.y_bar = out.segment(n, r);
    result.alpha_bar = out.tail(s);
    result.u_bar = rb.u_bar;
    result.u0_bar = rb.u0_bar;

    // Overflowed bounds can never settle; no finite limit is met either.
    if (!result.x_bar.allFinite() || !result.y_bar.allFinite() || !result.alpha_bar.allFinite() ||
        !result.u_bar.allFinite()) {
      result.failure_reason = FailureReason::kMaxIterExceeded;
      return result;
    }
    if (!leq(result.x_bar, plant.x_lim) || !leq(result.y_bar, plant.y_lim) ||
        !leq(result.u_bar, plant.u_lim)) {
      result.failure_reason = FailureReason::kConstraintViolated;
      return result;
    }
    if (leq(result.y_bar, y_ref) && leq(result.alpha_bar, alpha_ref)) {
      result.success = true;
      result.quadruplet = Quadruplet{y_ref, rb.u0_bar, alpha_ref, delta_bar, result.x_bar};
      return result;
    }
    y_ref = (1.0 + options.eps) * result.y_bar;
    alpha_ref = (1.0 + options.eps) * result.alpha_bar;
  }
  result.failure_reason = FailureReason::kMaxIterExceeded;
  return result;
}

}  // namespace loopcert
