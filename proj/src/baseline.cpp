#include <cmath>
#include <limits>
#include <random>

#include "loopcert/certify.hpp"
#include "loopcert/errors.hpp"

namespace loopcert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kProbeDecades = 8;
constexpr double kDivergenceRatio = 100.0;

Vector residual(const Policy& policy, const Matrix& K0, const Vector& y) {
  return policy.act(y) - K0 * y;
}

bool stabilizes(const StateSpacePlant& plant, const Matrix& K) {
  if (!K.allFinite()) return false;
  return spectral_radius(plant.A + plant.B * K * plant.C) < 1.0 - 1e-9;
}

bool leq(const Vector& a, const Vector& b) { return (a.array() <= b.array()).all(); }

}  // namespace

constexpr int kMaxVertexDim = 12;

double sampled_gain(const Policy& policy, const Matrix& K0, double radius, int samples,
                    std::uint64_t seed) {
  if (!(radius >= 0.0) || samples < 1) throw Error("invalid gain sampling request");
  const int r = policy.input_dim();
  if (radius == 0.0) {
    return residual(policy, K0, Vector::Zero(r)).cwiseAbs().maxCoeff() == 0.0 ? 0.0 : kInf;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double gain = 0.0;
  Vector y(r);
  // Box vertices first: a linear residual attains its gain there.
  if (r <= kMaxVertexDim) {
    for (long mask = 0; mask < (1L << r); ++mask) {
      for (int i = 0; i < r; ++i) y(i) = (mask >> i) & 1 ? radius : -radius;
      gain = std::max(gain, residual(policy, K0, y).cwiseAbs().maxCoeff() / radius);
    }
  }
  for (int k = 0; k < samples; ++k) {
    for (int i = 0; i < r; ++i) y(i) = radius * unit(rng);
    const double norm = y.cwiseAbs().maxCoeff();
    if (norm == 0.0) continue;
    gain = std::max(gain, residual(policy, K0, y).cwiseAbs().maxCoeff() / norm);
  }
  return gain;
}

LipschitzProbe probe_lipschitz(const Policy& policy, const Matrix& K0, double radius, int pairs,
                               std::uint64_t seed) {
  if (!(radius > 0.0) || pairs < 1) throw Error("invalid Lipschitz probe request");
  const int r = policy.input_dim();
  LipschitzProbe probe;
  for (int k = 1; k <= kProbeDecades; ++k) probe.scales.push_back(radius * std::pow(10.0, -k));
  probe.estimates.assign(probe.scales.size(), 0.0);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto dist = [](const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); };
  for (int k = 0; k < pairs; ++k) {
    Vector a(r), b(r);
    for (int i = 0; i < r; ++i) a(i) = radius * unit(rng);
    for (int i = 0; i < r; ++i) b(i) = radius * unit(rng);
    Vector fa = residual(policy, K0, a), fb = residual(policy, K0, b);
    std::size_t level = 0;
    while (level < probe.scales.size()) {
      const double sep = dist(a, b);
      if (sep == 0.0) break;
      if (sep <= probe.scales[level]) {
        probe.estimates[level] = std::max(probe.estimates[level], dist(fa, fb) / sep);
        ++level;
        continue;
      }
      const Vector mid = 0.5 * (a + b);
      const Vector fm = residual(policy, K0, mid);
      if (dist(fa, fm) >= dist(fm, fb)) {
        b = mid;
        fb = fm;
      } else {
        a = mid;
        fa = fm;
      }
    }
  }
  const double coarse = probe.estimates.front(), fine = probe.estimates.back();
  probe.diverges = fine > 0.0 && fine > kDivergenceRatio * coarse;
  return probe;
}

BaselineCertification lemma1_certify(const StateSpacePlant& plant, const Policy& policy,
                                     const Matrix& K_d, const Matrix& gamma_delta,
                                     const BaselineOptions& options) {
  plant.validate();
  const int r = plant.num_outputs(), m = plant.num_inputs();
  const int q = plant.num_uncertainty_inputs(), s = plant.num_uncertainty_outputs();
  if (policy.input_dim() != r || policy.output_dim() != m) {
    throw DimensionMismatch("policy must map measurements to inputs");
  }
  const Matrix gamma = gamma_delta.size() == 0 ? Matrix::Zero(q, s) : gamma_delta;
  if (gamma.rows() != q || gamma.cols() != s) {
    throw DimensionMismatch("Gamma_Delta must be (uncertainty inputs) x (uncertainty outputs)");
  }

  BaselineCertification out;
  out.gamma_delta = gamma_delta_norm(gamma);

  // Pre-stabilizing gain: none for a stable plant, else Jacobian or K_d.
  Matrix K0 = Matrix::Zero(m, r);
  if (spectral_radius(plant.A) >= 1.0 - 1e-9) {
    bool found = false;
    try {
      const Matrix J = jacobian_at(policy.network, Vector::Zero(r));
      if (stabilizes(plant, J)) {
        K0 = J;
        found = true;
      }
    } catch (const OnKink&) {
    }
    if (!found && K_d.size() > 0 && K_d.rows() == m && K_d.cols() == r && stabilizes(plant, K_d)) {
      K0 = K_d;
      found = true;
    }
    if (!found) {
      out.failure_reason = FailureReason::kNoStabilizingGain;
      out.note = "no stabilizing gain for the residual policy";
      return out;
    }
  }
  out.gain = K0;

  out.probe = probe_lipschitz(policy, K0, options.probe_radius, options.probe_pairs, options.seed);
  if (out.probe.diverges) {
    out.applicable = false;
    out.note = "residual policy is not locally Lipschitz: sampled slope grows as the scale shrinks";
    return out;
  }

  const ClosedLoopMaps maps = close_loop(plant, K0, options.eps_trunc, /*keep_impulse=*/false);
  const double w = plant.w_inf;
  double y_inf = 0.0;
  for (int k = 0; k < options.max_iter; ++k) {
    out.iterations = k + 1;
    out.y_inf = y_inf;
    out.gamma_pi = sampled_gain(policy, K0, y_inf, options.samples, options.seed);
    out.lemma = check_lemma1(maps, out.gamma_pi, out.gamma_delta, w, y_inf);
    if (!(out.lemma.beta1 < 1.0) || !(out.lemma.beta2 < 1.0)) {
      out.note = "small-gain condition fails";
      return out;
    }
    const double implied = out.lemma.y_inf_implied;
    const Quadruplet quad = constructive_quadruplet(maps, out.gamma_pi, out.gamma_delta, w);
    out.x_bar = quad.x_bar;
    const Vector y_bar = Vector::Constant(r, implied);
    const Vector u_bar = K0.cwiseAbs() * y_bar + quad.u_bar;
    if (!leq(out.x_bar, plant.x_lim) || !leq(y_bar, plant.y_lim) || !leq(u_bar, plant.u_lim)) {
      out.failure_reason = FailureReason::kConstraintViolated;
      out.note = "implied bounds exceed the limits";
      return out;
    }
    if (out.lemma.certified) {
      out.certified = true;
      out.note = "gain is a sampled lower bound; the result is not a certificate";
      return out;
    }
    y_inf = (1.0 + options.eps) * implied;
  }
  out.failure_reason = FailureReason::kMaxIterExceeded;
  out.note = "y_inf search did not settle";
  return out;
}

}  // namespace loopcert
