#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loopcert/linsys.hpp"
#include "loopcert/neural.hpp"

namespace loopcert {

/// Candidate invariant-set bounds (y_bar, u_bar, alpha_bar, delta_bar) and
/// the state bound they imply. u_bar bounds the input entering the maps,
/// i.e. the residual u0 when the loop was pre-closed with a gain.
struct Quadruplet {
  Vector y_bar, u_bar, alpha_bar, delta_bar;
  Vector x_bar;
};

struct Theorem1Check {
  bool holds = false;
  Vector x_bar;
};

/// Feedback inequalities
///   abs(Phi_yw) w + abs(Phi_yu) u + abs(Phi_yd) d <= y_bar
///   abs(Phi_aw) w + abs(Phi_au) u + abs(Phi_ad) d <= alpha_bar
/// and x_bar = abs(Phi_xw) w + abs(Phi_xu) u + abs(Phi_xd) d.
Theorem1Check check_theorem1(const ClosedLoopMaps& maps, const Quadruplet& quad, const Vector& w_bar);

struct BaselineResult {
  double beta1 = 0.0;
  double beta2 = 0.0;
  bool certified = false;
  // Left side of the small-gain bound on ||y||; +inf when beta1 or beta2 >= 1.
  double y_inf_implied = 0.0;
};

BaselineResult check_lemma1(const ClosedLoopMaps& maps, double gamma_pi, double gamma_delta,
                            double w_inf, double y_inf);

/// Same small-gain conditions with grid H-infinity estimates in place of L1
/// norms. Advisory only.
bool hinf_corollary(const ClosedLoopMaps& maps, double gamma_pi, double gamma_delta, int grid = 512);

/// Closed-form quadruplet built from scalar norms. Throws Error when
/// beta1 >= 1 or beta2 >= 1.
Quadruplet constructive_quadruplet(const ClosedLoopMaps& maps, double gamma_pi, double gamma_delta,
                                   double w_inf);

enum class FailureReason { kConstraintViolated, kMaxIterExceeded, kNoStabilizingGain };

std::string to_string(FailureReason r);

struct CertOptions {
  double eps = 1e-6;
  int max_iter = 200;
  double eps_trunc = kDefaultEpsTrunc;
};

enum class GainSource { kMidpoint, kJacobian, kDefault };

struct CertResult {
  bool success = false;
  int iterations = 0;
  std::optional<FailureReason> failure_reason;
  // (y_ref, u0_bar, alpha_ref, delta_bar) with x_bar; present on success.
  std::optional<Quadruplet> quadruplet;
  // Values from the last pass.
  Vector x_bar, y_bar, u_bar, u0_bar, alpha_bar;
  Matrix gain;
  std::optional<GainSource> gain_source;
};

/// Iterative search for an invariant box. Each pass bounds the residual
/// policy over |y| <= y_ref, closes the loop on the extracted gain, and
/// propagates (w, u0, delta) bounds through abs of the closed-loop maps.
/// An empty K_d means no fallback gain; an empty gamma_delta means zero.
CertResult algorithm1(const StateSpacePlant& plant, const Policy& policy, const Matrix& K_d,
                      const Matrix& gamma_delta, const CertOptions& options = {});

// max_i sum_j |Gamma_ij|: the induced inf-norm used as the scalar gain of
// |delta| <= Gamma |alpha|.
double gamma_delta_norm(const Matrix& gamma_delta);

/// Sampled estimate of the gain sup ||pi0(y)||_inf / ||y||_inf over
/// ||y||_inf <= radius, with pi0(y) = policy(y) - K0 y, from the box vertices
/// (up to 12 inputs) and `samples` uniform draws. A lower bound, not a
/// certificate.
double sampled_gain(const Policy& policy, const Matrix& K0, double radius, int samples,
                    std::uint64_t seed);

/// Local Lipschitz estimates of pi0 at shrinking scales. Pairs whose outputs
/// differ are bisected toward the requested separation, keeping the half
/// with the larger output change; a jump keeps its full size and the slope
/// estimate grows like 1/scale.
struct LipschitzProbe {
  std::vector<double> scales;
  std::vector<double> estimates;
  bool diverges = false;
};

LipschitzProbe probe_lipschitz(const Policy& policy, const Matrix& K0, double radius, int pairs,
                               std::uint64_t seed);

struct BaselineOptions {
  int samples = 2000;
  int probe_pairs = 200;
  double probe_radius = 1.0;
  std::uint64_t seed = 0;
  double eps = 1e-6;
  int max_iter = 200;
  double eps_trunc = kDefaultEpsTrunc;
};

struct BaselineCertification {
  bool applicable = true;
  bool certified = false;
  std::optional<FailureReason> failure_reason;
  int iterations = 0;
  double gamma_pi = 0.0;
  double gamma_delta = 0.0;
  double y_inf = 0.0;
  BaselineResult lemma;
  Vector x_bar;
  Matrix gain;
  LipschitzProbe probe;
  std::string note;
};

/// Small-gain baseline: picks K0 (zero for stable plants, else the Jacobian
/// at 0 or K_d), searches y_inf by the same inflate-and-retry loop as
/// algorithm1 with gamma_pi sampled on |y| <= y_inf, and checks the state
/// bound of the constructive quadruplet against x_lim. Reports
/// applicable = false when the Lipschitz probe diverges.
BaselineCertification lemma1_certify(const StateSpacePlant& plant, const Policy& policy,
                                     const Matrix& K_d, const Matrix& gamma_delta,
                                     const BaselineOptions& options = {});

struct FrontierOptions {
  double tol = 1e-4;
  // State indices constrained by x_lim; empty means all states.
  std::vector<int> constrained_states;
  bool with_baseline = false;
  bool with_attack = false;
  int attack_horizon = 2500;
  int threads = 0;  // 0: LOOPCERT_THREADS or hardware concurrency
  CertOptions cert;
  BaselineOptions baseline;
};

struct FrontierPoint {
  double x_lim = 0.0;
  double w_certified = 0.0;
  std::optional<double> w_baseline;
  std::optional<double> w_attack;
};

/// Largest certified w_inf per x_lim by doubling then bisection, to relative
/// tolerance tol. The baseline column repeats the search with
/// lemma1_certify; the attack column is the smallest amplitude at which the
/// designed attack drives a constrained state past x_lim.
std::vector<FrontierPoint> frontier(const StateSpacePlant& plant, const Policy& policy,
                                    const Matrix& K_d, const Matrix& gamma_delta,
                                    const std::vector<double>& x_lim_values,
                                    const FrontierOptions& options = {});

// Worker count: LOOPCERT_THREADS if set and positive, else hardware concurrency.
int default_thread_count();

}  // namespace loopcert
