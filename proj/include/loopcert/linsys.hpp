#pragma once

#include <Eigen/Dense>

#include <vector>

namespace loopcert {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultEpsTrunc = 1e-9;

// Largest |x| over every entry of a matrix, 0 for empty matrices.
double max_abs_entry(const Matrix& m);

// Induced infinity norm (max absolute row sum), 0 for empty matrices.
double inf_norm(const Matrix& m);

/// Uncertain discrete-time LTI plant
///
///   x[t+1] = A x + B u + Bw w + Bdelta delta
///   y[t]   = C x + Dw w
///   alpha  = Calpha x + Dalpha_u u + Dalpha_w w
///
/// with elementwise limits on |x|, |y|, |u| (+inf means unconstrained) and
/// the persistent perturbation level |w[t]| <= w_inf.
struct StateSpacePlant {
  Matrix A, B, Bw, Bdelta;
  Matrix C, Dw;
  Matrix Calpha, Dalpha_u, Dalpha_w;
  Vector x_lim, y_lim, u_lim;
  double w_inf = 0.0;

  int num_states() const { return static_cast<int>(A.rows()); }
  int num_inputs() const { return static_cast<int>(B.cols()); }
  int num_disturbances() const { return static_cast<int>(Bw.cols()); }
  int num_uncertainty_inputs() const { return static_cast<int>(Bdelta.cols()); }
  int num_outputs() const { return static_cast<int>(C.rows()); }
  int num_uncertainty_outputs() const { return static_cast<int>(Calpha.rows()); }

  // Throws DimensionMismatch / Error on inconsistent sizes, non-finite
  // matrix entries, negative limits or a negative w_inf.
  void validate() const;

  // Plant with (A, B, Bw, C, Dw) and all uncertainty channels empty,
  // unconstrained limits and w_inf = 0.
  static StateSpacePlant nominal(Matrix A, Matrix B, Matrix Bw, Matrix C, Matrix Dw);
};

/// Finite impulse response Phi[0..T) of Phi(z) = Cc (zI - A)^-1 Bc + Dc with
/// a uniform elementwise bound on the discarded tail sum_{t >= T} |Phi[t]|.
class TruncatedTransferMatrix {
 public:
  TruncatedTransferMatrix() = default;
  TruncatedTransferMatrix(std::vector<Matrix> impulse, double tail_bound, int rows, int cols);

  const std::vector<Matrix>& impulse() const { return impulse_; }
  const Matrix& operator[](std::size_t t) const { return impulse_[t]; }
  std::size_t length() const { return impulse_.size(); }
  double tail_bound() const { return tail_bound_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }

  TruncatedTransferMatrix block(int row, int col, int num_rows, int num_cols) const;

 private:
  std::vector<Matrix> impulse_;
  double tail_bound_ = 0.0;
  int rows_ = 0;
  int cols_ = 0;
};

double spectral_radius(const Matrix& A);

/// Realizes Phi[0] = Dc, Phi[t] = Cc A^{t-1} Bc and truncates once the
/// certified tail bound drops to eps_trunc.
///
/// The tail bound uses the first power m with q = ||A^m||_inf < 1:
///   |Phi[t]_ij| <= ||Cc||_inf * q^k * ||A^{T-1+r} Bc e_j||_inf  for t = T + r + k m
/// which sums to ||Cc||_inf * max_j sum_{r<m} ||A^{T-1+r} Bc e_j||_inf / (1 - q).
TruncatedTransferMatrix impulse_response(const Matrix& A, const Matrix& Bc, const Matrix& Cc,
                                         const Matrix& Dc, double eps_trunc = kDefaultEpsTrunc);

// sum_t |Phi[t]| with the tail bound added to every entry.
Matrix abs_transfer(const TruncatedTransferMatrix& phi);

// Max row sum of abs_transfer: an upper bound on the l-inf induced norm.
double l1_norm(const TruncatedTransferMatrix& phi);

/// Grid estimate of the H-infinity norm (a lower bound on the true value):
/// largest singular value over `grid` equispaced frequencies in [0, pi],
/// refined by golden-section search around the best grid point.
double hinf_norm(const Matrix& A, const Matrix& Bc, const Matrix& Cc, const Matrix& Dc,
                 int grid = 256);

/// State-space realization of one closed-loop map, kept for H-infinity checks.
struct Realization {
  Matrix A, B, C, D;
};

/// The nine closed-loop maps of the plant with u = K0 y + u0, taking
/// (w, u0, delta) to (x, y, alpha).
struct ClosedLoopMaps {
  Matrix K0;
  Matrix A_cl;
  int num_states = 0, num_outputs = 0, num_alpha = 0;
  int num_w = 0, num_u = 0, num_delta = 0;

  // abs of the stacked map [x; y; alpha] <- [w; u0; delta], tail included.
  Matrix abs_stacked;
  double tail_bound = 0.0;
  std::size_t truncation_length = 0;
  Realization stacked_realization;

  // Impulse coefficients; filled only when built with keep_impulse.
  bool has_impulse = false;
  TruncatedTransferMatrix stacked;
  TruncatedTransferMatrix xw, xu, xd;
  TruncatedTransferMatrix yw, yu, yd;
  TruncatedTransferMatrix aw, au, ad;

  enum class Signal { kX, kY, kAlpha };
  enum class Source { kW, kU, kDelta };
  Realization realization(Signal out, Source in) const;
  Matrix abs_block(Signal out, Source in) const;
};

/// Closes the loop with u = K0 y + u0. K0 may be zero for an open-loop
/// stable plant. Throws NotSchurStable when rho(A + B K0 C) >= 1 - 1e-9.
/// Without keep_impulse only the abs sums are kept, which is all the
/// certification loop needs.
ClosedLoopMaps close_loop(const StateSpacePlant& plant, const Matrix& K0,
                          double eps_trunc = kDefaultEpsTrunc, bool keep_impulse = true);

}  // namespace loopcert
