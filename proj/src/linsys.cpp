#include "loopcert/linsys.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>

#include "loopcert/errors.hpp"

namespace loopcert {

namespace {

constexpr double kSchurMargin = 1e-9;
constexpr int kMaxPowerSearch = 200000;
constexpr std::size_t kMaxTruncation = 400000;

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionMismatch(what);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

double max_abs_entry(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

double inf_norm(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

void StateSpacePlant::validate() const {
  const auto n = A.rows();
  require(A.cols() == n, "A must be square");
  require(B.rows() == n, "B must have as many rows as A");
  require(Bw.rows() == n, "Bw must have as many rows as A");
  require(Bdelta.rows() == n, "Bdelta must have as many rows as A");
  require(C.cols() == n, "C must have as many columns as A");
  require(Dw.rows() == C.rows() && Dw.cols() == Bw.cols(), "Dw must be (rows of C) x (cols of Bw)");
  require(Calpha.cols() == n, "Calpha must have as many columns as A");
  require(Dalpha_u.rows() == Calpha.rows() && Dalpha_u.cols() == B.cols(),
          "Dalpha_u must be (rows of Calpha) x (cols of B)");
  require(Dalpha_w.rows() == Calpha.rows() && Dalpha_w.cols() == Bw.cols(),
          "Dalpha_w must be (rows of Calpha) x (cols of Bw)");
  require(x_lim.size() == n, "x_lim must have one entry per state");
  require(y_lim.size() == C.rows(), "y_lim must have one entry per measurement");
  require(u_lim.size() == B.cols(), "u_lim must have one entry per input");
  for (const Matrix* m : {&A, &B, &Bw, &Bdelta, &C, &Dw, &Calpha, &Dalpha_u, &Dalpha_w}) {
    if (!all_finite(*m)) throw Error("plant matrices must be finite");
  }
  for (const Vector* v : {&x_lim, &y_lim, &u_lim}) {
    if ((v->array() < 0.0).any() || v->hasNaN()) throw Error("limits must be nonnegative");
  }
  if (!(w_inf >= 0.0) || !std::isfinite(w_inf)) throw Error("w_inf must be finite and nonnegative");
}

StateSpacePlant StateSpacePlant::nominal(Matrix A, Matrix B, Matrix Bw, Matrix C, Matrix Dw) {
  StateSpacePlant p;
  const auto n = A.rows();
  const auto m = B.cols();
  const auto r = C.rows();
  p.A = std::move(A);
  p.B = std::move(B);
  p.Bw = std::move(Bw);
  p.C = std::move(C);
  p.Dw = std::move(Dw);
  p.Bdelta = Matrix::Zero(n, 0);
  p.Calpha = Matrix::Zero(0, n);
  p.Dalpha_u = Matrix::Zero(0, m);
  p.Dalpha_w = Matrix::Zero(0, p.Bw.cols());
  const double inf = std::numeric_limits<double>::infinity();
  p.x_lim = Vector::Constant(n, inf);
  p.y_lim = Vector::Constant(r, inf);
  p.u_lim = Vector::Constant(m, inf);
  p.validate();
  return p;
}

TruncatedTransferMatrix::TruncatedTransferMatrix(std::vector<Matrix> impulse, double tail_bound,
                                                 int rows, int cols)
    : impulse_(std::move(impulse)), tail_bound_(tail_bound), rows_(rows), cols_(cols) {
  if (!(tail_bound_ >= 0.0)) throw Error("tail bound must be nonnegative");
  for (const auto& m : impulse_) {
    require(m.rows() == rows_ && m.cols() == cols_, "impulse coefficients must share one shape");
  }
}

TruncatedTransferMatrix TruncatedTransferMatrix::block(int row, int col, int num_rows,
                                                       int num_cols) const {
  require(row >= 0 && col >= 0 && row + num_rows <= rows_ && col + num_cols <= cols_,
          "block out of range");
  std::vector<Matrix> sub;
  sub.reserve(impulse_.size());
  for (const auto& m : impulse_) sub.emplace_back(m.block(row, col, num_rows, num_cols));
  return TruncatedTransferMatrix(std::move(sub), tail_bound_, num_rows, num_cols);
}

double spectral_radius(const Matrix& A) {
  if (A.rows() != A.cols()) throw DimensionMismatch("spectral_radius needs a square matrix");
  if (A.rows() == 0) return 0.0;
  if (!A.allFinite()) throw Error("spectral_radius needs finite entries");
  Eigen::EigenSolver<Matrix> solver(A, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) throw NoConvergence("eigenvalue iteration did not converge");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

// Shared core of impulse_response: walks the state response A^k Bc once,
// accumulating sum |Phi[t]| and optionally keeping every coefficient.
struct ImpulseWalk {
  std::vector<Matrix> impulse;
  Matrix abs_sum;
  double tail = 0.0;
  std::size_t length = 0;
};

ImpulseWalk walk_impulse(const Matrix& A, const Matrix& Bc, const Matrix& Cc, const Matrix& Dc,
                         double eps_trunc, bool keep) {
  const auto n = A.rows();
  require(A.cols() == n, "A must be square");
  require(Bc.rows() == n, "Bc rows must match A");
  require(Cc.cols() == n, "Cc cols must match A");
  require(Dc.rows() == Cc.rows() && Dc.cols() == Bc.cols(), "Dc must be (rows of Cc) x (cols of Bc)");
  if (!(eps_trunc > 0.0)) throw Error("eps_trunc must be positive");

  const double rho = spectral_radius(A);
  if (rho >= 1.0 - kSchurMargin) throw NotSchurStable(rho);

  const auto cols = Bc.cols();
  ImpulseWalk out;
  out.abs_sum = Dc.cwiseAbs();
  out.length = 1;
  if (keep) out.impulse.push_back(Dc);

  const double c_norm = inf_norm(Cc);
  if (n == 0 || c_norm == 0.0 || max_abs_entry(Bc) == 0.0) return out;

  // Smallest m with ||A^m||_inf < 1.
  int m = 1;
  Matrix power = A;
  double q = inf_norm(power);
  while (q >= 1.0) {
    if (++m > kMaxPowerSearch) throw NoConvergence("no contracting power of A found");
    power = power * A;
    q = inf_norm(power);
  }
  const double scale = c_norm / (1.0 - q);

  // Column block k of `states` holds A^k Bc, the response feeding Phi[k + 1];
  // column k of `norms` holds its per-column inf-norms.
  Matrix states(n, cols * 64);
  Matrix norms(cols, 64);
  std::size_t count = 0;
  auto push_state = [&](const Matrix& s) {
    if (count * cols >= static_cast<std::size_t>(states.cols())) {
      states.conservativeResize(Eigen::NoChange, states.cols() * 2);
      norms.conservativeResize(Eigen::NoChange, norms.cols() * 2);
    }
    states.middleCols(count * cols, cols) = s;
    norms.col(count) = s.cwiseAbs().colwise().maxCoeff().transpose();
    ++count;
  };
  auto state = [&](std::size_t k) { return states.middleCols(k * cols, cols); };
  push_state(Bc);
  auto extend_to = [&](std::size_t k) {
    while (count <= k) {
      const Matrix next = A * state(count - 1);
      push_state(next);
    }
  };

  // Window over X_T .. X_{T+m-1}, i.e. state blocks T-1 .. T+m-2.
  extend_to(static_cast<std::size_t>(m - 1));
  Vector window = norms.leftCols(m).rowwise().sum();

  std::size_t T = 1;
  for (;;) {
    const double approx = scale * window.maxCoeff();
    if (approx <= eps_trunc * (1.0 - 1e-6) || approx == 0.0) {
      // The running window drifts with round-off, so recompute it exactly
      // before committing to this truncation point.
      const Vector exact = norms.middleCols(T - 1, m).rowwise().sum();
      const double tail = scale * exact.maxCoeff();
      if (tail <= eps_trunc) {
        for (std::size_t t = 1; t < T; ++t) {
          const Matrix phi = Cc * state(t - 1);
          out.abs_sum += phi.cwiseAbs();
          if (keep) out.impulse.push_back(phi);
        }
        out.tail = tail;
        out.length = T;
        return out;
      }
    }
    if (T >= kMaxTruncation) {
      throw NoConvergence("impulse response did not reach eps_trunc within " +
                          std::to_string(kMaxTruncation) + " terms");
    }
    extend_to(T - 1 + static_cast<std::size_t>(m));
    ++T;
    // Round-off in the running sum is relative to its peak; refresh it
    // exactly every m steps so it tracks the decaying terms.
    if (T % static_cast<std::size_t>(m) == 0) {
      window = norms.middleCols(T - 1, m).rowwise().sum();
    } else {
      window += norms.col(T - 2 + m) - norms.col(T - 2);
      window = window.cwiseMax(0.0);
    }
  }
}

}  // namespace

TruncatedTransferMatrix impulse_response(const Matrix& A, const Matrix& Bc, const Matrix& Cc,
                                         const Matrix& Dc, double eps_trunc) {
  ImpulseWalk w = walk_impulse(A, Bc, Cc, Dc, eps_trunc, /*keep=*/true);
  return TruncatedTransferMatrix(std::move(w.impulse), w.tail, static_cast<int>(Cc.rows()),
                                 static_cast<int>(Bc.cols()));
}

Matrix abs_transfer(const TruncatedTransferMatrix& phi) {
  Matrix sum = Matrix::Zero(phi.rows(), phi.cols());
  for (const auto& m : phi.impulse()) sum += m.cwiseAbs();
  sum.array() += phi.tail_bound();
  return sum;
}

double l1_norm(const TruncatedTransferMatrix& phi) { return inf_norm(abs_transfer(phi)); }

namespace {

double sigma_max_at(const Matrix& A, const Matrix& Bc, const Matrix& Cc, const Matrix& Dc,
                    double omega) {
  using Complex = std::complex<double>;
  using CMatrix = Eigen::MatrixXcd;
  CMatrix G = Dc.cast<Complex>();
  if (A.rows() > 0) {
    const Complex z = std::polar(1.0, omega);
    CMatrix resolvent = z * CMatrix::Identity(A.rows(), A.cols()) - A.cast<Complex>();
    CMatrix X = resolvent.partialPivLu().solve(Bc.cast<Complex>());
    G += Cc.cast<Complex>() * X;
  }
  if (G.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(G);
  return svd.singularValues()(0);
}

}  // namespace

double hinf_norm(const Matrix& A, const Matrix& Bc, const Matrix& Cc, const Matrix& Dc, int grid) {
  if (grid < 64) throw Error("hinf_norm needs a grid of at least 64 points");
  require(A.rows() == A.cols() && Bc.rows() == A.rows() && Cc.cols() == A.rows() &&
              Dc.rows() == Cc.rows() && Dc.cols() == Bc.cols(),
          "inconsistent realization");
  const double rho = spectral_radius(A);
  if (rho >= 1.0 - kSchurMargin) throw NotSchurStable(rho);

  const double pi = std::acos(-1.0);
  const double step = pi / (grid - 1);
  int best_k = 0;
  double best = -1.0;
  for (int k = 0; k < grid; ++k) {
    const double s = sigma_max_at(A, Bc, Cc, Dc, k * step);
    if (s > best) {
      best = s;
      best_k = k;
    }
  }

  // Golden-section refinement on the two neighbouring grid cells.
  double lo = std::max(0.0, (best_k - 1) * step);
  double hi = std::min(pi, (best_k + 1) * step);
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - ratio * (hi - lo);
  double b = lo + ratio * (hi - lo);
  double fa = sigma_max_at(A, Bc, Cc, Dc, a);
  double fb = sigma_max_at(A, Bc, Cc, Dc, b);
  for (int it = 0; it < 80 && hi - lo > 1e-13; ++it) {
    if (fa > fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - ratio * (hi - lo);
      fa = sigma_max_at(A, Bc, Cc, Dc, a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + ratio * (hi - lo);
      fb = sigma_max_at(A, Bc, Cc, Dc, b);
    }
  }
  return std::max({best, fa, fb});
}

namespace {

int signal_offset(const ClosedLoopMaps& maps, ClosedLoopMaps::Signal s) {
  switch (s) {
    case ClosedLoopMaps::Signal::kX: return 0;
    case ClosedLoopMaps::Signal::kY: return maps.num_states;
    case ClosedLoopMaps::Signal::kAlpha: return maps.num_states + maps.num_outputs;
  }
  return 0;
}

int signal_size(const ClosedLoopMaps& maps, ClosedLoopMaps::Signal s) {
  switch (s) {
    case ClosedLoopMaps::Signal::kX: return maps.num_states;
    case ClosedLoopMaps::Signal::kY: return maps.num_outputs;
    case ClosedLoopMaps::Signal::kAlpha: return maps.num_alpha;
  }
  return 0;
}

int source_offset(const ClosedLoopMaps& maps, ClosedLoopMaps::Source s) {
  switch (s) {
    case ClosedLoopMaps::Source::kW: return 0;
    case ClosedLoopMaps::Source::kU: return maps.num_w;
    case ClosedLoopMaps::Source::kDelta: return maps.num_w + maps.num_u;
  }
  return 0;
}

int source_size(const ClosedLoopMaps& maps, ClosedLoopMaps::Source s) {
  switch (s) {
    case ClosedLoopMaps::Source::kW: return maps.num_w;
    case ClosedLoopMaps::Source::kU: return maps.num_u;
    case ClosedLoopMaps::Source::kDelta: return maps.num_delta;
  }
  return 0;
}

}  // namespace

Realization ClosedLoopMaps::realization(Signal out, Source in) const {
  const int r0 = signal_offset(*this, out), nr = signal_size(*this, out);
  const int c0 = source_offset(*this, in), nc = source_size(*this, in);
  const auto& s = stacked_realization;
  return Realization{s.A, s.B.middleCols(c0, nc), s.C.middleRows(r0, nr),
                     s.D.block(r0, c0, nr, nc)};
}

Matrix ClosedLoopMaps::abs_block(Signal out, Source in) const {
  return abs_stacked.block(signal_offset(*this, out), source_offset(*this, in),
                           signal_size(*this, out), source_size(*this, in));
}

ClosedLoopMaps close_loop(const StateSpacePlant& plant, const Matrix& K0, double eps_trunc,
                          bool keep_impulse) {
  plant.validate();
  const int n = plant.num_states();
  const int m = plant.num_inputs();
  const int p = plant.num_disturbances();
  const int q = plant.num_uncertainty_inputs();
  const int r = plant.num_outputs();
  const int s = plant.num_uncertainty_outputs();
  require(K0.rows() == m && K0.cols() == r, "K0 must be (inputs) x (measurements)");

  ClosedLoopMaps maps;
  maps.K0 = K0;
  maps.A_cl = plant.A + plant.B * K0 * plant.C;
  maps.num_states = n;
  maps.num_outputs = r;
  maps.num_alpha = s;
  maps.num_w = p;
  maps.num_u = m;
  maps.num_delta = q;

  const Matrix Bw_cl = plant.B * K0 * plant.Dw + plant.Bw;
  const Matrix Calpha_cl = plant.Calpha + plant.Dalpha_u * K0 * plant.C;
  const Matrix Dalpha_w_cl = plant.Dalpha_u * K0 * plant.Dw + plant.Dalpha_w;

  Matrix B_all(n, p + m + q);
  B_all << Bw_cl, plant.B, plant.Bdelta;
  Matrix C_all(n + r + s, n);
  C_all << Matrix::Identity(n, n), plant.C, Calpha_cl;
  Matrix D_all = Matrix::Zero(n + r + s, p + m + q);
  D_all.block(n, 0, r, p) = plant.Dw;
  D_all.block(n + r, 0, s, p) = Dalpha_w_cl;
  D_all.block(n + r, p, s, m) = plant.Dalpha_u;

  ImpulseWalk walk = walk_impulse(maps.A_cl, B_all, C_all, D_all, eps_trunc, keep_impulse);
  maps.tail_bound = walk.tail;
  maps.truncation_length = walk.length;
  maps.abs_stacked = walk.abs_sum;
  maps.abs_stacked.array() += walk.tail;
  maps.stacked_realization = Realization{maps.A_cl, B_all, C_all, D_all};
  maps.has_impulse = keep_impulse;
  if (!keep_impulse) return maps;

  maps.stacked = TruncatedTransferMatrix(std::move(walk.impulse), walk.tail, n + r + s, p + m + q);
  const auto& st = maps.stacked;
  maps.xw = st.block(0, 0, n, p);
  maps.xu = st.block(0, p, n, m);
  maps.xd = st.block(0, p + m, n, q);
  maps.yw = st.block(n, 0, r, p);
  maps.yu = st.block(n, p, r, m);
  maps.yd = st.block(n, p + m, r, q);
  maps.aw = st.block(n + r, 0, s, p);
  maps.au = st.block(n + r, p, s, m);
  maps.ad = st.block(n + r, p + m, s, q);
  return maps;
}

}  // namespace loopcert
