#include "loopcert/policysynth.hpp"

#include <cmath>
#include <random>

#include "loopcert/errors.hpp"

namespace loopcert {

namespace {

Matrix riccati_map(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                   const Matrix& P) {
  const Matrix BtPA = B.transpose() * P * A;
  const Matrix S = R + B.transpose() * P * B;
  return Q + A.transpose() * P * A - BtPA.transpose() * S.ldlt().solve(BtPA);
}

void check_lqr(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R) {
  const auto n = A.rows(), m = B.cols();
  if (A.cols() != n || B.rows() != n) throw DimensionMismatch("bad (A, B) shapes");
  if (Q.rows() != n || Q.cols() != n || R.rows() != m || R.cols() != m) {
    throw DimensionMismatch("bad (Q, R) shapes");
  }
  if (max_abs_entry(Q - Q.transpose()) > 1e-12 || max_abs_entry(R - R.transpose()) > 1e-12) {
    throw Error("Q and R must be symmetric");
  }
  if (m > 0 && R.llt().info() != Eigen::Success) throw Error("R must be positive definite");
}

struct Net {
  std::vector<Matrix> W;
  std::vector<Vector> b;
};

}  // namespace

double riccati_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                        const Matrix& P) {
  return max_abs_entry(P - riccati_map(A, B, Q, R, P));
}

LqrSolution dare_solve(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                       double tol, int max_iter) {
  check_lqr(A, B, Q, R);
  if (!(tol > 0.0) || max_iter < 1) throw Error("invalid Riccati tolerance or iteration cap");
  LqrSolution sol;
  Matrix P = Q;
  for (int it = 1; it <= max_iter; ++it) {
    Matrix next = riccati_map(A, B, Q, R, P);
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) throw NoConvergence("Riccati iteration diverged");
    const double change = max_abs_entry(next - P);
    P = std::move(next);
    if (change < tol * std::max(1.0, max_abs_entry(P))) {
      sol.P = P;
      sol.K = (R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
      sol.iterations = it;
      return sol;
    }
  }
  throw NoConvergence("Riccati iteration did not converge in " + std::to_string(max_iter) +
                      " sweeps");
}

CloneResult behavior_clone(const Matrix& K, const CloneConfig& config) {
  const auto r = K.cols(), m = K.rows();
  if (r == 0 || m == 0) throw DimensionMismatch("gain must be non-empty");
  if (config.sample_radius.size() != r) throw DimensionMismatch("sample radius must match inputs");
  if ((config.sample_radius.array() <= 0.0).any()) throw Error("sample radius must be positive");
  if (config.samples < 1 || config.steps < 1 || config.batch_size < 1) {
    throw Error("sample, step and batch counts must be positive");
  }
  for (int w : config.hidden_widths) {
    if (w < 1) throw Error("hidden widths must be positive");
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  // Standardized training set: inputs on [-1, 1]^r, targets divided by scale.
  Matrix X(r, config.samples);
  for (int k = 0; k < config.samples; ++k) {
    for (Eigen::Index i = 0; i < r; ++i) X(i, k) = unit(rng);
  }
  const Matrix G = -K * config.sample_radius.asDiagonal();  // target map on scaled inputs
  const Matrix T_raw = G * X;
  Vector out_scale(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double rms = std::sqrt(T_raw.row(i).squaredNorm() / config.samples);
    out_scale(i) = rms > 0.0 ? rms : 1.0;
  }
  const Matrix T = out_scale.cwiseInverse().asDiagonal() * T_raw;

  std::vector<int> widths{static_cast<int>(r)};
  widths.insert(widths.end(), config.hidden_widths.begin(), config.hidden_widths.end());
  widths.push_back(static_cast<int>(m));
  const std::size_t L = widths.size() - 1;

  Net net, vel;
  for (std::size_t k = 0; k < L; ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[k]));
    Matrix W(widths[k + 1], widths[k]);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = bound * unit(rng);
    net.W.push_back(W);
    net.b.push_back(Vector::Zero(widths[k + 1]));
    vel.W.push_back(Matrix::Zero(W.rows(), W.cols()));
    vel.b.push_back(Vector::Zero(widths[k + 1]));
  }

  const int batch = std::min(config.batch_size, config.samples);
  std::uniform_int_distribution<int> pick(0, config.samples - 1);
  std::vector<Matrix> act(L + 1), pre(L);
  Matrix Xb(r, batch), Tb(m, batch);
  for (int step = 0; step < config.steps; ++step) {
    for (int j = 0; j < batch; ++j) {
      const int idx = pick(rng);
      Xb.col(j) = X.col(idx);
      Tb.col(j) = T.col(idx);
    }
    act[0] = Xb;
    for (std::size_t k = 0; k < L; ++k) {
      pre[k] = (net.W[k] * act[k]).colwise() + net.b[k];
      act[k + 1] = k + 1 < L ? Matrix(pre[k].cwiseMax(0.0)) : pre[k];
    }
    Matrix delta = (2.0 / (batch * m)) * (act[L] - Tb);
    for (std::size_t k = L; k-- > 0;) {
      if (k + 1 < L) delta = delta.cwiseProduct((pre[k].array() > 0.0).cast<double>().matrix());
      const Matrix gW = delta * act[k].transpose();
      const Vector gb = delta.rowwise().sum();
      if (k > 0) delta = net.W[k].transpose() * delta;
      vel.W[k] = config.momentum * vel.W[k] - config.learning_rate * gW;
      vel.b[k] = config.momentum * vel.b[k] - config.learning_rate * gb;
      net.W[k] += vel.W[k];
      net.b[k] += vel.b[k];
    }
  }

  // Fold the input and output scaling into the outer layers.
  std::vector<Layer> layers;
  for (std::size_t k = 0; k < L; ++k) {
    layers.push_back(Layer{net.W[k], net.b[k], k + 1 < L ? Activation::kRelu : Activation::kLinear});
  }
  layers.front().weights = layers.front().weights * config.sample_radius.cwiseInverse().asDiagonal();
  layers.back().weights = out_scale.asDiagonal() * layers.back().weights;
  layers.back().bias = out_scale.asDiagonal() * layers.back().bias;
  ReluNetwork folded(layers);
  layers.back().bias -= evaluate(folded, Vector::Zero(r));

  CloneResult result{ReluNetwork(std::move(layers)), 0.0};
  double sq = 0.0;
  for (int k = 0; k < config.samples; ++k) {
    const Vector y = config.sample_radius.cwiseProduct(X.col(k));
    sq += (evaluate(result.network, y) + K * y).squaredNorm();
  }
  result.mse = sq / (static_cast<double>(config.samples) * m);
  return result;
}

}  // namespace loopcert
