#include "loopcert/sysid.hpp"

#include <random>

#include "loopcert/errors.hpp"

namespace loopcert {

namespace {

constexpr double kMaxGramCondition = 1e12;

void check_episode(const Episode& e, Eigen::Index n, Eigen::Index m) {
  if (e.states.size() != e.inputs.size() + 1) {
    throw DimensionMismatch("episode needs one more state than inputs");
  }
  for (const auto& x : e.states) {
    if (x.size() != n) throw DimensionMismatch("inconsistent state dimension");
  }
  for (const auto& u : e.inputs) {
    if (u.size() != m) throw DimensionMismatch("inconsistent input dimension");
  }
}

}  // namespace

std::vector<Episode> collect(const NonlinearPlant& plant, int episodes, int steps,
                             double u_amplitude, std::uint64_t seed) {
  if (episodes < 1 || steps < 1) throw Error("need at least one episode of one step");
  if (!(u_amplitude >= 0.0)) throw Error("input amplitude must be nonnegative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-u_amplitude, u_amplitude);
  std::vector<Episode> data(episodes);
  for (auto& e : data) {
    Vector x = Vector::Zero(plant.state_dim());
    e.states.push_back(x);
    for (int t = 0; t < steps; ++t) {
      Vector u(plant.input_dim());
      for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = dist(rng);
      x = plant.step(x, u);
      e.inputs.push_back(u);
      e.states.push_back(x);
    }
  }
  return data;
}

LinearFit least_squares_fit(const std::vector<Episode>& data) {
  if (data.empty() || data.front().states.empty()) throw RankDeficient("no data");
  const auto n = data.front().states.front().size();
  const auto m = data.front().inputs.empty() ? 0 : data.front().inputs.front().size();
  std::size_t rows = 0;
  for (const auto& e : data) {
    check_episode(e, n, m);
    rows += e.inputs.size();
  }
  if (rows < static_cast<std::size_t>(n + m)) {
    throw RankDeficient("fewer transitions than regressors");
  }
  Matrix Z(rows, n + m), Y(rows, n);
  Eigen::Index k = 0;
  for (const auto& e : data) {
    for (std::size_t t = 0; t < e.inputs.size(); ++t, ++k) {
      Z.row(k) << e.states[t].transpose(), e.inputs[t].transpose();
      Y.row(k) = e.states[t + 1].transpose();
    }
  }
  Eigen::BDCSVD<Matrix> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double smax = sv(0), smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || (smax / smin) * (smax / smin) > kMaxGramCondition) {
    throw RankDeficient("regressor Gram matrix is singular or ill-conditioned");
  }
  const Matrix theta = svd.solve(Y).transpose();  // n x (n + m)
  return LinearFit{theta.leftCols(n), theta.rightCols(m)};
}

double fit_residual(const LinearFit& fit, const std::vector<Episode>& data) {
  double sum = 0.0;
  for (const auto& e : data) {
    for (std::size_t t = 0; t < e.inputs.size(); ++t) {
      sum += (e.states[t + 1] - fit.A * e.states[t] - fit.B * e.inputs[t]).squaredNorm();
    }
  }
  return sum;
}

Matrix LearnedModel::gamma_delta() const {
  Matrix g(delta_A.rows(), delta_A.cols() + delta_B.cols());
  g << delta_A, delta_B;
  return g;
}

LearnedModel bootstrap_uncertainty(const std::vector<Episode>& data, int n_boot, std::uint64_t seed) {
  if (n_boot < 2) throw Error("bootstrap needs at least two resamples");
  const LinearFit nominal = least_squares_fit(data);
  LearnedModel model;
  model.A0 = nominal.A;
  model.B0 = nominal.B;
  model.delta_A = Matrix::Zero(nominal.A.rows(), nominal.A.cols());
  model.delta_B = Matrix::Zero(nominal.B.rows(), nominal.B.cols());

  // Draw every resample up front so the fits can run in any order.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<std::vector<std::size_t>> draws(n_boot, std::vector<std::size_t>(data.size()));
  for (auto& d : draws) {
    for (auto& i : d) i = pick(rng);
  }
  for (const auto& d : draws) {
    std::vector<Episode> sample;
    sample.reserve(d.size());
    for (std::size_t i : d) sample.push_back(data[i]);
    LinearFit fit = least_squares_fit(sample);
    model.delta_A = model.delta_A.cwiseMax((fit.A - model.A0).cwiseAbs());
    model.delta_B = model.delta_B.cwiseMax((fit.B - model.B0).cwiseAbs());
    model.bootstrap_fits.push_back(std::move(fit));
  }
  return model;
}

StateSpacePlant learned_plant(const LearnedModel& model, const StateSpacePlant& io) {
  const auto n = model.A0.rows(), m = model.B0.cols();
  if (io.num_states() != n || io.num_inputs() != m) {
    throw DimensionMismatch("measurement template does not match the learned model");
  }
  StateSpacePlant p = io;
  p.A = model.A0;
  p.B = model.B0;
  p.Bdelta = Matrix::Identity(n, n);
  p.Calpha = Matrix::Zero(n + m, n);
  p.Calpha.topRows(n) = Matrix::Identity(n, n);
  p.Dalpha_u = Matrix::Zero(n + m, m);
  p.Dalpha_u.bottomRows(m) = Matrix::Identity(m, m);
  p.Dalpha_w = Matrix::Zero(n + m, io.num_disturbances());
  p.validate();
  return p;
}

}  // namespace loopcert
