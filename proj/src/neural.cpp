#include "loopcert/neural.hpp"

#include <cmath>
#include <string>

#include "loopcert/errors.hpp"

namespace loopcert {

namespace {

constexpr double kKinkTolerance = 1e-12;

// Linear envelopes of one activation layer given its pre-activation bounds:
//   lower_slope * z <= act(z) <= upper_slope * z + upper_intercept.
struct Envelope {
  Vector upper_slope, upper_intercept, lower_slope;
};

// A negative `fixed_lower` picks the lower slope per neuron (1 when u >= -l,
// else 0); otherwise every unstable neuron uses that slope.
Envelope envelope(Activation act, const Interval& pre, double fixed_lower = -1.0) {
  const auto n = pre.lower.size();
  Envelope e{Vector::Ones(n), Vector::Zero(n), Vector::Ones(n)};
  if (act == Activation::kLinear) return e;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double l = pre.lower(i), u = pre.upper(i);
    if (u <= 0.0) {
      e.upper_slope(i) = 0.0;
      e.lower_slope(i) = 0.0;
    } else if (l >= 0.0) {
      // identity lines already set
    } else {
      const double s = u / (u - l);
      e.upper_slope(i) = s;
      e.upper_intercept(i) = -s * l;
      e.lower_slope(i) = fixed_lower >= 0.0 ? fixed_lower : (u >= -l ? 1.0 : 0.0);
    }
  }
  return e;
}

// Backward pass bounding W_target a_{target-1} + b_target as an affine
// function of the network input. `upper` selects the upper or lower bound.
void backward(const ReluNetwork& net, std::size_t target, const std::vector<Envelope>& env,
              bool upper, Matrix& K, Vector& b) {
  const auto& layers = net.layers();
  Matrix L = layers[target].weights;
  b = layers[target].bias;
  for (std::size_t jj = target; jj-- > 0;) {
    const Envelope& e = env[jj];
    for (Eigen::Index i = 0; i < L.cols(); ++i) {
      for (Eigen::Index r = 0; r < L.rows(); ++r) {
        const double lam = L(r, i);
        if ((lam >= 0.0) == upper) {
          b(r) += lam * e.upper_intercept(i);
          L(r, i) = lam * e.upper_slope(i);
        } else {
          L(r, i) = lam * e.lower_slope(i);
        }
      }
    }
    b += L * layers[jj].bias;
    L = L * layers[jj].weights;
  }
  K = std::move(L);
}

Interval concretize_affine(const Matrix& K_lo, const Vector& b_lo, const Matrix& K_up,
                           const Vector& b_up, const Box& box) {
  Interval out;
  out.upper = b_up + K_up * box.center + K_up.cwiseAbs() * box.radius;
  out.lower = b_lo + K_lo * box.center - K_lo.cwiseAbs() * box.radius;
  return out;
}

void check_box(const ReluNetwork& net, const Box& box) {
  if (box.dim() != net.input_dim()) throw DimensionMismatch("box dimension must match network input");
}

struct Relaxed {
  LinearBounds bounds;
};

// Runs the layer-by-layer relaxation, tightening every hidden interval with
// IBP propagated from the already-tightened previous layer.
Relaxed relax(const ReluNetwork& net, const Box& box) {
  check_box(net, box);
  const auto& layers = net.layers();
  std::vector<Envelope> env;
  env.reserve(layers.size());

  Vector a_lo = box.lower(), a_hi = box.upper();
  Relaxed out;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Layer& layer = layers[k];
    // IBP step from the tightened activation interval of layer k-1.
    const Vector mid = 0.5 * (a_lo + a_hi);
    const Vector rad = 0.5 * (a_hi - a_lo);
    Interval pre{layer.weights * mid + layer.bias - layer.weights.cwiseAbs() * rad,
                 layer.weights * mid + layer.bias + layer.weights.cwiseAbs() * rad};

    Matrix K_up, K_lo;
    Vector b_up, b_lo;
    if (k > 0) {
      backward(net, k, env, true, K_up, b_up);
      backward(net, k, env, false, K_lo, b_lo);
      const Interval crown = concretize_affine(K_lo, b_lo, K_up, b_up, box);
      pre.lower = pre.lower.cwiseMax(crown.lower);
      pre.upper = pre.upper.cwiseMin(crown.upper);
    } else {
      K_up = K_lo = layer.weights;
      b_up = b_lo = layer.bias;
    }

    if (k + 1 == layers.size()) {
      out.bounds = LinearBounds{K_lo, K_up, b_lo, b_up};
      break;
    }
    env.push_back(envelope(layer.activation, pre));
    if (layer.activation == Activation::kRelu) {
      a_lo = pre.lower.cwiseMax(0.0);
      a_hi = pre.upper.cwiseMax(0.0);
    } else {
      a_lo = pre.lower;
      a_hi = pre.upper;
    }
  }
  return out;
}

}  // namespace

ReluNetwork::ReluNetwork(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw Error("network needs at least one layer");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& l = layers_[k];
    if (l.weights.rows() != l.bias.size()) {
      throw DimensionMismatch("layer " + std::to_string(k) + ": bias size must match weight rows");
    }
    if (l.weights.rows() == 0 || l.weights.cols() == 0) {
      throw DimensionMismatch("layer " + std::to_string(k) + " is empty");
    }
    if (k > 0 && l.weights.cols() != layers_[k - 1].weights.rows()) {
      throw DimensionMismatch("layer " + std::to_string(k) + " does not chain with its predecessor");
    }
    if (!l.weights.allFinite() || !l.bias.allFinite()) {
      throw Error("layer " + std::to_string(k) + " has non-finite parameters");
    }
  }
  if (layers_.back().activation != Activation::kLinear) throw Error("last layer must be linear");
}

int ReluNetwork::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weights.cols());
}

int ReluNetwork::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weights.rows());
}

ReluNetwork ReluNetwork::linear(Matrix W, Vector b) {
  return ReluNetwork({Layer{std::move(W), std::move(b), Activation::kLinear}});
}

Box::Box(Vector c, Vector r) : center(std::move(c)), radius(std::move(r)) {
  if (center.size() != radius.size()) throw DimensionMismatch("box center and radius differ in size");
  if (radius.hasNaN() || (radius.array() < 0.0).any()) throw Error("box radius must be nonnegative");
}

Box Box::symmetric(Vector r) {
  Vector c = Vector::Zero(r.size());
  return Box(std::move(c), std::move(r));
}

Vector OutputRange::magnitude() const { return lower.cwiseAbs().cwiseMax(upper.cwiseAbs()); }

double QuantizationSpec::apply(double u) const {
  if (!(step > 0.0)) throw Error("quantization step must be positive");
  return step * std::round(u / step);
}

Vector QuantizationSpec::apply(const Vector& u) const {
  Vector out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out(i) = apply(u(i));
  return out;
}

Vector evaluate(const ReluNetwork& net, const Vector& y) {
  if (y.size() != net.input_dim()) throw DimensionMismatch("input dimension mismatch");
  Vector a = y;
  for (const Layer& l : net.layers()) {
    a = l.weights * a + l.bias;
    if (l.activation == Activation::kRelu) a = a.cwiseMax(0.0);
  }
  return a;
}

IntervalBounds interval_bounds(const ReluNetwork& net, const Box& box) {
  check_box(net, box);
  IntervalBounds out;
  Vector mid = box.center, rad = box.radius;
  for (const Layer& l : net.layers()) {
    const Vector zm = l.weights * mid + l.bias;
    const Vector zr = l.weights.cwiseAbs() * rad;
    Interval pre{zm - zr, zm + zr};
    out.pre_activations.push_back(pre);
    Vector lo = pre.lower, hi = pre.upper;
    if (l.activation == Activation::kRelu) {
      lo = lo.cwiseMax(0.0);
      hi = hi.cwiseMax(0.0);
    }
    mid = 0.5 * (lo + hi);
    rad = 0.5 * (hi - lo);
    out.output = Interval{lo, hi};
  }
  return out;
}

LinearBounds linear_relaxation(const ReluNetwork& net, const Box& box) {
  return relax(net, box).bounds;
}

OutputRange concretize(const LinearBounds& lb, const Box& box) {
  if (lb.K_upper.cols() != box.dim() || lb.K_lower.cols() != box.dim()) {
    throw DimensionMismatch("linear bounds do not match the box");
  }
  const Interval i = concretize_affine(lb.K_lower, lb.b_lower, lb.K_upper, lb.b_upper, box);
  return OutputRange{i.lower, i.upper};
}

OutputRange quantized_concretize(const LinearBounds& lb, const Box& box, const QuantizationSpec& q) {
  if (!(q.step > 0.0)) throw Error("quantization step must be positive");
  OutputRange r = concretize(lb, box);
  r.lower.array() -= 0.5 * q.step;
  r.upper.array() += 0.5 * q.step;
  return r;
}

namespace {

// Backward relaxation with one lower slope for every unstable neuron and
// intermediate bounds from the same relaxation only. It is then the exact
// minimum of a relaxed problem whose feasible set shrinks with the box, so
// the result never loosens when the box shrinks.
Interval fixed_slope_range(const ReluNetwork& net, const Box& box, double lower_slope) {
  const auto& layers = net.layers();
  std::vector<Envelope> env;
  env.reserve(layers.size());
  Interval pre{box.lower(), box.upper()};
  for (std::size_t k = 0; k < layers.size(); ++k) {
    Matrix K_up, K_lo;
    Vector b_up, b_lo;
    backward(net, k, env, true, K_up, b_up);
    backward(net, k, env, false, K_lo, b_lo);
    pre = concretize_affine(K_lo, b_lo, K_up, b_up, box);
    if (k + 1 < layers.size()) env.push_back(envelope(layers[k].activation, pre, lower_slope));
  }
  return pre;
}

}  // namespace

OutputRange output_range(const ReluNetwork& net, const Box& box) {
  check_box(net, box);
  const Interval ibp = interval_bounds(net, box).output;
  OutputRange out{ibp.lower, ibp.upper};
  for (double slope : {0.0, 1.0}) {
    const Interval r = fixed_slope_range(net, box, slope);
    out.lower = out.lower.cwiseMax(r.lower);
    out.upper = out.upper.cwiseMin(r.upper);
  }
  return out;
}

ResidualBounds residual_bounds(const ReluNetwork& net, const Box& box, const Matrix& K0,
                               const std::optional<QuantizationSpec>& quantization) {
  if (K0.rows() != net.output_dim() || K0.cols() != net.input_dim()) {
    throw DimensionMismatch("K0 must be (outputs) x (inputs) of the network");
  }
  const Relaxed r = relax(net, box);
  ResidualBounds out;
  out.relaxation = r.bounds;

  LinearBounds res = r.bounds;
  res.K_lower -= K0;
  res.K_upper -= K0;
  OutputRange full = output_range(net, box);
  if (quantization) {
    out.residual = quantized_concretize(res, box, *quantization);
    full.lower.array() -= 0.5 * quantization->step;
    full.upper.array() += 0.5 * quantization->step;
  } else {
    out.residual = concretize(res, box);
  }
  out.u0_bar = out.residual.magnitude();
  out.u_bar = full.magnitude();
  return out;
}

Matrix jacobian_at(const ReluNetwork& net, const Vector& y0) {
  if (y0.size() != net.input_dim()) throw DimensionMismatch("input dimension mismatch");
  Vector a = y0;
  Matrix J = Matrix::Identity(y0.size(), y0.size());
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    const Layer& l = net.layers()[k];
    a = l.weights * a + l.bias;
    J = l.weights * J;
    if (l.activation != Activation::kRelu) continue;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (std::abs(a(i)) <= kKinkTolerance) {
        throw OnKink("neuron " + std::to_string(i) + " of layer " + std::to_string(k) +
                     " sits on its kink");
      }
      if (a(i) < 0.0) {
        a(i) = 0.0;
        J.row(i).setZero();
      }
    }
  }
  return J;
}

Vector Policy::act(const Vector& y) const {
  Vector u = evaluate(network, y);
  return quantization ? quantization->apply(u) : u;
}

}  // namespace loopcert
