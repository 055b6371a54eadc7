#include "loopcert/io.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "loopcert/errors.hpp"

namespace loopcert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void dump_into(const Json& j, int indent, std::string& out) {
  const std::string pad(indent + 2, ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + Json(it.key()).dump() + ": ";
        dump_into(it.value(), indent + 2, out);
      }
      out += "\n" + std::string(indent, ' ') + "}";
      return;
    }
    case Json::value_t::array: {
      // Arrays of scalars stay on one line.
      bool flat = true;
      for (const auto& v : j) flat = flat && !v.is_structured();
      if (flat) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          dump_into(j[i], indent, out);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        dump_into(j[i], indent + 2, out);
      }
      out += "\n" + std::string(indent, ' ') + "]";
      return;
    }
    case Json::value_t::number_float:
      out += std::isfinite(j.get<double>()) ? format_double(j.get<double>()) : "null";
      return;
    default:
      out += j.dump();
  }
}

std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

double number(const Json& v, const std::string& what) {
  if (v.is_null()) return kInf;
  if (!v.is_number()) throw ParseError(what + ": expected a number");
  return v.get<double>();
}

const char* activation_name(Activation a) { return a == Activation::kRelu ? "relu" : "linear"; }

}  // namespace

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

std::string dump_json(const Json& j) {
  std::string out;
  dump_into(j, 0, out);
  out += "\n";
  return out;
}

Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    std::string msg = e.what();
    if (const auto pos = msg.find("parse error"); pos != std::string::npos) msg = msg.substr(pos);
    throw ParseError(fmt::format("{}:{}:{}: {}", origin, line, col, msg));
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json_file(const std::string& path) { return parse_json(read_text_file(path), path); }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("failed writing " + path);
}

Json matrix_to_json(const Matrix& m) {
  Json data = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
    throw ParseError(what + ": expected {\"rows\", \"cols\", \"data\"}");
  }
  if (!j["rows"].is_number_integer() || !j["cols"].is_number_integer() || !j["data"].is_array()) {
    throw ParseError(what + ": rows/cols must be integers and data an array");
  }
  const auto rows = j["rows"].get<long>(), cols = j["cols"].get<long>();
  if (rows < 0 || cols < 0) throw ParseError(what + ": negative dimension");
  const auto& data = j["data"];
  if (static_cast<long>(data.size()) != rows * cols) {
    throw ParseError(fmt::format("{}: expected {} entries, found {}", what, rows * cols, data.size()));
  }
  Matrix m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    for (long c = 0; c < cols; ++c) {
      const auto& v = data[i * cols + c];
      if (!v.is_number()) throw ParseError(what + ": entries must be numbers");
      m(i, c) = v.get<double>();
    }
  }
  if (!m.allFinite()) throw ParseError(what + ": entries must be finite");
  return m;
}

Json vector_to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v(i)) ? Json(v(i)) : Json(nullptr));
  return a;
}

Vector vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + ": expected an array");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = number(j[i], what);
  return v;
}

Json plant_to_json(const StateSpacePlant& p, const std::optional<Matrix>& gamma_delta) {
  Json j;
  j["A"] = matrix_to_json(p.A);
  j["B"] = matrix_to_json(p.B);
  j["Bw"] = matrix_to_json(p.Bw);
  j["Bdelta"] = matrix_to_json(p.Bdelta);
  j["C"] = matrix_to_json(p.C);
  j["Dw"] = matrix_to_json(p.Dw);
  j["Calpha"] = matrix_to_json(p.Calpha);
  j["Dalpha_u"] = matrix_to_json(p.Dalpha_u);
  j["Dalpha_w"] = matrix_to_json(p.Dalpha_w);
  j["x_lim"] = vector_to_json(p.x_lim);
  j["y_lim"] = vector_to_json(p.y_lim);
  j["u_lim"] = vector_to_json(p.u_lim);
  j["w_inf"] = p.w_inf;
  if (gamma_delta) j["Gamma_Delta"] = matrix_to_json(*gamma_delta);
  return j;
}

PlantFile plant_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("plant: expected an object");
  for (const char* key : {"A", "B", "C"}) {
    if (!j.contains(key)) throw ParseError(std::string("plant: missing \"") + key + "\"");
  }
  auto get = [&](const char* key) -> std::optional<Matrix> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return matrix_from_json(j[key], std::string("plant.") + key);
  };
  StateSpacePlant p;
  p.A = *get("A");
  p.B = *get("B");
  p.C = *get("C");
  const auto n = p.A.rows(), m = p.B.cols(), r = p.C.rows();
  const auto Bw = get("Bw"), Dw = get("Dw");
  const auto Bd = get("Bdelta"), Ca = get("Calpha"), Dau = get("Dalpha_u"), Daw = get("Dalpha_w");
  const auto p_dim = Bw ? Bw->cols() : (Dw ? Dw->cols() : (Daw ? Daw->cols() : 0));
  const auto q_dim = Bd ? Bd->cols() : 0;
  const auto s_dim = Ca ? Ca->rows() : (Dau ? Dau->rows() : (Daw ? Daw->rows() : 0));
  p.Bw = Bw ? *Bw : Matrix::Zero(n, p_dim);
  p.Dw = Dw ? *Dw : Matrix::Zero(r, p_dim);
  p.Bdelta = Bd ? *Bd : Matrix::Zero(n, q_dim);
  p.Calpha = Ca ? *Ca : Matrix::Zero(s_dim, n);
  p.Dalpha_u = Dau ? *Dau : Matrix::Zero(s_dim, m);
  p.Dalpha_w = Daw ? *Daw : Matrix::Zero(s_dim, p_dim);
  auto limits = [&](const char* key, Eigen::Index size) {
    if (!j.contains(key) || j[key].is_null()) return Vector(Vector::Constant(size, kInf));
    return vector_from_json(j[key], std::string("plant.") + key);
  };
  p.x_lim = limits("x_lim", n);
  p.y_lim = limits("y_lim", r);
  p.u_lim = limits("u_lim", m);
  p.w_inf = j.contains("w_inf") ? number(j["w_inf"], "plant.w_inf") : 0.0;
  try {
    p.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("plant: ") + e.what());
  }
  return PlantFile{std::move(p), get("Gamma_Delta")};
}

Json policy_to_json(const Policy& policy) {
  Json layers = Json::array();
  for (const Layer& l : policy.network.layers()) {
    Json w = Json::array();
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(i, c));
    }
    layers.push_back(Json{{"rows", l.weights.rows()},
                          {"cols", l.weights.cols()},
                          {"weights", w},
                          {"bias", vector_to_json(l.bias)},
                          {"activation", activation_name(l.activation)}});
  }
  Json j;
  j["layers"] = layers;
  j["quantization"] = policy.quantization ? Json{{"step", policy.quantization->step}} : Json(nullptr);
  return j;
}

Policy policy_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("layers") || !j["layers"].is_array()) {
    throw ParseError("policy: expected an object with a \"layers\" array");
  }
  std::vector<Layer> layers;
  for (std::size_t k = 0; k < j["layers"].size(); ++k) {
    const Json& l = j["layers"][k];
    const std::string what = fmt::format("policy.layers[{}]", k);
    if (!l.is_object()) throw ParseError(what + ": expected an object");
    Json as_matrix{{"rows", l.value("rows", Json())}, {"cols", l.value("cols", Json())},
                   {"data", l.value("weights", Json())}};
    Layer layer;
    layer.weights = matrix_from_json(as_matrix, what);
    layer.bias = vector_from_json(l.value("bias", Json()), what + ".bias");
    const std::string act = l.value("activation", std::string("relu"));
    if (act == "relu") {
      layer.activation = Activation::kRelu;
    } else if (act == "linear") {
      layer.activation = Activation::kLinear;
    } else {
      throw ParseError(what + ": unknown activation \"" + act + "\"");
    }
    layers.push_back(std::move(layer));
  }
  Policy policy;
  try {
    policy.network = ReluNetwork(std::move(layers));
  } catch (const Error& e) {
    throw ParseError(std::string("policy: ") + e.what());
  }
  if (j.contains("quantization") && !j["quantization"].is_null()) {
    const Json& q = j["quantization"];
    if (!q.is_object() || !q.contains("step") || !q["step"].is_number() ||
        !(q["step"].get<double>() > 0.0)) {
      throw ParseError("policy.quantization: expected {\"step\": positive number}");
    }
    policy.quantization = QuantizationSpec{q["step"].get<double>()};
  }
  return policy;
}

Json cert_result_to_json(const CertResult& r) {
  Json j;
  j["success"] = r.success;
  j["iterations"] = r.iterations;
  j["x_bar"] = vector_to_json(r.x_bar);
  j["y_bar"] = vector_to_json(r.y_bar);
  j["u_bar"] = vector_to_json(r.u_bar);
  j["failure_reason"] = r.failure_reason ? Json(to_string(*r.failure_reason)) : Json(nullptr);
  j["u0_bar"] = vector_to_json(r.u0_bar);
  j["alpha_bar"] = vector_to_json(r.alpha_bar);
  if (r.gain.size() > 0) j["gain"] = matrix_to_json(r.gain);
  if (r.gain_source) {
    static const char* names[] = {"midpoint", "jacobian", "default"};
    j["gain_source"] = names[static_cast<int>(*r.gain_source)];
  }
  if (r.quadruplet) {
    j["quadruplet"] = Json{{"y_bar", vector_to_json(r.quadruplet->y_bar)},
                           {"u_bar", vector_to_json(r.quadruplet->u_bar)},
                           {"alpha_bar", vector_to_json(r.quadruplet->alpha_bar)},
                           {"delta_bar", vector_to_json(r.quadruplet->delta_bar)},
                           {"x_bar", vector_to_json(r.quadruplet->x_bar)}};
  }
  return j;
}

Json baseline_to_json(const BaselineCertification& r) {
  Json j;
  j["applicable"] = r.applicable;
  j["certified"] = r.certified;
  j["estimate_only"] = true;
  j["beta1"] = r.lemma.beta1;
  j["beta2"] = r.lemma.beta2;
  j["y_inf_implied"] = r.lemma.y_inf_implied;
  j["y_inf"] = r.y_inf;
  j["gamma_pi"] = r.gamma_pi;
  j["gamma_delta"] = r.gamma_delta;
  j["iterations"] = r.iterations;
  j["x_bar"] = vector_to_json(r.x_bar);
  j["failure_reason"] = r.failure_reason ? Json(to_string(*r.failure_reason)) : Json(nullptr);
  if (r.gain.size() > 0) j["gain"] = matrix_to_json(r.gain);
  j["lipschitz_probe"] = Json{{"scales", r.probe.scales},
                              {"estimates", r.probe.estimates},
                              {"diverges", r.probe.diverges}};
  j["note"] = r.note;
  return j;
}

Json plan_to_json(const AttackPlan& plan) {
  Json signs = Json::array();
  for (Eigen::Index t = 0; t < plan.signs.rows(); ++t) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < plan.signs.cols(); ++c) row.push_back(static_cast<int>(plan.signs(t, c)));
    signs.push_back(row);
  }
  return Json{{"target", plan.target}, {"T", plan.horizon}, {"w_inf", plan.w_inf}, {"signs", signs}};
}

AttackPlan plan_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("plan: expected an object");
  for (const char* key : {"target", "T", "w_inf", "signs"}) {
    if (!j.contains(key)) throw ParseError(std::string("plan: missing \"") + key + "\"");
  }
  AttackPlan plan;
  plan.target = j["target"].get<int>();
  plan.horizon = j["T"].get<int>();
  plan.w_inf = number(j["w_inf"], "plan.w_inf");
  const Json& s = j["signs"];
  if (!s.is_array() || static_cast<int>(s.size()) != plan.horizon + 1) {
    throw ParseError("plan.signs: expected T + 1 rows");
  }
  const std::size_t cols = s.empty() ? 0 : s[0].size();
  plan.signs = Matrix::Zero(s.size(), cols);
  for (std::size_t t = 0; t < s.size(); ++t) {
    if (!s[t].is_array() || s[t].size() != cols) throw ParseError("plan.signs: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      const int v = s[t][c].get<int>();
      if (v < -1 || v > 1) throw ParseError("plan.signs: entries must be -1, 0 or 1");
      plan.signs(t, c) = v;
    }
  }
  return plan;
}

Json learned_model_to_json(const LearnedModel& model, const StateSpacePlant& io) {
  Json j = plant_to_json(learned_plant(model, io), model.gamma_delta());
  j["Delta_A"] = matrix_to_json(model.delta_A);
  j["Delta_B"] = matrix_to_json(model.delta_B);
  j["bootstrap_samples"] = model.bootstrap_fits.size();
  return j;
}

Json lqr_to_json(const LqrSolution& sol) {
  return Json{{"P", matrix_to_json(sol.P)},
              {"K", matrix_to_json(sol.K)},
              {"feedback_gain", matrix_to_json(-sol.K)},
              {"iterations", sol.iterations}};
}

CartPoleParams cartpole_params_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("cart-pole parameters: expected an object");
  CartPoleParams p;
  const std::pair<const char*, double*> fields[] = {{"g", &p.gravity},
                                                    {"M", &p.cart_mass},
                                                    {"m", &p.pole_mass},
                                                    {"l", &p.length},
                                                    {"tau", &p.tau}};
  for (const auto& [key, dst] : fields) {
    if (j.contains(key)) *dst = number(j[key], std::string("cart-pole.") + key);
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const auto& f : fields) known = known || it.key() == f.first;
    if (!known) throw ParseError("cart-pole parameters: unknown key \"" + it.key() + "\"");
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("cart-pole parameters: ") + e.what());
  }
  return p;
}

std::string frontier_csv(const std::vector<FrontierPoint>& points, double scale) {
  auto cell = [&](const std::optional<double>& v) { return v ? format_double(*v * scale) : std::string(); };
  std::string out = "x_lim,w_certified,w_baseline,w_attack\n";
  for (const auto& p : points) {
    out += format_double(p.x_lim * scale) + "," + format_double(p.w_certified * scale) + "," +
           cell(p.w_baseline) + "," + cell(p.w_attack) + "\n";
  }
  return out;
}

std::string trace_csv(const SimTrace& trace) {
  std::string out = "t";
  auto header = [&](const char* name, Eigen::Index count) {
    for (Eigen::Index i = 1; i <= count; ++i) out += fmt::format(",{}_{}", name, i);
  };
  header("w", trace.w.cols());
  header("x", trace.x.cols());
  header("y", trace.y.cols());
  header("u", trace.u.cols());
  out += "\n";
  for (Eigen::Index t = 0; t < trace.x.rows(); ++t) {
    out += std::to_string(t);
    for (const Matrix* m : {&trace.w, &trace.x, &trace.y, &trace.u}) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) out += "," + format_double((*m)(t, c));
    }
    out += "\n";
  }
  return out;
}

std::string episodes_csv(const std::vector<Episode>& data) {
  if (data.empty()) return "episode,t\n";
  const auto n = data.front().states.front().size();
  const auto m = data.front().inputs.empty() ? 0 : data.front().inputs.front().size();
  std::string out = "episode,t";
  for (Eigen::Index i = 1; i <= n; ++i) out += fmt::format(",x_{}", i);
  for (Eigen::Index i = 1; i <= m; ++i) out += fmt::format(",u_{}", i);
  out += "\n";
  for (std::size_t e = 0; e < data.size(); ++e) {
    const auto& ep = data[e];
    for (std::size_t t = 0; t < ep.states.size(); ++t) {
      out += fmt::format("{},{}", e, t);
      for (Eigen::Index i = 0; i < n; ++i) out += "," + format_double(ep.states[t](i));
      for (Eigen::Index i = 0; i < m; ++i) {
        out += ",";
        if (t < ep.inputs.size()) out += format_double(ep.inputs[t](i));
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace loopcert
