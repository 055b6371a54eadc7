#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "loopcert/attack.hpp"
#include "loopcert/certify.hpp"
#include "loopcert/linsys.hpp"
#include "loopcert/neural.hpp"
#include "loopcert/plant.hpp"
#include "loopcert/policysynth.hpp"
#include "loopcert/sysid.hpp"

namespace loopcert {

using Json = nlohmann::ordered_json;

// Deterministic text form: floats with 17 significant digits, non-finite
// floats as null, two-space indentation.
std::string dump_json(const Json& j);
std::string format_double(double v);

// Parses text; errors carry "<origin>:<line>:<column>: ...".
Json parse_json(const std::string& text, const std::string& origin);
Json read_json_file(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// {"rows":R,"cols":C,"data":[row-major]}
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, const std::string& what);

// Arrays with null standing for +inf.
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j, const std::string& what);

struct PlantFile {
  StateSpacePlant plant;
  std::optional<Matrix> gamma_delta;
};

Json plant_to_json(const StateSpacePlant& plant, const std::optional<Matrix>& gamma_delta = std::nullopt);
PlantFile plant_from_json(const Json& j);

Json policy_to_json(const Policy& policy);
Policy policy_from_json(const Json& j);

Json cert_result_to_json(const CertResult& r);
Json baseline_to_json(const BaselineCertification& r);

Json plan_to_json(const AttackPlan& plan);
AttackPlan plan_from_json(const Json& j);

Json learned_model_to_json(const LearnedModel& model, const StateSpacePlant& io);
Json lqr_to_json(const LqrSolution& sol);

// Overrides {"g","M","m","l","tau"} on top of the defaults.
CartPoleParams cartpole_params_from_json(const Json& j);

// Header `x_lim,w_certified,w_baseline,w_attack`; absent columns left empty.
std::string frontier_csv(const std::vector<FrontierPoint>& points, double scale = 1.0);

// Header `t,w_1..,x_1..,y_1..,u_1..`.
std::string trace_csv(const SimTrace& trace);

// Header `episode,t,x_1..,u_1..`; the last row of an episode has empty inputs.
std::string episodes_csv(const std::vector<Episode>& data);

}  // namespace loopcert
