#include "qts/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace qts {

void ModelParams::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("ModelParams: " + what);
  };
  for (int i = 0; i < 4; ++i) {
    require(std::isfinite(a[i]) && a[i] > 0.0, "a must be positive");
    require(std::isfinite(A[i]) && A[i] > 0.0, "A must be positive");
    require(std::isfinite(sigma[i]) && sigma[i] >= 0.0, "sigma must be >= 0");
    require(std::isfinite(sigma_d[i]) && sigma_d[i] >= 0.0, "sigma_d must be >= 0");
    require(std::isfinite(r2[i]) && r2[i] > 0.0, "r2 must be positive");
  }
  for (int j = 0; j < 2; ++j)
    require(std::isfinite(gamma[j]) && gamma[j] > 0.0 && gamma[j] < 1.0,
            "gamma must lie in (0,1)");
  require(std::isfinite(rho) && rho > 0.0, "rho must be positive");
  require(std::isfinite(g_a) && g_a > 0.0, "g_a must be positive");
}

namespace {
const std::array<double, 4> kTuningSigma = {7.25, 14.92, 8.98, 14.50};
const std::array<double, 4> kTuningSigmaD = {0.47, 3.08, 3.92, 3.42};
const std::array<double, 4> kTuningR2 = {1.44e-2, 1.34e-2, 1.00e-5, 1.00e-5};
}  // namespace

ModelParams nominal_params() {
  ModelParams p;
  p.a = {1.131, 1.131, 1.131, 1.131};
  p.A = {380.133, 380.133, 380.133, 380.133};
  p.gamma = {0.35, 0.35};
  p.sigma = {0.0, 0.0, 0.0, 0.0};
  p.sigma_d = {0.0, 0.0, 0.0, 0.0};
  p.r2 = kTuningR2;
  return p;
}

ModelParams estimated_params() {
  ModelParams p;
  p.a = {1.006, 1.249, 1.315, 1.548};
  p.A = {379.837, 378.034, 466.300, 523.122};
  p.gamma = {0.260, 0.353};
  p.sigma = {10.07e-3, 13.09e-3, 12.50e-3, 16.62e-3};
  p.sigma_d = {0.0, 0.0, 0.0, 0.0};
  p.r2 = kTuningR2;
  return p;
}

ModelParams with_filter_tuning(ModelParams p) {
  p.sigma = kTuningSigma;
  p.sigma_d = kTuningSigmaD;
  p.r2 = kTuningR2;
  return p;
}

ModelParams params_preset(const std::string& name) {
  if (name == "nominal") return nominal_params();
  if (name == "estimated") return estimated_params();
  if (name == "estimated+tuning") return with_filter_tuning(estimated_params());
  if (name == "nominal+tuning") return with_filter_tuning(nominal_params());
  throw std::invalid_argument("unknown parameter preset: " + name);
}

std::string params_to_json(const ModelParams& p) {
  nlohmann::json j;
  j["a"] = p.a;
  j["A"] = p.A;
  j["gamma"] = p.gamma;
  j["rho"] = p.rho;
  j["g_a"] = p.g_a;
  j["sigma"] = p.sigma;
  j["sigma_d"] = p.sigma_d;
  j["r2"] = p.r2;
  return j.dump(2) + "\n";
}

ModelParams params_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelParams p;
  j.at("a").get_to(p.a);
  j.at("A").get_to(p.A);
  j.at("gamma").get_to(p.gamma);
  if (j.contains("rho")) p.rho = j.at("rho").get<double>();
  if (j.contains("g_a")) p.g_a = j.at("g_a").get<double>();
  if (j.contains("sigma")) j.at("sigma").get_to(p.sigma);
  if (j.contains("sigma_d")) j.at("sigma_d").get_to(p.sigma_d);
  if (j.contains("r2")) j.at("r2").get_to(p.r2);
  p.validate();
  return p;
}

ModelParams load_params_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open parameter file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return params_from_json(ss.str());
}

void save_params_file(const ModelParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write parameter file: " + path);
  out << params_to_json(p);
}

}  // namespace qts
