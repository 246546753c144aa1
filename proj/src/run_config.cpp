#include "chrono/run_config.hpp"

#include <fstream>

using nlohmann::json;

namespace chrono {

json upsample_config_to_json(const UpsampleConfig& u) {
  return json{{"beta", u.beta},
              {"eps_w", u.eps_w},
              {"eps_ridge", u.eps_ridge},
              {"solver", u.solver == UpsampleConfig::Solver::CG ? "cg" : "dense"},
              {"cg_tol", u.cg_tol},
              {"cg_max_iters", u.cg_max_iters}};
}

UpsampleConfig upsample_config_from_json(const json& j) {
  UpsampleConfig u;
  const json defaults = upsample_config_to_json(u);
  for (auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) fail(ErrorCode::InvalidArgument, "unknown upsample key: " + key);
  }
  try {
    if (j.contains("beta")) u.beta = j.at("beta").get<double>();
    if (j.contains("eps_w")) u.eps_w = j.at("eps_w").get<double>();
    if (j.contains("eps_ridge")) u.eps_ridge = j.at("eps_ridge").get<double>();
    if (j.contains("solver")) {
      const auto s = j.at("solver").get<std::string>();
      if (s == "cg") {
        u.solver = UpsampleConfig::Solver::CG;
      } else if (s == "dense") {
        u.solver = UpsampleConfig::Solver::Dense;
      } else {
        fail(ErrorCode::InvalidArgument, "solver must be cg|dense");
      }
    }
    if (j.contains("cg_tol")) u.cg_tol = j.at("cg_tol").get<double>();
    if (j.contains("cg_max_iters")) u.cg_max_iters = j.at("cg_max_iters").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("bad upsample value: ") + e.what());
  }
  u.validate();
  return u;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  const json defaults = c.to_json();
  for (auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) fail(ErrorCode::InvalidArgument, "unknown config key: " + key);
  }
  try {
    if (j.contains("train")) c.train = trainer::TrainConfig::from_json(j.at("train"));
    if (j.contains("upsample")) c.upsample = upsample_config_from_json(j.at("upsample"));
    if (j.contains("labeled_manifest")) c.labeled_manifest = j.at("labeled_manifest").get<std::string>();
    if (j.contains("unlabeled_manifest"))
      c.unlabeled_manifest = j.at("unlabeled_manifest").get<std::string>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("log_level")) c.log_level = j.at("log_level").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("bad run config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidArgument, "config file not found: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  return json{{"train", train.to_json()},
              {"upsample", upsample_config_to_json(upsample)},
              {"labeled_manifest", labeled_manifest},
              {"unlabeled_manifest", unlabeled_manifest},
              {"output_dir", output_dir},
              {"log_level", log_level}};
}

}  // namespace chrono
