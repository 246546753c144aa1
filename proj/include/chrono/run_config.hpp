#pragma once

#include <string>

#include "chrono/trainer.hpp"
#include "chrono/upsampler.hpp"

namespace chrono {

/// Everything a run needs: training hyperparameters, solver settings, dataset
/// and output paths. Loadable from one JSON document; unknown keys rejected.
struct RunConfig {
  trainer::TrainConfig train;
  UpsampleConfig upsample;
  std::string labeled_manifest;
  std::string unlabeled_manifest;
  std::string output_dir = "runs/default";
  std::string log_level;  // empty = keep CHRONO_LOG / default

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
};

nlohmann::json upsample_config_to_json(const UpsampleConfig& u);
UpsampleConfig upsample_config_from_json(const nlohmann::json& j);

}  // namespace chrono
