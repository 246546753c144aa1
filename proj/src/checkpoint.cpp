#include <filesystem>

#include "chrono/trainer.hpp"

using nlohmann::json;

namespace chrono::trainer {

namespace {

constexpr const char* kCheckpointKind = "chrono-checkpoint";

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  TensorArchive archive;
  archive.meta["kind"] = kCheckpointKind;
  archive.meta["config"] = state.config.to_json();
  archive.meta["config_hash"] = state.config.config_hash();
  archive.meta["iteration"] = state.iteration;
  archive.meta["mode"] = nets::bundle_mode_name(state.bundle.mode);
  archive.meta["rng_data"] = state.data_rng.serialize_state();
  archive.meta["rng_step"] = state.step_rng.serialize_state();

  for (const auto& [name, p] : state.bundle.named_parameters()) {
    archive.tensors["param." + name] = p.detach().clone();
  }
  state.opt_generator.export_state("generator", archive);
  state.opt_set_disc.export_state("set_disc", archive);
  if (state.opt_translator) state.opt_translator->export_state("translator", archive);
  if (state.opt_frame_disc) state.opt_frame_disc->export_state("frame_disc", archive);
  archive.save(path);
}

TrainState load_checkpoint(const std::string& path) {
  TensorArchive archive = TensorArchive::load(path);
  if (archive.meta.value("kind", "") != kCheckpointKind) {
    fail(ErrorCode::CorruptCheckpoint, "not a checkpoint file: " + path);
  }
  TrainConfig config;
  try {
    config = TrainConfig::from_json(archive.meta.at("config"), /*strict=*/true);
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptCheckpoint, std::string("bad checkpoint config: ") + e.what());
  }

  TrainState state = make_train_state(config);
  state.iteration = archive.meta.value("iteration", int64_t{0});
  state.data_rng.restore_state(archive.meta.at("rng_data").get<std::string>());
  state.step_rng.restore_state(archive.meta.at("rng_step").get<std::string>());

  torch::NoGradGuard no_grad;
  size_t matched = 0;
  for (auto& [name, p] : state.bundle.named_parameters()) {
    auto it = archive.tensors.find("param." + name);
    if (it == archive.tensors.end()) {
      fail(ErrorCode::CorruptCheckpoint, "missing parameter: " + name);
    }
    if (!it->second.sizes().equals(p.sizes())) {
      fail(ErrorCode::CorruptCheckpoint, "parameter shape mismatch: " + name);
    }
    p.copy_(it->second);
    ++matched;
  }
  size_t stored = 0;
  for (const auto& [key, t] : archive.tensors) {
    if (key.rfind("param.", 0) == 0) ++stored;
  }
  if (stored != matched) {
    fail(ErrorCode::CorruptCheckpoint, "checkpoint holds unknown parameters");
  }

  state.opt_generator.import_state("generator", archive);
  state.opt_set_disc.import_state("set_disc", archive);
  if (state.opt_translator) state.opt_translator->import_state("translator", archive);
  if (state.opt_frame_disc) state.opt_frame_disc->import_state("frame_disc", archive);
  return state;
}

json inspect_checkpoint(const std::string& path) {
  TensorArchive archive = TensorArchive::load(path);
  if (archive.meta.value("kind", "") != kCheckpointKind) {
    fail(ErrorCode::CorruptCheckpoint, "not a checkpoint file: " + path);
  }
  json out;
  out["mode"] = archive.meta.value("mode", "unknown");
  out["iteration"] = archive.meta.value("iteration", int64_t{0});
  out["config"] = archive.meta.at("config");
  out["config_hash"] = archive.meta.value("config_hash", "");

  json counts = json::object();
  int64_t total = 0;
  for (const auto& [key, t] : archive.tensors) {
    if (key.rfind("param.", 0) != 0) continue;
    const std::string name = key.substr(6);
    const std::string group = name.substr(0, name.find('.'));
    const int64_t n = t.numel();
    counts[group] = counts.value(group, int64_t{0}) + n;
    total += n;
  }
  out["parameter_counts"] = counts;
  out["parameter_total"] = total;
  return out;
}

void check_config_hash(const std::string& path, const TrainConfig& expected) {
  TensorArchive archive = TensorArchive::load(path);
  const std::string stored = archive.meta.value("config_hash", "");
  if (stored != expected.config_hash()) {
    fail(ErrorCode::ConfigMismatch,
         "checkpoint config hash " + stored + " != expected " + expected.config_hash());
  }
}

}  // namespace chrono::trainer
