#pragma once

#include <optional>
#include <string>
#include <vector>

#include "chrono/image.hpp"
#include "chrono/trainer.hpp"
#include "chrono/upsampler.hpp"

namespace chrono::synthesis {

struct SynthesisRequest {
  std::string image_path;
  std::string checkpoint_path;

  /// Either an explicit timestamp list, or a wrapped schedule of frame_count
  /// times starting at t_start; schedules with t_end <= t_start cross midnight.
  std::vector<double> timestamps;
  double t_start = 0.0;
  double t_end = 1.0;
  int frame_count = 0;  // used when `timestamps` is empty

  uint64_t latent_seed = 0;
  std::optional<std::vector<float>> latent;  // explicit latent overrides the seed

  bool upsample = true;
  UpsampleConfig upsample_config;

  /// Generator grid: 0 runs at native resolution (reflect-padded to the
  /// encoder stride); otherwise the input is area-resized to this square size.
  int network_size = -1;  // -1 = checkpoint's training crop
};

struct SynthesizedSequence {
  std::vector<ImageGrid> frames;
  std::vector<double> timestamps;
  std::vector<float> latent;
  std::string checkpoint_hash;
  nlohmann::json provenance;
};

/// Evenly spaced day fractions from t_start toward t_end (wrapping past
/// midnight when t_end <= t_start); the endpoint is exclusive.
std::vector<double> make_schedule(double t_start, double t_end, int count);

/// Runs the generator once per timestamp with a single shared latent, then
/// optionally guided-upsamples each frame against the full-resolution input.
SynthesizedSequence synthesize(const SynthesisRequest& request);

/// Writes frames/%05d.png plus sequence.json (and optionally a horizontal
/// contact sheet); refuses to overwrite an existing sequence unless forced.
/// Returns the manifest path.
std::string write_sequence(const SynthesizedSequence& seq, const std::string& out_dir,
                           bool force = false, bool contact_sheet = false);

}  // namespace chrono::synthesis
