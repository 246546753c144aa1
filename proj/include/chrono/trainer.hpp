#pragma once

#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chrono/dataset.hpp"
#include "chrono/nets.hpp"
#include "chrono/tensor_archive.hpp"

namespace chrono::trainer {

struct TrainConfig {
  nets::BundleMode mode = nets::BundleMode::MultiFrame;
  int64_t iterations = 60000;
  int batch_size = 4;
  int frames_per_example = 16;
  double learning_rate = 0.0002;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double lambda_rec = 0.5;
  int image_size = 128;
  int resize_size = 136;
  uint64_t seed = 1;
  nets::TimeEncodingMode time_encoding = nets::TimeEncodingMode::Cyclic;
  int d_z = 64;
  int64_t checkpoint_every = 1000;
  int64_t log_every = 1;  // metrics record per iteration

  // architecture
  int base_channels = 64;
  int encoder_stages = 2;
  int res_blocks = 6;
  int disc_base_channels = 64;
  int cond_embed_dim = 128;
  int translator_channels = 64;
  std::string pretrained_encoder;

  // training behavior
  bool literal_paper_loss = false;   // reproduce the displayed "1 - log D" fake terms
  bool aligned_reconstruction = false;  // pair each frame with its own timestamp
  int negative_pairs = 0;            // per set; 0 means frames_per_example
  int workers = 0;                   // 0 = serial profile, 1 = prefetch thread
  int nonfinite_abort_after = 10;

  // augmentation ranges (resize_to/crop_to come from resize_size/image_size)
  double aug_rotation_deg = 10.0;
  double aug_scale_lo = 0.9;
  double aug_scale_hi = 1.1;
  double aug_shear_deg = 10.0;
  double aug_hflip_prob = 0.5;

  void validate() const;
  nets::ModelConfig model_config() const;
  AugmentConfig augment_config() const;
  int negatives_per_set() const { return negative_pairs > 0 ? negative_pairs : frames_per_example; }

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j, bool strict = true);
  std::string canonical_json() const;
  std::string config_hash() const;
};

struct MetricsRecord {
  int64_t iteration = 0;
  std::map<std::string, double> losses;
  double wall_ms = 0.0;
  /// Max |grad| accumulated on translator parameters by the conditional-loss
  /// backward pass; the gating contract requires exactly zero.
  double translator_cond_grad_max = 0.0;
  bool skipped_nonfinite = false;
  std::string sample_digest;  // hash of the first generated frame

  nlohmann::json to_json() const;
};

/// Adam over named parameters with serializable per-parameter state.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<std::pair<std::string, torch::Tensor>> params, double lr, double beta1,
       double beta2, double eps = 1e-8);

  void zero_grad();
  void step();

  void export_state(const std::string& prefix, TensorArchive& archive) const;
  void import_state(const std::string& prefix, const TensorArchive& archive);
  int64_t step_count() const { return step_count_; }

 private:
  std::vector<std::pair<std::string, torch::Tensor>> params_;
  std::vector<torch::Tensor> m_, v_;
  double lr_ = 0, beta1_ = 0, beta2_ = 0, eps_ = 1e-8;
  int64_t step_count_ = 0;
};

struct TrainState {
  TrainConfig config;
  nets::ModelBundle bundle;
  Adam opt_generator;
  Adam opt_set_disc;
  std::optional<Adam> opt_translator;
  std::optional<Adam> opt_frame_disc;
  int64_t iteration = 0;
  Rng data_rng{0};
  Rng step_rng{0};
  int consecutive_nonfinite = 0;
};

TrainState make_train_state(const TrainConfig& config);

// -- Batch assembly -------------------------------------------------------------

/// Inputs and conditioning for one batch of generated framesets. Latent rows
/// repeat one shared draw per set.
struct GenPlan {
  torch::Tensor src_images;   // [N,3,h,w]
  torch::Tensor time_enc;     // [N,k]
  torch::Tensor latent_rows;  // [N,d_z]
  std::vector<int64_t> sizes;
  std::vector<double> times;  // target times per generated frame
};

/// Labeled-domain plan: target times are the set's own timestamps; source
/// frames are a within-set permutation of the inputs unless
/// config.aligned_reconstruction asks for the literal same-index pairing.
GenPlan make_labeled_plan(const std::vector<FrameSet>& sets, const TrainConfig& config, Rng& rng);

/// Unlabeled-domain plan: sources are the window frames in order; target times
/// are drawn from the labeled corpus's empirical timestamp distribution.
GenPlan make_unlabeled_plan(const std::vector<FrameSet>& sets,
                            const std::vector<double>& empirical_times, const TrainConfig& config,
                            Rng& rng);

// -- Training steps -----------------------------------------------------------
// One iteration each; discriminators update first, then the generator(s).

MetricsRecord train_step_vanilla(TrainState& state, const std::vector<TimedFrame>& frames,
                                 const TrainConfig& config, Rng& rng);

MetricsRecord train_step_multiframe(TrainState& state, const std::vector<FrameSet>& labeled_batch,
                                    const TrainConfig& config, Rng& rng);

/// `empirical_times` is the labeled corpus's timestamp pool; target times for
/// the unlabeled side are drawn from it.
MetricsRecord train_step_multidomain(TrainState& state, const std::vector<FrameSet>& labeled_batch,
                                     const std::vector<FrameSet>& unlabeled_batch,
                                     const std::vector<double>& empirical_times,
                                     const TrainConfig& config, Rng& rng);

// -- Checkpointing ------------------------------------------------------------

void save_checkpoint(const TrainState& state, const std::string& path);

/// Rebuilds a full training state from a checkpoint (models, optimizer state,
/// rng streams, iteration counter).
TrainState load_checkpoint(const std::string& path);

/// Metadata only (mode, iteration, config, parameter counts).
nlohmann::json inspect_checkpoint(const std::string& path);

/// Resume guard: the stored config hash must match `expected`.
void check_config_hash(const std::string& path, const TrainConfig& expected);

// -- Full loop ----------------------------------------------------------------

struct TrainResult {
  std::string checkpoint_path;
  int64_t final_iteration = 0;
};

/// Runs the configured number of iterations over the given datasets, writing
/// metrics (JSON lines) and periodic checkpoints under out_dir. Resumes from
/// out_dir/checkpoint.ckpt when resume=true and the file exists.
TrainResult train(const TrainConfig& config, const DatasetIndex& labeled,
                  const DatasetIndex* unlabeled, const std::string& out_dir, bool resume = false);

}  // namespace chrono::trainer
