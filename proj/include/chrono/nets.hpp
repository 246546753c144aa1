#pragma once

#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "chrono/dataset.hpp"
#include "chrono/image.hpp"

namespace chrono::nets {

// -- Time encoding ------------------------------------------------------------

enum class TimeEncodingMode { Raw, Cyclic };

inline int time_encoding_channels(TimeEncodingMode mode) {
  return mode == TimeEncodingMode::Raw ? 1 : 2;
}

/// Raw: [t]. Cyclic: [sin 2*pi*t, cos 2*pi*t] (continuous across midnight).
std::vector<double> encode_time(TimeOfDay t, TimeEncodingMode mode);

/// Stacks encodings for a list of day fractions into a [n, channels] tensor.
torch::Tensor encode_times_tensor(const std::vector<double>& times, TimeEncodingMode mode);

// -- Latent context -------------------------------------------------------------

/// Per-sequence latent shared by every frame of one synthesized day.
struct LatentContext {
  std::vector<float> values;

  torch::Tensor tensor() const;
};

LatentContext sample_latent(int d_z, Rng& rng);

// -- Configuration --------------------------------------------------------------

struct ModelConfig {
  int image_size = 128;       // training crop; inputs must divide the encoder stride
  int base_channels = 64;     // generator encoder width
  int encoder_stages = 2;     // downsampling stages (total stride 2^stages)
  int res_blocks = 6;
  int d_z = 64;               // 0 disables the latent input (vanilla ablation)
  TimeEncodingMode time_encoding = TimeEncodingMode::Cyclic;
  int disc_base_channels = 64;
  int cond_embed_dim = 128;   // per-frame embedding width in the conditional head
  int translator_channels = 64;
  std::string pretrained_encoder;  // optional weight archive for the generator encoder

  void validate() const;
  int total_stride() const { return 1 << encoder_stages; }
};

enum class BundleMode { Vanilla, MultiFrame, MultiDomain };

const char* bundle_mode_name(BundleMode mode);
BundleMode bundle_mode_from_name(const std::string& name);

// -- Networks ---------------------------------------------------------------

/// Timestamp-conditioned tone generator: VGG-style conv encoder, residual
/// blocks fed with broadcast latent/time channels, transposed-conv decoder,
/// tanh output. Output dims equal input dims.
class ToneGeneratorImpl : public torch::nn::Module {
 public:
  explicit ToneGeneratorImpl(const ModelConfig& config);

  /// images [n,3,H,W]; time_enc [n,k]; latent [n,d_z] (may have 0 columns).
  torch::Tensor forward(const torch::Tensor& images, const torch::Tensor& time_enc,
                        const torch::Tensor& latent);

  /// Copies conv weights from a key->array archive into the encoder.
  void load_encoder_weights(const std::string& archive_path);

  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Conv2d fuse_{nullptr};
  std::vector<torch::nn::Sequential> blocks_;
  torch::nn::Sequential decoder_{nullptr};
};
TORCH_MODULE(ToneGenerator);

/// Two-headed set discriminator over a shared image encoder: a per-image
/// realism score and a permutation-invariant set score over (image, time)
/// pairs aggregated by max-pooling.
class SetDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit SetDiscriminatorImpl(const ModelConfig& config);

  torch::Tensor encode(const torch::Tensor& images);          // [n, F]
  torch::Tensor uncond_scores(const torch::Tensor& images);   // [n] in (0,1)
  torch::Tensor uncond_logits(const torch::Tensor& images);   // [n] pre-sigmoid

  /// One set: score in (0,1), invariant to frame order.
  torch::Tensor cond_score(const torch::Tensor& images, const torch::Tensor& time_enc);

  /// Batched sets laid out contiguously; returns one score per set.
  torch::Tensor cond_scores_packed(const torch::Tensor& images, const torch::Tensor& time_enc,
                                   const std::vector<int64_t>& set_sizes);
  torch::Tensor cond_logits_packed(const torch::Tensor& images, const torch::Tensor& time_enc,
                                   const std::vector<int64_t>& set_sizes);

 private:
  torch::Tensor frame_embeddings(const torch::Tensor& feats, const torch::Tensor& time_enc);
  torch::Tensor pooled_logits(const torch::Tensor& emb, const std::vector<int64_t>& set_sizes);

  ModelConfig config_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Linear uncond_head_{nullptr};
  torch::nn::Sequential frame_head_{nullptr};
  torch::nn::Sequential set_head_{nullptr};
};
TORCH_MODULE(SetDiscriminator);

/// U-Net image-to-image translator (dims preserved, tanh output).
class DomainTranslatorImpl : public torch::nn::Module {
 public:
  explicit DomainTranslatorImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& images);

 private:
  torch::nn::Sequential enc1_{nullptr}, enc2_{nullptr}, enc3_{nullptr}, mid_{nullptr};
  torch::nn::ConvTranspose2d up3_{nullptr}, up2_{nullptr};
  torch::nn::Sequential dec3_{nullptr}, dec2_{nullptr}, out_{nullptr};
};
TORCH_MODULE(DomainTranslator);

/// Strided-conv classifier to a scalar realism score.
class FrameDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit FrameDiscriminatorImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& images);  // [n] in (0,1)
  torch::Tensor logits(const torch::Tensor& images);   // [n] pre-sigmoid

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(FrameDiscriminator);

// -- Bundle -------------------------------------------------------------------

struct ModelBundle {
  BundleMode mode = BundleMode::MultiFrame;
  ModelConfig config;
  ToneGenerator generator{nullptr};
  SetDiscriminator set_disc{nullptr};
  DomainTranslator translator{nullptr};   // multi-domain only
  FrameDiscriminator frame_disc{nullptr}; // multi-domain only

  bool has_translator() const { return mode == BundleMode::MultiDomain; }

  /// Canonically named parameters ("generator.*", "set_disc.*", ...).
  std::vector<std::pair<std::string, torch::Tensor>> named_parameters() const;
  int64_t parameter_count() const;
  void set_requires_grad(const std::string& prefix, bool value) const;
  void zero_all_grads() const;
};

/// Deterministic construction: the same seed yields bit-identical parameters.
/// An optional pretrained encoder archive overrides the generator encoder.
ModelBundle init_models(BundleMode mode, const ModelConfig& config, uint64_t seed);

// -- ImageGrid-level operations -------------------------------------------------

torch::Tensor to_tensor(const ImageGrid& image);                 // [3,h,w]
torch::Tensor to_batch(const std::vector<const ImageGrid*>& images);
ImageGrid from_tensor(const torch::Tensor& chw);

ImageGrid generator_forward(ToneGenerator& gen, const ImageGrid& image, TimeOfDay t,
                            const LatentContext& z);

/// One output per timestamp, all sharing the single latent context.
std::vector<ImageGrid> generate_frameset(ToneGenerator& gen, const ImageGrid& image,
                                         const std::vector<TimeOfDay>& times,
                                         const LatentContext& z);

double disc_uncond_score(SetDiscriminator& disc, const ImageGrid& image);
double disc_cond_score(SetDiscriminator& disc,
                       const std::vector<std::pair<ImageGrid, TimeOfDay>>& pairs,
                       TimeEncodingMode mode);
ImageGrid translator_forward(DomainTranslator& translator, const ImageGrid& image);

}  // namespace chrono::nets
