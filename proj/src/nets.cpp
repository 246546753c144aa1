#include "chrono/nets.hpp"

#include <cmath>

#include "chrono/tensor_archive.hpp"

namespace chrono::nets {

std::vector<double> encode_time(TimeOfDay t, TimeEncodingMode mode) {
  if (mode == TimeEncodingMode::Raw) return {t.value};
  return {std::sin(2.0 * M_PI * t.value), std::cos(2.0 * M_PI * t.value)};
}

torch::Tensor encode_times_tensor(const std::vector<double>& times, TimeEncodingMode mode) {
  const int k = time_encoding_channels(mode);
  auto out = torch::empty({static_cast<int64_t>(times.size()), k}, torch::kFloat32);
  auto acc = out.accessor<float, 2>();
  for (size_t i = 0; i < times.size(); ++i) {
    auto enc = encode_time(TimeOfDay::wrapped(times[i]), mode);
    for (int j = 0; j < k; ++j) acc[i][j] = static_cast<float>(enc[j]);
  }
  return out;
}

torch::Tensor LatentContext::tensor() const {
  auto t = torch::empty({static_cast<int64_t>(values.size())}, torch::kFloat32);
  std::copy(values.begin(), values.end(), t.data_ptr<float>());
  return t;
}

LatentContext sample_latent(int d_z, Rng& rng) {
  LatentContext z;
  z.values.resize(d_z);
  for (int i = 0; i < d_z; ++i) z.values[i] = static_cast<float>(rng.normal());
  return z;
}

void ModelConfig::validate() const {
  if (image_size < 16) fail(ErrorCode::InvalidArgument, "image_size must be >= 16");
  if (image_size % total_stride() != 0) {
    fail(ErrorCode::InvalidArgument, "image_size must divide the encoder stride");
  }
  if (base_channels < 1 || disc_base_channels < 1 || translator_channels < 1) {
    fail(ErrorCode::InvalidArgument, "channel widths must be positive");
  }
  if (encoder_stages < 1 || encoder_stages > 5) {
    fail(ErrorCode::InvalidArgument, "encoder_stages must be in [1,5]");
  }
  if (res_blocks < 1) fail(ErrorCode::InvalidArgument, "res_blocks must be >= 1");
  if (d_z < 0) fail(ErrorCode::InvalidArgument, "d_z must be >= 0");
  if (cond_embed_dim < 2) fail(ErrorCode::InvalidArgument, "cond_embed_dim too small");
}

const char* bundle_mode_name(BundleMode mode) {
  switch (mode) {
    case BundleMode::Vanilla: return "vanilla";
    case BundleMode::MultiFrame: return "multiframe";
    case BundleMode::MultiDomain: return "multidomain";
  }
  return "unknown";
}

BundleMode bundle_mode_from_name(const std::string& name) {
  if (name == "vanilla") return BundleMode::Vanilla;
  if (name == "multiframe") return BundleMode::MultiFrame;
  if (name == "multidomain") return BundleMode::MultiDomain;
  fail(ErrorCode::InvalidArgument, "unknown mode: " + name);
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

namespace {

// Conv counts per downsampling stage, following the VGG-16 layout.
constexpr int kStageConvs[5] = {2, 2, 3, 3, 3};

int stage_channels(int base, int stage) { return std::min(base << stage, 512); }

}  // namespace

ToneGeneratorImpl::ToneGeneratorImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  encoder_ = torch::nn::Sequential();
  int in_ch = 3;
  for (int s = 0; s < config_.encoder_stages; ++s) {
    const int out_ch = stage_channels(config_.base_channels, s);
    for (int i = 0; i < kStageConvs[s]; ++i) {
      const std::string tag = "s" + std::to_string(s) + "_" + std::to_string(i);
      encoder_->push_back("conv_" + tag,
                          torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).padding(1)));
      encoder_->push_back("norm_" + tag,
                          torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out_ch).affine(true)));
      encoder_->push_back("relu_" + tag, torch::nn::ReLU());
      in_ch = out_ch;
    }
    encoder_->push_back("pool_s" + std::to_string(s), torch::nn::MaxPool2d(2));
  }
  register_module("encoder", encoder_);

  const int feat_ch = in_ch;
  const int cond_ch = feat_ch + config_.d_z + time_encoding_channels(config_.time_encoding);
  fuse_ = register_module("fuse", torch::nn::Conv2d(torch::nn::Conv2dOptions(cond_ch, feat_ch, 1)));

  // Residual blocks carry the conditioning additively through their skip path,
  // so they stay normalization-free (instance statistics would cancel the
  // broadcast latent/time channels).
  for (int b = 0; b < config_.res_blocks; ++b) {
    torch::nn::Sequential block(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(feat_ch, feat_ch, 3).padding(1)),
        torch::nn::ReLU(),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(feat_ch, feat_ch, 3).padding(1)));
    blocks_.push_back(register_module("block" + std::to_string(b), block));
  }

  decoder_ = torch::nn::Sequential();
  int ch = feat_ch;
  for (int s = config_.encoder_stages - 1; s >= 0; --s) {
    const int out_ch = s > 0 ? stage_channels(config_.base_channels, s - 1) : config_.base_channels;
    decoder_->push_back(torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(ch, out_ch, 4).stride(2).padding(1)));
    decoder_->push_back(torch::nn::ReLU());
    ch = out_ch;
  }
  decoder_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, 3, 3).padding(1)));
  decoder_->push_back(torch::nn::Tanh());
  register_module("decoder", decoder_);
}

torch::Tensor ToneGeneratorImpl::forward(const torch::Tensor& images, const torch::Tensor& time_enc,
                                         const torch::Tensor& latent) {
  if (images.dim() != 4 || images.size(1) != 3) {
    fail(ErrorCode::ShapeError, "generator expects [n,3,H,W] input");
  }
  const int64_t n = images.size(0), h = images.size(2), w = images.size(3);
  const int stride = config_.total_stride();
  if (h % stride != 0 || w % stride != 0) {
    fail(ErrorCode::ShapeError, "input dims must be divisible by " + std::to_string(stride));
  }
  if (time_enc.size(0) != n || latent.size(0) != n) {
    fail(ErrorCode::ShapeError, "conditioning rows must match the batch");
  }
  if (latent.size(1) != config_.d_z) {
    fail(ErrorCode::ShapeError, "latent width must equal d_z");
  }

  auto feat = encoder_->forward(images);
  const int64_t fh = feat.size(2), fw = feat.size(3);
  auto zmap = latent.unsqueeze(2).unsqueeze(3).expand({n, latent.size(1), fh, fw});
  auto tmap = time_enc.unsqueeze(2).unsqueeze(3).expand({n, time_enc.size(1), fh, fw});
  auto x = torch::relu(fuse_->forward(torch::cat({feat, zmap, tmap}, 1)));
  for (auto& block : blocks_) x = x + block->forward(x);
  return decoder_->forward(x);
}

void ToneGeneratorImpl::load_encoder_weights(const std::string& archive_path) {
  TensorArchive archive;
  try {
    archive = TensorArchive::load(archive_path);
  } catch (const Error& e) {
    fail(ErrorCode::WeightsLoad, std::string("cannot read encoder weights: ") + e.what());
  }
  torch::NoGradGuard no_grad;
  for (auto& item : encoder_->named_parameters()) {
    const std::string key = "encoder." + item.key();
    auto it = archive.tensors.find(key);
    if (it == archive.tensors.end()) {
      // Norm affine params are optional in pretrained archives (VGG has none).
      if (item.key().rfind("norm_", 0) == 0) continue;
      fail(ErrorCode::WeightsLoad, "missing tensor in weight archive: " + key);
    }
    if (!it->second.sizes().equals(item.value().sizes())) {
      fail(ErrorCode::WeightsLoad, "shape mismatch for " + key);
    }
    item.value().copy_(it->second.to(torch::kFloat32));
  }
}

// ---------------------------------------------------------------------------
// Set discriminator
// ---------------------------------------------------------------------------

SetDiscriminatorImpl::SetDiscriminatorImpl(const ModelConfig& config) : config_(config) {
  const int c = config_.disc_base_channels;
  encoder_ = torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(3, c, 4).stride(2).padding(1)),
      torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
      torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)),
      torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(2 * c).affine(true)),
      torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
      torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c, 4 * c, 4).stride(2).padding(1)),
      torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(4 * c).affine(true)),
      torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
      torch::nn::AdaptiveAvgPool2d(torch::nn::AdaptiveAvgPool2dOptions(1)),
      torch::nn::Flatten());
  register_module("encoder", encoder_);

  const int feat_dim = 4 * c;
  const int embed = config_.cond_embed_dim;
  uncond_head_ = register_module("uncond_head", torch::nn::Linear(feat_dim, 1));
  frame_head_ = torch::nn::Sequential(
      torch::nn::Linear(feat_dim + time_encoding_channels(config_.time_encoding), embed),
      torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
      torch::nn::Linear(embed, embed));
  register_module("frame_head", frame_head_);
  set_head_ = torch::nn::Sequential(
      torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
      torch::nn::Linear(embed, embed / 2),
      torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
      torch::nn::Linear(embed / 2, 1));
  register_module("set_head", set_head_);
}

torch::Tensor SetDiscriminatorImpl::encode(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) < 8 || images.size(3) < 8) {
    fail(ErrorCode::ShapeError, "set discriminator expects [n,3,>=8,>=8] input");
  }
  return encoder_->forward(images);
}

torch::Tensor SetDiscriminatorImpl::uncond_logits(const torch::Tensor& images) {
  return uncond_head_->forward(encode(images)).squeeze(1);
}

torch::Tensor SetDiscriminatorImpl::uncond_scores(const torch::Tensor& images) {
  return torch::sigmoid(uncond_logits(images));
}

torch::Tensor SetDiscriminatorImpl::frame_embeddings(const torch::Tensor& feats,
                                                     const torch::Tensor& time_enc) {
  if (feats.size(0) != time_enc.size(0)) {
    fail(ErrorCode::ShapeError, "one time encoding required per frame");
  }
  return frame_head_->forward(torch::cat({feats, time_enc}, 1));
}

torch::Tensor SetDiscriminatorImpl::pooled_logits(const torch::Tensor& emb,
                                                  const std::vector<int64_t>& set_sizes) {
  std::vector<torch::Tensor> pooled;
  int64_t offset = 0;
  for (int64_t size : set_sizes) {
    if (size <= 0) fail(ErrorCode::EmptySet, "empty set in packed batch");
    pooled.push_back(std::get<0>(emb.slice(0, offset, offset + size).max(0)));
    offset += size;
  }
  if (offset != emb.size(0)) fail(ErrorCode::ShapeError, "set sizes do not cover the batch");
  return set_head_->forward(torch::stack(pooled)).squeeze(1);
}

torch::Tensor SetDiscriminatorImpl::cond_score(const torch::Tensor& images,
                                               const torch::Tensor& time_enc) {
  if (images.size(0) == 0) fail(ErrorCode::EmptySet, "conditional score of an empty set");
  auto emb = frame_embeddings(encode(images), time_enc);
  return torch::sigmoid(pooled_logits(emb, {images.size(0)})).squeeze();
}

torch::Tensor SetDiscriminatorImpl::cond_logits_packed(const torch::Tensor& images,
                                                       const torch::Tensor& time_enc,
                                                       const std::vector<int64_t>& set_sizes) {
  return pooled_logits(frame_embeddings(encode(images), time_enc), set_sizes);
}

torch::Tensor SetDiscriminatorImpl::cond_scores_packed(const torch::Tensor& images,
                                                       const torch::Tensor& time_enc,
                                                       const std::vector<int64_t>& set_sizes) {
  return torch::sigmoid(cond_logits_packed(images, time_enc, set_sizes));
}

// ---------------------------------------------------------------------------
// Domain translator (U-Net)
// ---------------------------------------------------------------------------

DomainTranslatorImpl::DomainTranslatorImpl(const ModelConfig& config) {
  const int c = config.translator_channels;
  auto lrelu = [] { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)); };
  enc1_ = torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(3, c, 3).padding(1)),
                                lrelu());
  enc2_ = torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)),
      torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(2 * c).affine(true)), lrelu());
  enc3_ = torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c, 4 * c, 4).stride(2).padding(1)),
      torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(4 * c).affine(true)), lrelu());
  mid_ = torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(4 * c, 4 * c, 3).padding(1)), torch::nn::ReLU());
  up3_ = torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(4 * c, 2 * c, 4).stride(2).padding(1));
  dec3_ = torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(4 * c, 2 * c, 3).padding(1)), torch::nn::ReLU());
  up2_ = torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(2 * c, c, 4).stride(2).padding(1));
  dec2_ = torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c, c, 3).padding(1)),
                                torch::nn::ReLU());
  out_ = torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 3, 3).padding(1)),
                               torch::nn::Tanh());
  register_module("enc1", enc1_);
  register_module("enc2", enc2_);
  register_module("enc3", enc3_);
  register_module("mid", mid_);
  register_module("up3", up3_);
  register_module("dec3", dec3_);
  register_module("up2", up2_);
  register_module("dec2", dec2_);
  register_module("out", out_);
}

torch::Tensor DomainTranslatorImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) % 4 != 0 ||
      images.size(3) % 4 != 0) {
    fail(ErrorCode::ShapeError, "translator expects [n,3,H,W] with dims divisible by 4");
  }
  auto e1 = enc1_->forward(images);
  auto e2 = enc2_->forward(e1);
  auto e3 = enc3_->forward(e2);
  auto m = mid_->forward(e3);
  auto d3 = dec3_->forward(torch::cat({torch::relu(up3_->forward(m)), e2}, 1));
  auto d2 = dec2_->forward(torch::cat({torch::relu(up2_->forward(d3)), e1}, 1));
  return out_->forward(d2);
}

// ---------------------------------------------------------------------------
// Frame discriminator
// ---------------------------------------------------------------------------

FrameDiscriminatorImpl::FrameDiscriminatorImpl(const ModelConfig& config) {
  body_ = torch::nn::Sequential();
  int c = config.disc_base_channels;
  body_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(3, c, 4).stride(2).padding(1)));
  body_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
  int spatial = config.image_size / 2;
  while (spatial > 4) {
    const int next = std::min(2 * c, 512);
    body_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c, next, 4).stride(2).padding(1)));
    body_->push_back(torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(next).affine(true)));
    body_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    c = next;
    spatial /= 2;
  }
  body_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 1, spatial)));
  register_module("body", body_);
}

torch::Tensor FrameDiscriminatorImpl::logits(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) {
    fail(ErrorCode::ShapeError, "frame discriminator expects [n,3,H,W]");
  }
  return body_->forward(images).view({images.size(0)});
}

torch::Tensor FrameDiscriminatorImpl::forward(const torch::Tensor& images) {
  return torch::sigmoid(logits(images));
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, torch::Tensor>> ModelBundle::named_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto collect = [&out](const std::string& prefix, const std::shared_ptr<torch::nn::Module>& m) {
    if (!m) return;
    for (auto& item : m->named_parameters()) out.emplace_back(prefix + item.key(), item.value());
  };
  collect("generator.", generator.ptr());
  collect("set_disc.", set_disc.ptr());
  if (translator) collect("translator.", translator.ptr());
  if (frame_disc) collect("frame_disc.", frame_disc.ptr());
  return out;
}

int64_t ModelBundle::parameter_count() const {
  int64_t total = 0;
  for (const auto& [name, p] : named_parameters()) total += p.numel();
  return total;
}

void ModelBundle::set_requires_grad(const std::string& prefix, bool value) const {
  for (auto& [name, p] : named_parameters()) {
    if (name.rfind(prefix, 0) == 0) p.set_requires_grad(value);
  }
}

void ModelBundle::zero_all_grads() const {
  for (auto& [name, p] : named_parameters()) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
}

ModelBundle init_models(BundleMode mode, const ModelConfig& config, uint64_t seed) {
  ModelConfig cfg = config;
  if (mode == BundleMode::Vanilla) cfg.d_z = 0;  // the vanilla ablation has no latent input
  cfg.validate();
  torch::manual_seed(seed);
  ModelBundle bundle;
  bundle.mode = mode;
  bundle.config = cfg;
  bundle.generator = ToneGenerator(cfg);
  bundle.set_disc = SetDiscriminator(cfg);
  if (mode == BundleMode::MultiDomain) {
    bundle.translator = DomainTranslator(cfg);
    bundle.frame_disc = FrameDiscriminator(cfg);
  }
  if (!cfg.pretrained_encoder.empty()) {
    bundle.generator->load_encoder_weights(cfg.pretrained_encoder);
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// ImageGrid-level surface
// ---------------------------------------------------------------------------

torch::Tensor to_tensor(const ImageGrid& image) {
  auto t = torch::empty({image.channels, image.height, image.width}, torch::kFloat32);
  std::copy(image.values.begin(), image.values.end(), t.data_ptr<float>());
  return t;
}

torch::Tensor to_batch(const std::vector<const ImageGrid*>& images) {
  if (images.empty()) fail(ErrorCode::EmptySet, "empty image batch");
  std::vector<torch::Tensor> ts;
  ts.reserve(images.size());
  for (const auto* img : images) {
    if (!img->same_dims(*images.front())) fail(ErrorCode::ShapeError, "batch dims differ");
    ts.push_back(to_tensor(*img));
  }
  return torch::stack(ts);
}

ImageGrid from_tensor(const torch::Tensor& chw) {
  auto t = chw.contiguous().cpu().to(torch::kFloat32);
  if (t.dim() != 3) fail(ErrorCode::ShapeError, "expected [c,h,w] tensor");
  ImageGrid out(static_cast<int>(t.size(1)), static_cast<int>(t.size(2)),
                static_cast<int>(t.size(0)));
  std::copy(t.data_ptr<float>(), t.data_ptr<float>() + t.numel(), out.values.begin());
  return out;
}

ImageGrid generator_forward(ToneGenerator& gen, const ImageGrid& image, TimeOfDay t,
                            const LatentContext& z) {
  torch::NoGradGuard no_grad;
  auto images = to_tensor(image).unsqueeze(0);
  auto time_enc = encode_times_tensor({t.value}, gen->config().time_encoding);
  auto latent = z.tensor().unsqueeze(0);
  return from_tensor(gen->forward(images, time_enc, latent).squeeze(0));
}

std::vector<ImageGrid> generate_frameset(ToneGenerator& gen, const ImageGrid& image,
                                         const std::vector<TimeOfDay>& times,
                                         const LatentContext& z) {
  if (times.empty()) fail(ErrorCode::InvalidArgument, "no timestamps requested");
  torch::NoGradGuard no_grad;
  const auto mode = gen->config().time_encoding;
  auto single = to_tensor(image).unsqueeze(0);
  std::vector<ImageGrid> out;
  out.reserve(times.size());
  constexpr size_t kChunk = 16;  // bound peak memory for long schedules
  for (size_t begin = 0; begin < times.size(); begin += kChunk) {
    const size_t end = std::min(times.size(), begin + kChunk);
    const auto n = static_cast<int64_t>(end - begin);
    std::vector<double> chunk_times;
    for (size_t i = begin; i < end; ++i) chunk_times.push_back(times[i].value);
    auto images = single.expand({n, 3, image.height, image.width});
    auto latent = z.tensor().unsqueeze(0).expand({n, static_cast<int64_t>(z.values.size())});
    auto result = gen->forward(images, encode_times_tensor(chunk_times, mode), latent);
    for (int64_t i = 0; i < n; ++i) out.push_back(from_tensor(result[i]));
  }
  return out;
}

double disc_uncond_score(SetDiscriminator& disc, const ImageGrid& image) {
  torch::NoGradGuard no_grad;
  return disc->uncond_scores(to_tensor(image).unsqueeze(0)).item<double>();
}

double disc_cond_score(SetDiscriminator& disc,
                       const std::vector<std::pair<ImageGrid, TimeOfDay>>& pairs,
                       TimeEncodingMode mode) {
  if (pairs.empty()) fail(ErrorCode::EmptySet, "conditional score of an empty set");
  torch::NoGradGuard no_grad;
  std::vector<const ImageGrid*> images;
  std::vector<double> times;
  for (const auto& [img, t] : pairs) {
    images.push_back(&img);
    times.push_back(t.value);
  }
  return disc->cond_score(to_batch(images), encode_times_tensor(times, mode)).item<double>();
}

ImageGrid translator_forward(DomainTranslator& translator, const ImageGrid& image) {
  torch::NoGradGuard no_grad;
  return from_tensor(translator->forward(to_tensor(image).unsqueeze(0)).squeeze(0));
}

}  // namespace chrono::nets
