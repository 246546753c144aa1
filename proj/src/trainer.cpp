#include "chrono/trainer.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <thread>

#include "chrono/losses.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace chrono::trainer {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (iterations < 1) fail(ErrorCode::InvalidArgument, "iterations must be >= 1");
  if (batch_size < 1) fail(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (frames_per_example < 1) fail(ErrorCode::InvalidArgument, "frames_per_example must be >= 1");
  if (mode != nets::BundleMode::Vanilla && frames_per_example < 2) {
    fail(ErrorCode::InvalidArgument, "frames_per_example must be >= 2 for set training");
  }
  if (learning_rate < 0 || lambda_rec < 0) {
    fail(ErrorCode::InvalidArgument, "rates and weights must be nonnegative");
  }
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1) {
    fail(ErrorCode::InvalidArgument, "adam betas must lie in [0,1)");
  }
  if (resize_size < image_size) fail(ErrorCode::InvalidArgument, "resize_size < image_size");
  if (checkpoint_every < 1 || log_every < 1) {
    fail(ErrorCode::InvalidArgument, "checkpoint_every/log_every must be >= 1");
  }
  if (negative_pairs < 0) fail(ErrorCode::InvalidArgument, "negative_pairs must be >= 0");
  if (workers < 0 || workers > 1) fail(ErrorCode::InvalidArgument, "workers must be 0 or 1");
  model_config().validate();
  augment_config().validate();
}

nets::ModelConfig TrainConfig::model_config() const {
  nets::ModelConfig m;
  m.image_size = image_size;
  m.base_channels = base_channels;
  m.encoder_stages = encoder_stages;
  m.res_blocks = res_blocks;
  m.d_z = d_z;
  m.time_encoding = time_encoding;
  m.disc_base_channels = disc_base_channels;
  m.cond_embed_dim = cond_embed_dim;
  m.translator_channels = translator_channels;
  m.pretrained_encoder = pretrained_encoder;
  return m;
}

AugmentConfig TrainConfig::augment_config() const {
  AugmentConfig a;
  a.resize_to = resize_size;
  a.crop_to = image_size;
  a.rotation_deg = aug_rotation_deg;
  a.scale_lo = aug_scale_lo;
  a.scale_hi = aug_scale_hi;
  a.shear_deg = aug_shear_deg;
  a.hflip_prob = aug_hflip_prob;
  return a;
}

json TrainConfig::to_json() const {
  return json{{"mode", nets::bundle_mode_name(mode)},
              {"iterations", iterations},
              {"batch_size", batch_size},
              {"frames_per_example", frames_per_example},
              {"learning_rate", learning_rate},
              {"adam_beta1", adam_beta1},
              {"adam_beta2", adam_beta2},
              {"lambda_rec", lambda_rec},
              {"image_size", image_size},
              {"resize_size", resize_size},
              {"seed", seed},
              {"time_encoding", time_encoding == nets::TimeEncodingMode::Raw ? "raw" : "cyclic"},
              {"d_z", d_z},
              {"checkpoint_every", checkpoint_every},
              {"log_every", log_every},
              {"base_channels", base_channels},
              {"encoder_stages", encoder_stages},
              {"res_blocks", res_blocks},
              {"disc_base_channels", disc_base_channels},
              {"cond_embed_dim", cond_embed_dim},
              {"translator_channels", translator_channels},
              {"pretrained_encoder", pretrained_encoder},
              {"literal_paper_loss", literal_paper_loss},
              {"aligned_reconstruction", aligned_reconstruction},
              {"negative_pairs", negative_pairs},
              {"workers", workers},
              {"nonfinite_abort_after", nonfinite_abort_after},
              {"aug_rotation_deg", aug_rotation_deg},
              {"aug_scale_lo", aug_scale_lo},
              {"aug_scale_hi", aug_scale_hi},
              {"aug_shear_deg", aug_shear_deg},
              {"aug_hflip_prob", aug_hflip_prob}};
}

TrainConfig TrainConfig::from_json(const json& j, bool strict) {
  TrainConfig c;
  const json defaults = c.to_json();
  if (strict) {
    for (auto& [key, _] : j.items()) {
      if (!defaults.contains(key)) fail(ErrorCode::InvalidArgument, "unknown config key: " + key);
    }
  }
  try {
    if (j.contains("mode")) c.mode = nets::bundle_mode_from_name(j.at("mode").get<std::string>());
    if (j.contains("iterations")) c.iterations = j.at("iterations").get<int64_t>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("frames_per_example")) c.frames_per_example = j.at("frames_per_example").get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("adam_beta1")) c.adam_beta1 = j.at("adam_beta1").get<double>();
    if (j.contains("adam_beta2")) c.adam_beta2 = j.at("adam_beta2").get<double>();
    if (j.contains("lambda_rec")) c.lambda_rec = j.at("lambda_rec").get<double>();
    if (j.contains("image_size")) c.image_size = j.at("image_size").get<int>();
    if (j.contains("resize_size")) c.resize_size = j.at("resize_size").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("time_encoding")) {
      const auto enc = j.at("time_encoding").get<std::string>();
      if (enc == "raw") {
        c.time_encoding = nets::TimeEncodingMode::Raw;
      } else if (enc == "cyclic") {
        c.time_encoding = nets::TimeEncodingMode::Cyclic;
      } else {
        fail(ErrorCode::InvalidArgument, "time_encoding must be raw|cyclic");
      }
    }
    if (j.contains("d_z")) c.d_z = j.at("d_z").get<int>();
    if (j.contains("checkpoint_every")) c.checkpoint_every = j.at("checkpoint_every").get<int64_t>();
    if (j.contains("log_every")) c.log_every = j.at("log_every").get<int64_t>();
    if (j.contains("base_channels")) c.base_channels = j.at("base_channels").get<int>();
    if (j.contains("encoder_stages")) c.encoder_stages = j.at("encoder_stages").get<int>();
    if (j.contains("res_blocks")) c.res_blocks = j.at("res_blocks").get<int>();
    if (j.contains("disc_base_channels")) c.disc_base_channels = j.at("disc_base_channels").get<int>();
    if (j.contains("cond_embed_dim")) c.cond_embed_dim = j.at("cond_embed_dim").get<int>();
    if (j.contains("translator_channels")) c.translator_channels = j.at("translator_channels").get<int>();
    if (j.contains("pretrained_encoder")) c.pretrained_encoder = j.at("pretrained_encoder").get<std::string>();
    if (j.contains("literal_paper_loss")) c.literal_paper_loss = j.at("literal_paper_loss").get<bool>();
    if (j.contains("aligned_reconstruction")) c.aligned_reconstruction = j.at("aligned_reconstruction").get<bool>();
    if (j.contains("negative_pairs")) c.negative_pairs = j.at("negative_pairs").get<int>();
    if (j.contains("workers")) c.workers = j.at("workers").get<int>();
    if (j.contains("nonfinite_abort_after")) c.nonfinite_abort_after = j.at("nonfinite_abort_after").get<int>();
    if (j.contains("aug_rotation_deg")) c.aug_rotation_deg = j.at("aug_rotation_deg").get<double>();
    if (j.contains("aug_scale_lo")) c.aug_scale_lo = j.at("aug_scale_lo").get<double>();
    if (j.contains("aug_scale_hi")) c.aug_scale_hi = j.at("aug_scale_hi").get<double>();
    if (j.contains("aug_shear_deg")) c.aug_shear_deg = j.at("aug_shear_deg").get<double>();
    if (j.contains("aug_hflip_prob")) c.aug_hflip_prob = j.at("aug_hflip_prob").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("bad config value: ") + e.what());
  }
  return c;
}

std::string TrainConfig::canonical_json() const { return to_json().dump(); }

std::string TrainConfig::config_hash() const {
  // Orchestration-only fields may change across resumes (extending the
  // iteration budget, different logging cadence); everything that shapes the
  // model or the optimization is covered.
  json j = to_json();
  j.erase("iterations");
  j.erase("checkpoint_every");
  j.erase("log_every");
  j.erase("workers");
  return fnv1a64_hex(j.dump());
}

json MetricsRecord::to_json() const {
  json j{{"iteration", iteration}, {"wall_ms", wall_ms}, {"losses", losses}};
  if (skipped_nonfinite) j["skipped_nonfinite"] = true;
  if (!sample_digest.empty()) j["sample_digest"] = sample_digest;
  j["translator_cond_grad_max"] = translator_cond_grad_max;
  return j;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(std::vector<std::pair<std::string, torch::Tensor>> params, double lr, double beta1,
           double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  torch::NoGradGuard no_grad;
  for (const auto& [name, p] : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) {
    if (p.grad().defined()) p.mutable_grad().reset();
  }
}

void Adam::step() {
  torch::NoGradGuard no_grad;
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  const double step_size = lr_ / bc1;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    if (!p.grad().defined()) continue;
    auto grad = p.grad();
    m_[i].mul_(beta1_).add_(grad, 1.0 - beta1_);
    v_[i].mul_(beta2_).addcmul_(grad, grad, 1.0 - beta2_);
    auto denom = (v_[i].sqrt() / std::sqrt(bc2)).add_(eps_);
    p.addcdiv_(m_[i], denom, -step_size);
  }
}

void Adam::export_state(const std::string& prefix, TensorArchive& archive) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    archive.tensors["opt." + prefix + "." + params_[i].first + ".m"] = m_[i];
    archive.tensors["opt." + prefix + "." + params_[i].first + ".v"] = v_[i];
  }
  archive.tensors["opt." + prefix + ".__step"] =
      torch::tensor(static_cast<int64_t>(step_count_), torch::kInt64);
}

void Adam::import_state(const std::string& prefix, const TensorArchive& archive) {
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < params_.size(); ++i) {
    const std::string base = "opt." + prefix + "." + params_[i].first;
    auto mi = archive.tensors.find(base + ".m");
    auto vi = archive.tensors.find(base + ".v");
    if (mi == archive.tensors.end() || vi == archive.tensors.end()) {
      fail(ErrorCode::CorruptCheckpoint, "missing optimizer state for " + base);
    }
    m_[i].copy_(mi->second);
    v_[i].copy_(vi->second);
  }
  auto si = archive.tensors.find("opt." + prefix + ".__step");
  if (si == archive.tensors.end()) fail(ErrorCode::CorruptCheckpoint, "missing optimizer step count");
  step_count_ = si->second.item<int64_t>();
}

// ---------------------------------------------------------------------------
// State setup
// ---------------------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, torch::Tensor>> params_with_prefix(
    const nets::ModelBundle& bundle, const std::string& prefix) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (auto& [name, p] : bundle.named_parameters()) {
    if (name.rfind(prefix, 0) == 0) out.emplace_back(name, p);
  }
  return out;
}

}  // namespace

TrainState make_train_state(const TrainConfig& config) {
  config.validate();
  TrainState state;
  state.config = config;
  state.bundle = nets::init_models(config.mode, config.model_config(), config.seed);
  const double lr = config.learning_rate, b1 = config.adam_beta1, b2 = config.adam_beta2;
  state.opt_generator = Adam(params_with_prefix(state.bundle, "generator."), lr, b1, b2);
  state.opt_set_disc = Adam(params_with_prefix(state.bundle, "set_disc."), lr, b1, b2);
  if (state.bundle.has_translator()) {
    state.opt_translator = Adam(params_with_prefix(state.bundle, "translator."), lr, b1, b2);
    state.opt_frame_disc = Adam(params_with_prefix(state.bundle, "frame_disc."), lr, b1, b2);
  }
  Rng root(config.seed);
  state.data_rng = root.fork(1);
  state.step_rng = root.fork(2);
  return state;
}

// ---------------------------------------------------------------------------
// Step helpers
// ---------------------------------------------------------------------------

namespace {

/// Temporarily disables gradient accumulation for parameter groups.
class FreezeScope {
 public:
  FreezeScope(const nets::ModelBundle& bundle, std::initializer_list<const char*> prefixes) {
    for (auto& [name, p] : bundle.named_parameters()) {
      for (const char* prefix : prefixes) {
        if (name.rfind(prefix, 0) == 0 && p.requires_grad()) {
          frozen_.push_back(p);
          p.set_requires_grad(false);
          break;
        }
      }
    }
  }
  ~FreezeScope() {
    for (auto& p : frozen_) p.set_requires_grad(true);
  }

 private:
  std::vector<torch::Tensor> frozen_;
};

struct PackedSets {
  torch::Tensor images;        // [N,3,h,w]
  torch::Tensor time_enc;      // [N,k]
  std::vector<int64_t> sizes;  // frames per set
  std::vector<double> times;   // per frame
};

PackedSets pack_sets(const std::vector<FrameSet>& sets, nets::TimeEncodingMode mode,
                     bool with_times) {
  if (sets.empty()) fail(ErrorCode::InvalidArgument, "empty batch");
  PackedSets out;
  std::vector<const ImageGrid*> images;
  for (const auto& set : sets) {
    if (set.frames.empty()) fail(ErrorCode::EmptySet, "empty frameset in batch");
    out.sizes.push_back(static_cast<int64_t>(set.frames.size()));
    for (const auto& frame : set.frames) {
      images.push_back(&frame.image);
      out.times.push_back(frame.time.value);
    }
  }
  out.images = nets::to_batch(images);
  if (with_times) out.time_enc = nets::encode_times_tensor(out.times, mode);
  return out;
}

torch::Tensor latent_rows_for_sets(const std::vector<int64_t>& sizes, int d_z, Rng& rng) {
  std::vector<torch::Tensor> rows;
  for (int64_t size : sizes) {
    auto z = nets::sample_latent(d_z, rng).tensor().unsqueeze(0);
    rows.push_back(z.expand({size, d_z}));
  }
  return torch::cat(rows, 0);
}

}  // namespace

GenPlan make_labeled_plan(const std::vector<FrameSet>& sets, const TrainConfig& config, Rng& rng) {
  GenPlan plan;
  std::vector<const ImageGrid*> sources;
  for (const auto& set : sets) {
    const int n = static_cast<int>(set.frames.size());
    plan.sizes.push_back(n);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    if (!config.aligned_reconstruction) {
      for (int i = n; i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_int(i)]);
      }
    }
    for (int j = 0; j < n; ++j) {
      sources.push_back(&set.frames[order[j]].image);
      plan.times.push_back(set.frames[j].time.value);
    }
  }
  plan.src_images = nets::to_batch(sources);
  plan.time_enc = nets::encode_times_tensor(plan.times, config.time_encoding);
  plan.latent_rows = latent_rows_for_sets(plan.sizes, config.d_z, rng);
  return plan;
}

GenPlan make_unlabeled_plan(const std::vector<FrameSet>& sets,
                            const std::vector<double>& empirical_times, const TrainConfig& config,
                            Rng& rng) {
  if (empirical_times.empty()) fail(ErrorCode::EmptyDataset, "no labeled timestamps to sample");
  GenPlan plan;
  std::vector<const ImageGrid*> sources;
  for (const auto& set : sets) {
    const int n = static_cast<int>(set.frames.size());
    plan.sizes.push_back(n);
    for (int j = 0; j < n; ++j) {
      sources.push_back(&set.frames[j].image);
      plan.times.push_back(empirical_times[rng.uniform_int(static_cast<int64_t>(empirical_times.size()))]);
    }
  }
  plan.src_images = nets::to_batch(sources);
  plan.time_enc = nets::encode_times_tensor(plan.times, config.time_encoding);
  plan.latent_rows = latent_rows_for_sets(plan.sizes, config.d_z, rng);
  return plan;
}

namespace {

PackedSets pack_negative_pairs(const std::vector<FrameSet>& sets, const TrainConfig& config,
                               Rng& rng) {
  PackedSets out;
  std::vector<const ImageGrid*> images;
  for (const auto& set : sets) {
    const int n = static_cast<int>(set.frames.size());
    const int64_t max_pairs = static_cast<int64_t>(n) * (n - 1);
    const int k = static_cast<int>(std::min<int64_t>(config.negatives_per_set(), max_pairs));
    auto negatives = make_negative_pairs(set, k, rng);
    out.sizes.push_back(k);
    for (const auto& [image, time] : negatives.pairs) {
      images.push_back(image);
      out.times.push_back(time.value);
    }
  }
  out.images = nets::to_batch(images);
  out.time_enc = nets::encode_times_tensor(out.times, config.time_encoding);
  return out;
}

bool finite_scalar(const torch::Tensor& t) { return std::isfinite(t.item<double>()); }

std::string digest_tensor(const torch::Tensor& t) {
  auto c = t.contiguous().cpu();
  const uint64_t h = fnv1a64(c.data_ptr(), c.numel() * c.element_size());
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

/// Marks a skipped step and enforces the consecutive-failure abort policy.
MetricsRecord skip_nonfinite(TrainState& state, MetricsRecord record, const char* where) {
  record.skipped_nonfinite = true;
  state.consecutive_nonfinite++;
  log_warn(std::string("non-finite loss in ") + where + ", skipping step " +
           std::to_string(state.iteration));
  if (state.consecutive_nonfinite >= state.config.nonfinite_abort_after) {
    fail(ErrorCode::NonfiniteLoss, "aborting after " + std::to_string(state.consecutive_nonfinite) +
                                       " consecutive non-finite steps");
  }
  state.iteration++;
  return record;
}

double translator_grad_max(const nets::ModelBundle& bundle) {
  double worst = 0;
  if (!bundle.translator) return worst;
  for (auto& p : bundle.translator->parameters()) {
    if (p.grad().defined()) worst = std::max(worst, p.grad().abs().max().item<double>());
  }
  return worst;
}

}  // namespace

// ---------------------------------------------------------------------------
// Vanilla step: per-frame conditional GAN, no set pooling, no latent.
// ---------------------------------------------------------------------------

MetricsRecord train_step_vanilla(TrainState& state, const std::vector<TimedFrame>& frames,
                                 const TrainConfig& config, Rng& rng) {
  if (state.bundle.mode != nets::BundleMode::Vanilla || config.mode != nets::BundleMode::Vanilla) {
    fail(ErrorCode::ModeMismatch, "vanilla step on a non-vanilla bundle");
  }
  if (frames.empty()) fail(ErrorCode::InvalidArgument, "empty frame batch");
  const auto start = std::chrono::steady_clock::now();
  MetricsRecord record;
  record.iteration = state.iteration;

  const int64_t n = static_cast<int64_t>(frames.size());
  std::vector<const ImageGrid*> images;
  std::vector<double> real_times;
  for (const auto& f : frames) {
    images.push_back(&f.image);
    real_times.push_back(f.time.value);
  }
  auto real = nets::to_batch(images);
  auto real_enc = nets::encode_times_tensor(real_times, config.time_encoding);

  // Target times for fakes: a permutation of the batch's own timestamps.
  std::vector<double> target_times = real_times;
  for (size_t i = target_times.size(); i > 1; --i) {
    std::swap(target_times[i - 1], target_times[rng.uniform_int(static_cast<int64_t>(i))]);
  }
  auto target_enc = nets::encode_times_tensor(target_times, config.time_encoding);
  auto empty_latent = torch::zeros({n, 0});
  const std::vector<int64_t> singleton_sizes(n, 1);
  const bool lit = config.literal_paper_loss;

  auto& gen = state.bundle.generator;
  auto& disc = state.bundle.set_disc;

  // Discriminator update.
  torch::Tensor fake_detached;
  {
    torch::NoGradGuard no_grad;
    fake_detached = gen->forward(real, target_enc, empty_latent);
  }
  torch::Tensor d_loss;
  {
    FreezeScope freeze(state.bundle, {"generator."});
    auto uncond_real = losses::adv_real_term_logits(disc->uncond_logits(real));
    auto uncond_fake = losses::adv_fake_term_logits(disc->uncond_logits(fake_detached), lit);
    auto pair_real =
        losses::adv_real_term_logits(disc->cond_logits_packed(real, real_enc, singleton_sizes));
    auto pair_fake = losses::adv_fake_term_logits(
        disc->cond_logits_packed(fake_detached, target_enc, singleton_sizes), lit);
    d_loss = -(uncond_real + uncond_fake + pair_real + pair_fake);
    record.losses["d_uncond_real"] = uncond_real.item<double>();
    record.losses["d_uncond_fake"] = uncond_fake.item<double>();
    record.losses["d_pair_real"] = pair_real.item<double>();
    record.losses["d_pair_fake"] = pair_fake.item<double>();
    record.losses["d_total"] = d_loss.item<double>();
    if (!finite_scalar(d_loss)) return skip_nonfinite(state, record, "discriminator");
    state.opt_set_disc.zero_grad();
    d_loss.backward();
    state.opt_set_disc.step();
  }

  // Generator update (non-saturating).
  {
    FreezeScope freeze(state.bundle, {"set_disc."});
    auto fake = gen->forward(real, target_enc, empty_latent);
    auto g_uncond = losses::gen_fake_term_logits(disc->uncond_logits(fake));
    auto g_pair = losses::gen_fake_term_logits(disc->cond_logits_packed(fake, target_enc, singleton_sizes));
    auto g_loss = -(g_uncond + g_pair);
    record.losses["g_uncond"] = -g_uncond.item<double>();
    record.losses["g_pair"] = -g_pair.item<double>();
    record.losses["g_total"] = g_loss.item<double>();
    if (!finite_scalar(g_loss)) return skip_nonfinite(state, record, "generator");
    state.opt_generator.zero_grad();
    g_loss.backward();
    state.opt_generator.step();
    record.sample_digest = digest_tensor(fake[0]);
  }

  state.consecutive_nonfinite = 0;
  state.iteration++;
  record.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return record;
}

// ---------------------------------------------------------------------------
// Multi-frame step: joint conditional training on the labeled domain.
// ---------------------------------------------------------------------------

MetricsRecord train_step_multiframe(TrainState& state, const std::vector<FrameSet>& labeled_batch,
                                    const TrainConfig& config, Rng& rng) {
  if (state.bundle.mode != nets::BundleMode::MultiFrame ||
      config.mode != nets::BundleMode::MultiFrame) {
    fail(ErrorCode::ModeMismatch, "multiframe step on a non-multiframe bundle");
  }
  const auto start = std::chrono::steady_clock::now();
  MetricsRecord record;
  record.iteration = state.iteration;

  auto real = pack_sets(labeled_batch, config.time_encoding, /*with_times=*/true);
  auto negatives = pack_negative_pairs(labeled_batch, config, rng);
  auto plan = make_labeled_plan(labeled_batch, config, rng);
  const bool lit = config.literal_paper_loss;

  auto& gen = state.bundle.generator;
  auto& disc = state.bundle.set_disc;

  // Discriminator update: unconditional terms plus the conditional set loss
  // with real sets, negative pairs, and generated sets.
  torch::Tensor fake_detached;
  {
    torch::NoGradGuard no_grad;
    fake_detached = gen->forward(plan.src_images, plan.time_enc, plan.latent_rows);
  }
  {
    FreezeScope freeze(state.bundle, {"generator."});
    auto uncond_real = losses::adv_real_term_logits(disc->uncond_logits(real.images));
    auto uncond_fake = losses::adv_fake_term_logits(disc->uncond_logits(fake_detached), lit);
    auto cond_real =
        losses::adv_real_term_logits(disc->cond_logits_packed(real.images, real.time_enc, real.sizes));
    auto cond_neg = losses::adv_fake_term_logits(
        disc->cond_logits_packed(negatives.images, negatives.time_enc, negatives.sizes), lit);
    auto cond_fake =
        losses::adv_fake_term_logits(disc->cond_logits_packed(fake_detached, plan.time_enc, plan.sizes), lit);
    auto d_loss = -(uncond_real + uncond_fake + cond_real + cond_neg + cond_fake);

    record.losses["d_uncond_real"] = uncond_real.item<double>();
    record.losses["d_uncond_fake"] = uncond_fake.item<double>();
    record.losses["d_cond_real"] = cond_real.item<double>();
    record.losses["d_cond_negative"] = cond_neg.item<double>();
    record.losses["d_cond_fake"] = cond_fake.item<double>();
    record.losses["d_total"] = d_loss.item<double>();
    if (!finite_scalar(d_loss)) return skip_nonfinite(state, record, "discriminator");
    state.opt_set_disc.zero_grad();
    d_loss.backward();
    state.opt_set_disc.step();
  }

  // Generator update on the same draw (times, sources, shared latents).
  {
    FreezeScope freeze(state.bundle, {"set_disc."});
    auto fake = gen->forward(plan.src_images, plan.time_enc, plan.latent_rows);
    auto g_uncond = losses::gen_fake_term_logits(disc->uncond_logits(fake));
    auto g_cond = losses::gen_fake_term_logits(disc->cond_logits_packed(fake, plan.time_enc, plan.sizes));
    auto g_loss = -(g_uncond + g_cond);
    record.losses["g_uncond"] = -g_uncond.item<double>();
    record.losses["g_cond"] = -g_cond.item<double>();
    record.losses["g_total"] = g_loss.item<double>();
    if (!finite_scalar(g_loss)) return skip_nonfinite(state, record, "generator");
    state.opt_generator.zero_grad();
    g_loss.backward();
    state.opt_generator.step();
    record.sample_digest = digest_tensor(fake[0]);
  }

  state.consecutive_nonfinite = 0;
  state.iteration++;
  record.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return record;
}

// ---------------------------------------------------------------------------
// Multi-domain step (one iteration of the full training algorithm):
//   (1) update both discriminators, generators frozen;
//   (2) update the generator through the frozen translator;
//   (3) update the translator alone, excluded from the conditional loss.
// ---------------------------------------------------------------------------

MetricsRecord train_step_multidomain(TrainState& state, const std::vector<FrameSet>& labeled_batch,
                                     const std::vector<FrameSet>& unlabeled_batch,
                                     const std::vector<double>& empirical_times,
                                     const TrainConfig& config, Rng& rng) {
  if (state.bundle.mode != nets::BundleMode::MultiDomain ||
      config.mode != nets::BundleMode::MultiDomain) {
    fail(ErrorCode::ModeMismatch, "multidomain step on a non-multidomain bundle");
  }
  if (labeled_batch.empty() || unlabeled_batch.empty()) {
    fail(ErrorCode::InvalidArgument, "multidomain step needs both batches");
  }
  const auto start = std::chrono::steady_clock::now();
  MetricsRecord record;
  record.iteration = state.iteration;

  auto real_labeled = pack_sets(labeled_batch, config.time_encoding, /*with_times=*/true);
  auto real_unlabeled = pack_sets(unlabeled_batch, config.time_encoding, /*with_times=*/false);
  auto negatives = pack_negative_pairs(labeled_batch, config, rng);
  auto plan = make_unlabeled_plan(unlabeled_batch, empirical_times, config, rng);
  const bool lit = config.literal_paper_loss;

  auto& gen = state.bundle.generator;
  auto& set_disc = state.bundle.set_disc;
  auto& translator = state.bundle.translator;
  auto& frame_disc = state.bundle.frame_disc;

  // (1) Discriminators. Fakes are computed once without graphs.
  torch::Tensor fake_detached, translated_detached;
  {
    torch::NoGradGuard no_grad;
    fake_detached = gen->forward(plan.src_images, plan.time_enc, plan.latent_rows);
    translated_detached = translator->forward(fake_detached);
  }
  {
    FreezeScope freeze(state.bundle, {"generator.", "translator."});
    // Labeled-domain set discriminator: unconditional on translated fakes,
    // conditional on real sets / negative pairs / translated generated sets.
    auto uncond_real = losses::adv_real_term_logits(set_disc->uncond_logits(real_labeled.images));
    auto uncond_fake = losses::adv_fake_term_logits(set_disc->uncond_logits(translated_detached), lit);
    auto cond_real = losses::adv_real_term_logits(
        set_disc->cond_logits_packed(real_labeled.images, real_labeled.time_enc, real_labeled.sizes));
    auto cond_neg = losses::adv_fake_term_logits(
        set_disc->cond_logits_packed(negatives.images, negatives.time_enc, negatives.sizes), lit);
    auto cond_fake = losses::adv_fake_term_logits(
        set_disc->cond_logits_packed(translated_detached, plan.time_enc, plan.sizes), lit);
    auto da_loss = -(uncond_real + uncond_fake + cond_real + cond_neg + cond_fake);
    record.losses["d_set_uncond_real"] = uncond_real.item<double>();
    record.losses["d_set_uncond_fake"] = uncond_fake.item<double>();
    record.losses["d_set_cond_real"] = cond_real.item<double>();
    record.losses["d_set_cond_negative"] = cond_neg.item<double>();
    record.losses["d_set_cond_fake"] = cond_fake.item<double>();
    record.losses["d_set_total"] = da_loss.item<double>();

    // Unlabeled-domain frame discriminator on raw generator outputs.
    auto frame_real = losses::adv_real_term_logits(frame_disc->logits(real_unlabeled.images));
    auto frame_fake = losses::adv_fake_term_logits(frame_disc->logits(fake_detached), lit);
    auto dt_loss = -(frame_real + frame_fake);
    record.losses["d_frame_real"] = frame_real.item<double>();
    record.losses["d_frame_fake"] = frame_fake.item<double>();
    record.losses["d_frame_total"] = dt_loss.item<double>();

    if (!finite_scalar(da_loss) || !finite_scalar(dt_loss)) {
      return skip_nonfinite(state, record, "discriminators");
    }
    state.opt_set_disc.zero_grad();
    da_loss.backward();
    state.opt_set_disc.step();
    state.opt_frame_disc->zero_grad();
    dt_loss.backward();
    state.opt_frame_disc->step();
  }

  // (2) Generator: unconditional signal from the unlabeled-domain
  // discriminator plus the conditional set signal through the frozen
  // translator. Translator parameters must stay untouched.
  {
    FreezeScope freeze(state.bundle, {"set_disc.", "frame_disc.", "translator."});
    state.opt_translator->zero_grad();  // so the gating measurement sees a clean slate
    auto fake = gen->forward(plan.src_images, plan.time_enc, plan.latent_rows);
    auto translated = translator->forward(fake);
    auto g_frame = losses::gen_fake_term_logits(frame_disc->logits(fake));
    auto g_cond =
        losses::gen_fake_term_logits(set_disc->cond_logits_packed(translated, plan.time_enc, plan.sizes));
    auto g_loss = -(g_frame + g_cond);
    record.losses["g_frame"] = -g_frame.item<double>();
    record.losses["g_cond"] = -g_cond.item<double>();
    record.losses["g_total"] = g_loss.item<double>();
    if (!finite_scalar(g_loss)) return skip_nonfinite(state, record, "generator");
    state.opt_generator.zero_grad();
    g_loss.backward();
    record.translator_cond_grad_max = translator_grad_max(state.bundle);
    state.opt_generator.step();
    record.sample_digest = digest_tensor(fake[0]);
  }

  // (3) Translator: labeled-domain unconditional generator term plus the
  // weighted reconstruction loss toward the (constant) generator output.
  {
    FreezeScope freeze(state.bundle, {"generator.", "set_disc.", "frame_disc."});
    auto source = fake_detached;  // generator output, no graph
    auto translated = translator->forward(source);
    auto ga_adv = losses::gen_fake_term_logits(set_disc->uncond_logits(translated));
    auto ga_rec = losses::rec_l1_t(translated, source);
    auto ga_loss = -ga_adv + config.lambda_rec * ga_rec;
    record.losses["t_adv"] = -ga_adv.item<double>();
    record.losses["t_rec"] = ga_rec.item<double>();
    record.losses["t_total"] = ga_loss.item<double>();
    if (!finite_scalar(ga_loss)) return skip_nonfinite(state, record, "translator");
    state.opt_translator->zero_grad();
    ga_loss.backward();
    state.opt_translator->step();
  }

  state.consecutive_nonfinite = 0;
  state.iteration++;
  record.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return record;
}

// ---------------------------------------------------------------------------
// Full training loop
// ---------------------------------------------------------------------------

namespace {

struct Batch {
  std::vector<FrameSet> labeled;
  std::vector<FrameSet> unlabeled;
  std::vector<TimedFrame> frames;
  std::string data_rng_after;  // rng state once this batch was drawn
};

Batch make_batch(const TrainConfig& config, const DatasetIndex& labeled,
                 const DatasetIndex* unlabeled, Rng& rng, FrameCache& cache) {
  Batch batch;
  const auto augment = config.augment_config();
  switch (config.mode) {
    case nets::BundleMode::Vanilla: {
      const int total = config.batch_size * config.frames_per_example;
      for (int i = 0; i < total; ++i) {
        auto set = sample_frameset(labeled, 1, rng, augment, &cache);
        batch.frames.push_back(std::move(set.frames[0]));
      }
      break;
    }
    case nets::BundleMode::MultiFrame: {
      for (int i = 0; i < config.batch_size; ++i) {
        batch.labeled.push_back(
            sample_frameset(labeled, config.frames_per_example, rng, augment, &cache));
      }
      break;
    }
    case nets::BundleMode::MultiDomain: {
      for (int i = 0; i < config.batch_size; ++i) {
        batch.labeled.push_back(
            sample_frameset(labeled, config.frames_per_example, rng, augment, &cache));
      }
      for (int i = 0; i < config.batch_size; ++i) {
        batch.unlabeled.push_back(
            sample_unlabeled_frameset(*unlabeled, config.frames_per_example, rng, augment, &cache)
                .set);
      }
      break;
    }
  }
  batch.data_rng_after = rng.serialize_state();
  return batch;
}

/// Single-producer bounded prefetch queue (the optional parallel feeder).
/// The feeder owns a private continuation of the data stream; consumers adopt
/// each batch's post-draw rng state, so checkpoints never depend on batches
/// that were prefetched but not yet trained on.
class BatchFeeder {
 public:
  BatchFeeder(const TrainConfig& config, const DatasetIndex& labeled, const DatasetIndex* unlabeled,
              const Rng& data_rng, FrameCache& cache, int64_t batches_needed)
      : config_(config), labeled_(labeled), unlabeled_(unlabeled), rng_(0), cache_(cache),
        remaining_(batches_needed) {
    rng_.restore_state(data_rng.serialize_state());
    thread_ = std::thread([this] { run(); });
  }
  ~BatchFeeder() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

  Batch next() {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [this] { return !queue_.empty() || error_; });
    if (error_) std::rethrow_exception(error_);
    Batch b = std::move(queue_.front());
    queue_.pop_front();
    cv_.notify_all();
    return b;
  }

 private:
  void run() {
    try {
      while (true) {
        {
          std::unique_lock<std::mutex> lock(mutex_);
          cv_.wait(lock, [this] { return stop_ || queue_.size() < kDepth; });
          if (stop_ || remaining_ == 0) return;
          remaining_--;
        }
        Batch b = make_batch(config_, labeled_, unlabeled_, rng_, cache_);
        {
          std::lock_guard<std::mutex> lock(mutex_);
          queue_.push_back(std::move(b));
        }
        cv_.notify_all();
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex_);
      error_ = std::current_exception();
      cv_.notify_all();
    }
  }

  static constexpr size_t kDepth = 4;
  const TrainConfig& config_;
  const DatasetIndex& labeled_;
  const DatasetIndex* unlabeled_;
  Rng rng_;
  FrameCache& cache_;
  int64_t remaining_;
  std::thread thread_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Batch> queue_;
  bool stop_ = false;
  std::exception_ptr error_;
};

MetricsRecord dispatch_step(TrainState& state, Batch& batch, const DatasetIndex& labeled,
                            const TrainConfig& config) {
  switch (config.mode) {
    case nets::BundleMode::Vanilla:
      return train_step_vanilla(state, batch.frames, config, state.step_rng);
    case nets::BundleMode::MultiFrame:
      return train_step_multiframe(state, batch.labeled, config, state.step_rng);
    case nets::BundleMode::MultiDomain:
      return train_step_multidomain(state, batch.labeled, batch.unlabeled, labeled.labeled_times,
                                    config, state.step_rng);
  }
  fail(ErrorCode::InvalidArgument, "unreachable mode");
}

}  // namespace

TrainResult train(const TrainConfig& config, const DatasetIndex& labeled,
                  const DatasetIndex* unlabeled, const std::string& out_dir, bool resume) {
  config.validate();
  if (config.mode == nets::BundleMode::MultiDomain && unlabeled == nullptr) {
    fail(ErrorCode::ModeMismatch, "multidomain training needs an unlabeled dataset");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create output dir: " + ec.message());
  const std::string checkpoint_path = (fs::path(out_dir) / "checkpoint.ckpt").string();

  TrainState state;
  if (resume && fs::exists(checkpoint_path)) {
    check_config_hash(checkpoint_path, config);
    state = load_checkpoint(checkpoint_path);
    state.config = config;  // orchestration fields (iterations etc.) may differ
    log_info("resuming from iteration " + std::to_string(state.iteration));
  } else {
    state = make_train_state(config);
  }

  std::ofstream metrics((fs::path(out_dir) / "metrics.jsonl").string(), std::ios::app);
  if (!metrics) fail(ErrorCode::IoError, "cannot open metrics log");

  FrameCache cache(true);
  const int64_t todo = config.iterations - state.iteration;
  std::optional<BatchFeeder> feeder;
  if (config.workers == 1 && todo > 0) {
    feeder.emplace(config, labeled, unlabeled, state.data_rng, cache, todo);
  }

  while (state.iteration < config.iterations) {
    Batch batch = feeder ? feeder->next()
                         : make_batch(config, labeled, unlabeled, state.data_rng, cache);
    MetricsRecord record = dispatch_step(state, batch, labeled, config);
    // Keep the serialized data stream aligned with consumed batches so resumed
    // runs redraw exactly the batches that were never trained on.
    state.data_rng.restore_state(batch.data_rng_after);

    if (record.iteration % config.log_every == 0 || state.iteration == config.iterations) {
      metrics << record.to_json().dump() << "\n";
      metrics.flush();
      auto it = record.losses.find("g_total");
      log_debug("iter " + std::to_string(record.iteration) + " g_total=" +
                (it != record.losses.end() ? std::to_string(it->second) : "n/a"));
    }
    if (state.iteration % config.checkpoint_every == 0 || state.iteration >= config.iterations) {
      save_checkpoint(state, checkpoint_path);
    }
  }
  save_checkpoint(state, checkpoint_path);
  return TrainResult{checkpoint_path, state.iteration};
}

}  // namespace chrono::trainer
