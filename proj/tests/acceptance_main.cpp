// Acceptance suite: runs every gate end to end and prints one PASS/FAIL line
// per criterion. Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "chrono/dataset.hpp"
#include "chrono/losses.hpp"
#include "chrono/nets.hpp"
#include "chrono/synthesis.hpp"
#include "chrono/trainer.hpp"
#include "chrono/upsampler.hpp"
#include "dense_oracle.hpp"

namespace fs = std::filesystem;
using namespace chrono;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void run_criterion(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome outcome;
  try {
    outcome = body();
  } catch (const std::exception& e) {
    outcome.pass = false;
    outcome.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  printf("[%s] criterion %d: %s (%s; %.1fs)\n", outcome.pass ? "PASS" : "FAIL", id, name.c_str(),
         outcome.detail.c_str(), secs);
  fflush(stdout);
  if (!outcome.pass) ++g_failures;
}

std::string workdir() {
  static std::string dir = [] {
    auto d = fs::temp_directory_path() / "chrono_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d.string();
  }();
  return dir;
}

nets::ModelConfig toy_model_config() {
  nets::ModelConfig cfg;
  cfg.image_size = 32;
  cfg.base_channels = 16;
  cfg.encoder_stages = 2;
  cfg.res_blocks = 3;
  cfg.d_z = 16;
  cfg.disc_base_channels = 16;
  cfg.cond_embed_dim = 32;
  cfg.translator_channels = 16;
  return cfg;
}

trainer::TrainConfig toy_train_config(nets::BundleMode mode) {
  trainer::TrainConfig cfg;
  cfg.mode = mode;
  cfg.batch_size = 4;
  cfg.frames_per_example = 8;
  cfg.image_size = 32;
  cfg.resize_size = 36;
  cfg.base_channels = 16;
  cfg.encoder_stages = 2;
  cfg.res_blocks = 3;
  cfg.d_z = 16;
  cfg.disc_base_channels = 16;
  cfg.cond_embed_dim = 32;
  cfg.translator_channels = 16;
  cfg.seed = 20240615;
  cfg.checkpoint_every = 1000;
  cfg.log_every = 25;
  return cfg;
}

ImageGrid random_unit_image(int h, int w, Rng& rng) {
  ImageGrid img(h, w, 3);
  for (auto& v : img.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return img;
}

// Textured scene with hard edges and fine noise: the structure-preservation
// and performance criteria need content that downsampling destroys.
ImageGrid textured_image(int size, Rng& rng) {
  ImageGrid img(size, size, 3, 0.f);
  const int patches = 6 + static_cast<int>(rng.uniform_int(4));
  for (int p = 0; p < patches; ++p) {
    int x0 = static_cast<int>(rng.uniform_int(size * 3 / 4));
    int y0 = static_cast<int>(rng.uniform_int(size * 3 / 4));
    int bw = size / 8 + static_cast<int>(rng.uniform_int(size / 4));
    int bh = size / 8 + static_cast<int>(rng.uniform_int(size / 4));
    float color[3] = {(float)rng.uniform(-0.8, 0.8), (float)rng.uniform(-0.8, 0.8),
                      (float)rng.uniform(-0.8, 0.8)};
    for (int c = 0; c < 3; ++c) {
      for (int y = y0; y < std::min(size, y0 + bh); ++y) {
        for (int x = x0; x < std::min(size, x0 + bw); ++x) img.at(c, y, x) = color[c];
      }
    }
  }
  for (auto& v : img.values) v = std::clamp(v + (float)rng.uniform(-0.08, 0.08), -1.f, 1.f);
  return img;
}

// Shared toy-experiment state produced by criterion 6 and reused by 7 and 10.
struct ToyExperiment {
  std::string corpus_dir;
  DatasetIndex train_index;
  DatasetIndex test_index;
  std::string checkpoint_path;
  bool trained = false;
};

ToyExperiment& toy_experiment() {
  static ToyExperiment exp;
  return exp;
}

void build_toy_corpus(ToyExperiment& exp) {
  if (!exp.corpus_dir.empty()) return;
  exp.corpus_dir = workdir() + "/corpus";
  SyntheticConfig sc;
  sc.num_sequences = 220;  // >= 200 sequences at 32x32
  sc.frames_per_seq = 16;
  sc.size = 32;
  Rng rng(777);
  auto index = generate_synthetic_corpus(exp.corpus_dir, sc, rng);
  Rng split_rng(5);
  std::tie(exp.train_index, exp.test_index) = split_by_camera(index, 0.05, split_rng);
}

std::vector<const SequenceRecord*> held_out_records(const ToyExperiment& exp, size_t count) {
  std::vector<const SequenceRecord*> out;
  for (const auto& rec : exp.test_index.records) {
    if (out.size() >= count) break;
    out.push_back(&rec);
  }
  return out;
}

// Mean luminance of generated frames over 24 uniform times for one input.
std::vector<double> generated_tone_curve(nets::ToneGenerator& gen, const ImageGrid& input, int d_z,
                                         uint64_t z_seed) {
  Rng zr(z_seed);
  auto z = nets::sample_latent(d_z, zr);
  std::vector<TimeOfDay> times;
  for (int k = 0; k < 24; ++k) times.push_back(TimeOfDay::wrapped(k / 24.0));
  auto frames = nets::generate_frameset(gen, input, times, z);
  std::vector<double> lum;
  lum.reserve(frames.size());
  for (const auto& f : frames) lum.push_back(mean_luminance(f));
  return lum;
}

// Circular variance of the mean-color hue angle across 24 generated times.
double hue_variance_across_time(nets::ToneGenerator& gen, const ImageGrid& input, int d_z,
                                uint64_t z_seed) {
  Rng zr(z_seed);
  auto z = nets::sample_latent(d_z, zr);
  std::vector<TimeOfDay> times;
  for (int k = 0; k < 24; ++k) times.push_back(TimeOfDay::wrapped(k / 24.0));
  auto frames = nets::generate_frameset(gen, input, times, z);
  double sx = 0, sy = 0;
  int n = 0;
  for (const auto& f : frames) {
    double mean[3] = {0, 0, 0};
    const size_t plane = static_cast<size_t>(f.height) * f.width;
    for (int c = 0; c < 3; ++c) {
      for (size_t i = 0; i < plane; ++i) mean[c] += (f.values[c * plane + i] + 1.0) * 0.5;
      mean[c] /= static_cast<double>(plane);
    }
    const double r = mean[0], g = mean[1], b = mean[2];
    const double hue = std::atan2(std::sqrt(3.0) * (g - b), 2.0 * r - g - b);
    sx += std::cos(hue);
    sy += std::sin(hue);
    ++n;
  }
  return 1.0 - std::hypot(sx, sy) / n;  // 0 = constant hue, 1 = dispersed
}

}  // namespace

// ---------------------------------------------------------------------------

int main() {
  torch::set_num_threads(2);
  printf("acceptance suite, workdir %s\n", workdir().c_str());

  // 1. Set-discriminator permutation invariance (bit-exact, 100 sets, <1min).
  run_criterion(1, "set-discriminator permutation invariance", [] {
    const auto start = Clock::now();
    auto bundle = nets::init_models(nets::BundleMode::MultiFrame, toy_model_config(), 11);
    Rng rng(13);
    int exact = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
      const int size = 1 + static_cast<int>(rng.uniform_int(16));
      std::vector<std::pair<ImageGrid, TimeOfDay>> pairs;
      for (int i = 0; i < size; ++i) {
        pairs.emplace_back(random_unit_image(32, 32, rng), TimeOfDay::wrapped(rng.uniform()));
      }
      const double base = nets::disc_cond_score(bundle.set_disc, pairs,
                                                bundle.config.time_encoding);
      auto shuffled = pairs;
      for (size_t i = shuffled.size(); i > 1; --i) {
        std::swap(shuffled[i - 1], shuffled[rng.uniform_int(static_cast<int64_t>(i))]);
      }
      const double permuted =
          nets::disc_cond_score(bundle.set_disc, shuffled, bundle.config.time_encoding);
      if (permuted == base) ++exact;
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    Outcome out;
    out.pass = exact == trials && secs < 60.0;
    out.detail = std::to_string(exact) + "/" + std::to_string(trials) + " sets bit-exact";
    return out;
  });

  // 2. Gradient gating over 20 multidomain steps (<5min).
  run_criterion(2, "conditional loss contributes zero gradient to the translator", [] {
    const auto start = Clock::now();
    auto& exp = toy_experiment();
    build_toy_corpus(exp);

    auto unlabeled_dir = workdir() + "/corpus_unlabeled";
    SyntheticConfig sc;
    sc.num_sequences = 12;
    sc.frames_per_seq = 16;
    sc.size = 32;
    sc.domain = DomainTag::Unlabeled;
    Rng crng(778);
    auto unlabeled = generate_synthetic_corpus(unlabeled_dir, sc, crng);

    auto cfg = toy_train_config(nets::BundleMode::MultiDomain);
    auto state = trainer::make_train_state(cfg);
    Rng data(17);
    FrameCache cache;
    double worst = 0;
    for (int step = 0; step < 20; ++step) {
      std::vector<FrameSet> labeled_batch, unlabeled_batch;
      for (int i = 0; i < cfg.batch_size; ++i) {
        labeled_batch.push_back(sample_frameset(exp.train_index, cfg.frames_per_example, data,
                                                cfg.augment_config(), &cache));
        unlabeled_batch.push_back(sample_unlabeled_frameset(unlabeled, cfg.frames_per_example,
                                                            data, cfg.augment_config(), &cache)
                                      .set);
      }
      auto record = trainer::train_step_multidomain(state, labeled_batch, unlabeled_batch,
                                                    exp.train_index.labeled_times, cfg,
                                                    state.step_rng);
      worst = std::max(worst, record.translator_cond_grad_max);
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    Outcome out;
    out.pass = worst == 0.0 && secs < 300.0;
    out.detail = "max |grad| = " + std::to_string(worst) + " over 20 steps";
    return out;
  });

  // 3. Analytic loss values.
  run_criterion(3, "analytic loss values at score 0.5", [] {
    auto uncond = losses::loss_uncond(losses::DatasetDomain::Labeled, {0.5}, {0.5});
    auto cond = losses::loss_cond(0.5, 0.5, 0.5);
    ImageGrid img(8, 8, 3, 0.25f);
    const double rec = losses::loss_rec(img, img);
    const bool pass = std::abs(uncond.value - (-1.3863)) < 1e-4 &&
                      std::abs(cond.value - (-2.0794)) < 1e-4 && rec == 0.0;
    Outcome out;
    out.pass = pass;
    char buf[128];
    snprintf(buf, sizeof(buf), "uncond=%.5f cond=%.5f rec=%g", uncond.value, cond.value, rec);
    out.detail = buf;
    return out;
  });

  // 4. Upsampler oracle equivalence (<2min).
  run_criterion(4, "CG solver matches the dense normal-equations oracle", [] {
    const auto start = Clock::now();
    Rng rng(23);
    const double betas[3] = {0.1, 1.0, 10.0};
    double worst_rel = 0, worst_identity = 0;
    for (int trial = 0; trial < 25; ++trial) {
      UpsampleConfig cfg;
      cfg.beta = betas[trial % 3];
      auto input = random_unit_image(8, 8, rng);
      auto output = random_unit_image(8, 8, rng);
      auto field = solve_transform(input, output, cfg);
      auto oracle = testutil::oracle_solve(input, output, cfg);
      worst_rel = std::max(worst_rel, testutil::field_max_rel_diff(field, oracle));

      auto identity_field = solve_transform(input, input, cfg);
      for (size_t i = 0; i < identity_field.scale.size(); ++i) {
        worst_identity = std::max(worst_identity, std::abs(identity_field.scale[i] - 1.0));
        worst_identity = std::max(worst_identity, std::abs(identity_field.offset[i]));
      }
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    Outcome out;
    out.pass = worst_rel < 1e-5 && worst_identity < 1e-6 && secs < 120.0;
    char buf[128];
    snprintf(buf, sizeof(buf), "max rel err %.2e, identity dev %.2e over 25 grids", worst_rel,
             worst_identity);
    out.detail = buf;
    return out;
  });

  // 5. Structure preservation against naive bilinear upsampling.
  run_criterion(5, "guided upsampling preserves input structure", [] {
    Rng rng(29);
    int wins = 0;
    const int trials = 10;
    for (int trial = 0; trial < trials; ++trial) {
      auto full = textured_image(64, rng);
      auto guide = resize_area(full, 16, 16);
      for (auto& v : guide.values) v = std::clamp(v * 0.6f + 0.25f, -1.f, 1.f);

      UpsampleConfig cfg;
      auto ours = guided_upsample(full, guide, cfg);
      auto naive = resize_bilinear(guide, 64, 64);

      auto gm_full = gradient_magnitude(full);
      auto gm_ours = gradient_magnitude(ours);
      auto gm_naive = gradient_magnitude(naive);
      std::vector<double> a(gm_full.begin(), gm_full.end());
      std::vector<double> b(gm_ours.begin(), gm_ours.end());
      std::vector<double> c(gm_naive.begin(), gm_naive.end());
      if (pearson_correlation(b, a) > pearson_correlation(c, a)) ++wins;
    }
    Outcome out;
    out.pass = wins == trials;
    out.detail = std::to_string(wins) + "/" + std::to_string(trials) +
                 " images favor the guided result";
    return out;
  });

  // 6. Toy learning experiment (multiframe), vanilla ablation reported.
  run_criterion(6, "multiframe training learns the tone curve", [] {
    const auto start = Clock::now();
    auto& exp = toy_experiment();
    build_toy_corpus(exp);

    auto cfg = toy_train_config(nets::BundleMode::MultiFrame);
    cfg.iterations = 2500;  // within the <=5000 iteration budget
    auto result = trainer::train(cfg, exp.train_index, nullptr, workdir() + "/run_multiframe");
    exp.checkpoint_path = result.checkpoint_path;
    exp.trained = true;
    const double train_secs = std::chrono::duration<double>(Clock::now() - start).count();

    auto state = trainer::load_checkpoint(exp.checkpoint_path);
    auto truth = load_synthetic_truth(exp.corpus_dir);
    double min_corr = 1.0, mean_corr = 0.0, mf_hue = 0.0;
    auto records = held_out_records(exp, 10);
    for (const auto* rec : records) {
      const auto& t = truth.at(rec->sequence_id);
      auto input = load_image(rec->frames[rec->frames.size() / 2].image_path);
      auto lum = generated_tone_curve(state.bundle.generator, input, state.bundle.config.d_z, 99);
      std::vector<double> gt;
      for (int k = 0; k < 24; ++k) gt.push_back(tone_curve(k / 24.0, t.amplitude, t.phase));
      const double corr = pearson_correlation(lum, gt);
      min_corr = std::min(min_corr, corr);
      mean_corr += corr / records.size();
      mf_hue += hue_variance_across_time(state.bundle.generator, input, state.bundle.config.d_z,
                                         99) /
                records.size();
    }

    // Vanilla ablation under the identical budget; diagnostic only.
    auto vcfg = toy_train_config(nets::BundleMode::Vanilla);
    vcfg.iterations = cfg.iterations;
    auto vresult = trainer::train(vcfg, exp.train_index, nullptr, workdir() + "/run_vanilla");
    auto vstate = trainer::load_checkpoint(vresult.checkpoint_path);
    double vanilla_hue = 0.0;
    for (const auto* rec : records) {
      auto input = load_image(rec->frames[rec->frames.size() / 2].image_path);
      vanilla_hue += hue_variance_across_time(vstate.bundle.generator, input, 0, 99) /
                     records.size();
    }

    const double total_secs = std::chrono::duration<double>(Clock::now() - start).count();
    Outcome out;
    out.pass = min_corr >= 0.8 && train_secs < 1800.0;
    char buf[256];
    snprintf(buf, sizeof(buf),
             "tone-curve corr min=%.3f mean=%.3f over 10 held-out images; %d iters in %.0fs; "
             "hue-variance diagnostic: multiframe=%.4f vanilla=%.4f (reported, not gated)",
             min_corr, mean_corr, (int)cfg.iterations, train_secs, mf_hue, vanilla_hue);
    out.detail = buf;
    (void)total_secs;
    return out;
  });

  // 7. Temporal continuity on the trained toy model.
  run_criterion(7, "frame differences grow with the time step", [] {
    auto& exp = toy_experiment();
    if (!exp.trained) return Outcome{false, "criterion 6 model unavailable"};
    auto state = trainer::load_checkpoint(exp.checkpoint_path);
    auto& gen = state.bundle.generator;

    int monotone = 0;
    auto records = held_out_records(exp, 10);
    for (const auto* rec : records) {
      auto input = load_image(rec->frames[rec->frames.size() / 2].image_path);
      Rng zr(99);
      auto z = nets::sample_latent(state.bundle.config.d_z, zr);
      const double deltas[3] = {1.0 / 240, 1.0 / 24, 1.0 / 4};
      double dist[3] = {0, 0, 0};
      for (int b = 0; b < 8; ++b) {
        const double t = b / 8.0;
        auto base = nets::generator_forward(gen, input, TimeOfDay::wrapped(t), z);
        for (int d = 0; d < 3; ++d) {
          auto shifted =
              nets::generator_forward(gen, input, TimeOfDay::wrapped(t + deltas[d]), z);
          dist[d] += mean_abs_difference(base, shifted) / 8.0;
        }
      }
      if (dist[0] <= dist[1] && dist[1] <= dist[2]) ++monotone;
    }

    // Latent-sharing diagnostic (reported, not gated): per-frame fresh latents
    // should raise frame-to-frame tone jitter relative to one shared latent.
    double shared_jitter = 0, fresh_jitter = 0;
    {
      auto input = load_image(records[0]->frames[records[0]->frames.size() / 2].image_path);
      Rng zr(99);
      auto z = nets::sample_latent(state.bundle.config.d_z, zr);
      std::vector<TimeOfDay> times;
      for (int k = 0; k < 12; ++k) times.push_back(TimeOfDay::wrapped(k / 12.0));
      auto shared = nets::generate_frameset(gen, input, times, z);
      std::vector<ImageGrid> fresh;
      Rng fz(123);
      for (const auto& t : times) {
        fresh.push_back(nets::generator_forward(gen, input, t,
                                                nets::sample_latent(state.bundle.config.d_z, fz)));
      }
      for (size_t i = 1; i < times.size(); ++i) {
        shared_jitter += std::abs(mean_luminance(shared[i]) - mean_luminance(shared[i - 1]));
        fresh_jitter += std::abs(mean_luminance(fresh[i]) - mean_luminance(fresh[i - 1]));
      }
    }

    Outcome out;
    out.pass = monotone >= 9;
    char buf[192];
    snprintf(buf, sizeof(buf),
             "%d/10 held-out images monotone over {1/240,1/24,1/4}; tone jitter shared-z %.4f vs "
             "per-frame-z %.4f (reported)",
             monotone, shared_jitter, fresh_jitter);
    out.detail = buf;
    return out;
  });

  // 8. Determinism of the first 100 iterations (serial profile).
  run_criterion(8, "identical seeds reproduce the loss sequence", [] {
    auto& exp = toy_experiment();
    build_toy_corpus(exp);
    auto cfg = toy_train_config(nets::BundleMode::MultiFrame);
    cfg.workers = 0;  // serial profile

    auto run_once = [&] {
      auto state = trainer::make_train_state(cfg);
      Rng data(cfg.seed + 1000);
      FrameCache cache;
      std::vector<double> losses;
      for (int i = 0; i < 100; ++i) {
        std::vector<FrameSet> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
          batch.push_back(sample_frameset(exp.train_index, cfg.frames_per_example, data,
                                          cfg.augment_config(), &cache));
        }
        auto record = trainer::train_step_multiframe(state, batch, cfg, state.step_rng);
        losses.push_back(record.losses.at("d_total"));
        losses.push_back(record.losses.at("g_total"));
      }
      return losses;
    };
    auto a = run_once();
    auto b = run_once();
    double worst = 0;
    bool finite = true;
    for (size_t i = 0; i < a.size(); ++i) {
      worst = std::max(worst, std::abs(a[i] - b[i]));
      finite = finite && std::isfinite(a[i]) && std::isfinite(b[i]);
    }
    Outcome out;
    out.pass = worst <= 1e-6 && finite;
    char buf[96];
    snprintf(buf, sizeof(buf), "max |loss delta| = %.2e over 100 iterations, all losses finite",
             worst);
    out.detail = buf;
    return out;
  });

  // 9. Performance budgets (single-threaded upsample, CPU inference).
  run_criterion(9, "guided upsampling and low-res inference meet the time budgets", [] {
    Rng rng(31);
    auto full = textured_image(512, rng);
    auto guide = resize_area(full, 128, 128);
    for (auto& v : guide.values) v = std::clamp(v * 0.7f + 0.2f, -1.f, 1.f);

    const int saved_threads = torch::get_num_threads();
    torch::set_num_threads(1);
    const auto t0 = Clock::now();
    auto result = guided_upsample(full, guide, UpsampleConfig{});
    const double upsample_secs = std::chrono::duration<double>(Clock::now() - t0).count();
    torch::set_num_threads(saved_threads);
    (void)result;

    // Full-scale generator profile (paper defaults) for one 128x128 frame.
    nets::ModelConfig full_cfg;  // defaults: base 64, 6 res blocks, d_z 64
    auto bundle = nets::init_models(nets::BundleMode::MultiFrame, full_cfg, 3);
    Rng zrng(5);
    auto z = nets::sample_latent(full_cfg.d_z, zrng);
    auto frame = random_unit_image(128, 128, rng);
    auto warm = nets::generator_forward(bundle.generator, frame, TimeOfDay(0.25), z);
    (void)warm;
    const auto t1 = Clock::now();
    auto out_frame = nets::generator_forward(bundle.generator, frame, TimeOfDay(0.5), z);
    const double infer_secs = std::chrono::duration<double>(Clock::now() - t1).count();
    (void)out_frame;

    Outcome out;
    out.pass = upsample_secs <= 5.0 && infer_secs <= 4.0;
    char buf[128];
    snprintf(buf, sizeof(buf), "512->128 guided upsample %.2fs (budget 5s); 128px frame %.2fs "
             "(budget 4s)", upsample_secs, infer_secs);
    out.detail = buf;
    return out;
  });

  // 10. Checkpoint roundtrip and resume continuity.
  run_criterion(10, "checkpoints roundtrip bytes and resume seamlessly", [] {
    auto& exp = toy_experiment();
    build_toy_corpus(exp);

    // Byte-identical parameter payloads across save -> load -> re-save.
    auto cfg = toy_train_config(nets::BundleMode::MultiFrame);
    cfg.iterations = 60;
    cfg.log_every = 1;
    cfg.checkpoint_every = 1000;
    auto dir_a = workdir() + "/resume_straight";
    auto result_a = trainer::train(cfg, exp.train_index, nullptr, dir_a);

    auto reloaded = trainer::load_checkpoint(result_a.checkpoint_path);
    const std::string resaved = workdir() + "/resaved.ckpt";
    trainer::save_checkpoint(reloaded, resaved);
    auto arch_a = TensorArchive::load(result_a.checkpoint_path);
    auto arch_b = TensorArchive::load(resaved);
    bool payloads_equal = arch_a.tensors.size() == arch_b.tensors.size();
    for (const auto& [name, tensor] : arch_a.tensors) {
      auto it = arch_b.tensors.find(name);
      if (it == arch_b.tensors.end() || !tensor.equal(it->second)) {
        payloads_equal = false;
        break;
      }
    }

    // Resume continuity: straight 60 iterations vs 30 + resume to 60.
    auto read_losses = [](const std::string& dir) {
      std::ifstream in(dir + "/metrics.jsonl");
      std::vector<std::pair<int64_t, double>> out;
      std::string line;
      while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        out.emplace_back(j.at("iteration").get<int64_t>(),
                         j.at("losses").at("g_total").get<double>());
      }
      return out;
    };
    auto dir_b = workdir() + "/resume_split";
    auto cfg_half = cfg;
    cfg_half.iterations = 30;
    trainer::train(cfg_half, exp.train_index, nullptr, dir_b);
    trainer::train(cfg, exp.train_index, nullptr, dir_b, /*resume=*/true);

    auto straight = read_losses(dir_a);
    auto split = read_losses(dir_b);
    bool resume_ok = straight.size() == split.size() && !straight.empty();
    // Step-to-step variance of the straight run's loss curve.
    double var = 0;
    for (size_t i = 1; i < straight.size(); ++i) {
      const double d = straight[i].second - straight[i - 1].second;
      var += d * d;
    }
    var /= std::max<size_t>(1, straight.size() - 1);
    const double step_sd = std::sqrt(var);
    double discontinuity = 0;
    if (resume_ok) {
      for (size_t i = 0; i < straight.size(); ++i) {
        if (straight[i].first != split[i].first) {
          resume_ok = false;
          break;
        }
        if (straight[i].first > 30) {
          discontinuity = std::max(discontinuity,
                                   std::abs(straight[i].second - split[i].second));
        }
      }
    }
    Outcome out;
    out.pass = payloads_equal && resume_ok && discontinuity <= 10.0 * step_sd;
    char buf[160];
    snprintf(buf, sizeof(buf),
             "payloads %s; post-resume max deviation %.2e vs 10x step sd %.2e",
             payloads_equal ? "byte-identical" : "DIFFER", discontinuity, 10.0 * step_sd);
    out.detail = buf;
    return out;
  });

  printf("%d/%d criteria passed\n", 10 - g_failures, 10);
  return g_failures;
}
