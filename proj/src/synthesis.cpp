#include "chrono/synthesis.hpp"

#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace chrono::synthesis {

std::vector<double> make_schedule(double t_start, double t_end, int count) {
  if (count < 1) fail(ErrorCode::InvalidArgument, "frame count must be >= 1");
  const double a = TimeOfDay::wrapped(t_start).value;
  const double b = TimeOfDay::wrapped(t_end).value;
  double span = b - a;
  if (span <= 0.0) span += 1.0;  // cross midnight
  std::vector<double> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    out.push_back(TimeOfDay::wrapped(a + span * k / count).value);
  }
  return out;
}

namespace {

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64_hex(bytes);
}

// Reflect-pads an image up to the next multiple of `stride` on each side.
ImageGrid pad_to_multiple(const ImageGrid& img, int stride, int& pad_h, int& pad_w) {
  pad_h = (stride - img.height % stride) % stride;
  pad_w = (stride - img.width % stride) % stride;
  if (pad_h == 0 && pad_w == 0) return img;
  Affine2D identity;
  return warp_affine(img, identity, img.height + pad_h, img.width + pad_w);
}

}  // namespace

SynthesizedSequence synthesize(const SynthesisRequest& request) {
  auto state = trainer::load_checkpoint(request.checkpoint_path);
  auto& gen = state.bundle.generator;
  const auto& model_cfg = gen->config();

  ImageGrid full = load_image(request.image_path);

  std::vector<double> times = request.timestamps;
  if (times.empty()) {
    times = make_schedule(request.t_start, request.t_end,
                          request.frame_count > 0 ? request.frame_count : 1);
  }
  for (double& t : times) t = TimeOfDay::wrapped(t).value;

  nets::LatentContext z;
  if (request.latent) {
    if (static_cast<int>(request.latent->size()) != model_cfg.d_z) {
      fail(ErrorCode::InvalidArgument, "latent length must equal d_z");
    }
    z.values = *request.latent;
  } else {
    Rng rng(request.latent_seed);
    z = nets::sample_latent(model_cfg.d_z, rng);
  }

  const int network_size = request.network_size < 0 ? model_cfg.image_size : request.network_size;
  std::vector<TimeOfDay> tod;
  tod.reserve(times.size());
  for (double t : times) tod.push_back(TimeOfDay::wrapped(t));

  std::vector<ImageGrid> low_frames;
  if (network_size == 0) {
    // Native resolution: reflect-pad to the stride, generate, crop back.
    int pad_h = 0, pad_w = 0;
    ImageGrid padded = pad_to_multiple(full, model_cfg.total_stride(), pad_h, pad_w);
    low_frames = nets::generate_frameset(gen, padded, tod, z);
    if (pad_h > 0 || pad_w > 0) {
      for (auto& f : low_frames) f = crop(f, 0, 0, full.height, full.width);
    }
  } else {
    ImageGrid low = (full.height == network_size && full.width == network_size)
                        ? full
                        : resize_area(full, network_size, network_size);
    low_frames = nets::generate_frameset(gen, low, tod, z);
  }

  SynthesizedSequence seq;
  seq.timestamps = times;
  seq.latent = z.values;
  seq.checkpoint_hash = file_hash(request.checkpoint_path);
  seq.provenance = json{{"checkpoint", request.checkpoint_path},
                        {"checkpoint_hash", seq.checkpoint_hash},
                        {"image", request.image_path},
                        {"latent_seed", request.latent_seed},
                        {"upsample", request.upsample},
                        {"network_size", network_size},
                        {"mode", nets::bundle_mode_name(state.bundle.mode)},
                        {"config", state.config.to_json()}};

  const bool needs_upsample =
      request.upsample &&
      (low_frames[0].height != full.height || low_frames[0].width != full.width);
  seq.frames.reserve(low_frames.size());
  for (auto& lf : low_frames) {
    seq.frames.push_back(needs_upsample ? guided_upsample(full, lf, request.upsample_config)
                                        : std::move(lf));
  }
  return seq;
}

std::string write_sequence(const SynthesizedSequence& seq, const std::string& out_dir, bool force,
                           bool contact_sheet) {
  if (seq.frames.empty()) fail(ErrorCode::InvalidArgument, "nothing to write");
  const fs::path manifest_path = fs::path(out_dir) / "sequence.json";
  if (fs::exists(manifest_path) && !force) {
    fail(ErrorCode::OutputExists, "output exists (use --force): " + manifest_path.string());
  }
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "frames", ec);
  if (ec) fail(ErrorCode::IoError, "cannot create output dir: " + ec.message());

  json frames = json::array();
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    snprintf(name, sizeof(name), "%05zu.png", i);
    const std::string rel = (fs::path("frames") / name).string();
    save_image((fs::path(out_dir) / rel).string(), seq.frames[i]);
    frames.push_back({{"path", rel}, {"t", seq.timestamps[i]}});
  }
  json manifest{{"frames", frames},
                {"timestamps", seq.timestamps},
                {"latent", seq.latent},
                {"checkpoint_hash", seq.checkpoint_hash},
                {"provenance", seq.provenance}};
  {
    std::ofstream out(manifest_path);
    out << manifest.dump(2) << "\n";
    if (!out) fail(ErrorCode::IoError, "cannot write sequence manifest");
  }

  if (contact_sheet) {
    const auto& first = seq.frames[0];
    ImageGrid sheet(first.height, first.width * static_cast<int>(seq.frames.size()), 3);
    for (size_t i = 0; i < seq.frames.size(); ++i) {
      const auto& f = seq.frames[i];
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < f.height; ++y) {
          for (int x = 0; x < f.width; ++x) {
            sheet.at(c, y, static_cast<int>(i) * first.width + x) = f.at(c, y, x);
          }
        }
      }
    }
    save_image((fs::path(out_dir) / "contact_sheet.png").string(), sheet);
  }
  return manifest_path.string();
}

}  // namespace chrono::synthesis
