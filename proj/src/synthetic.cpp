#include <cmath>
#include <filesystem>
#include <fstream>

#include "chrono/dataset.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace chrono {

double tone_curve(double t, double amplitude, double phase) {
  return 0.5 + amplitude * std::sin(2.0 * M_PI * (t - phase));
}

namespace {

// Base scene in [0,1] linear space: smooth gradients plus a few hard-edged
// patches and light texture, so downstream edge statistics are meaningful.
// Values stay <= 1 so tone modulation (max 0.9) never clips.
std::vector<double> make_base_scene(int size, Rng& rng) {
  std::vector<double> base(static_cast<size_t>(3) * size * size, 0.0);
  double fx[3], fy[3], ph[3];
  for (int c = 0; c < 3; ++c) {
    fx[c] = rng.uniform(0.5, 2.0);
    fy[c] = rng.uniform(0.5, 2.0);
    ph[c] = rng.uniform(0.0, 2.0 * M_PI);
  }
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double v = 0.45 + 0.25 * std::sin(2.0 * M_PI * (fx[c] * x + fy[c] * y) / size + ph[c]);
        base[(static_cast<size_t>(c) * size + y) * size + x] = v;
      }
    }
  }
  const int num_patches = 3 + static_cast<int>(rng.uniform_int(3));
  for (int p = 0; p < num_patches; ++p) {
    int pw = 2 + static_cast<int>(rng.uniform_int(std::max(2, size / 2)));
    int phgt = 2 + static_cast<int>(rng.uniform_int(std::max(2, size / 2)));
    int px = static_cast<int>(rng.uniform_int(std::max(1, size - pw)));
    int py = static_cast<int>(rng.uniform_int(std::max(1, size - phgt)));
    double color[3] = {rng.uniform(0.1, 0.95), rng.uniform(0.1, 0.95), rng.uniform(0.1, 0.95)};
    for (int c = 0; c < 3; ++c) {
      for (int y = py; y < std::min(size, py + phgt); ++y) {
        for (int x = px; x < std::min(size, px + pw); ++x) {
          base[(static_cast<size_t>(c) * size + y) * size + x] = color[c];
        }
      }
    }
  }
  for (auto& v : base) {
    v += rng.uniform(-0.03, 0.03);
    v = std::min(1.0, std::max(0.02, v));
  }
  return base;
}

std::string iso_from_seconds(int sec_of_day) {
  char buf[32];
  snprintf(buf, sizeof(buf), "2020-06-15T%02d:%02d:%02dZ", sec_of_day / 3600,
           (sec_of_day / 60) % 60, sec_of_day % 60);
  return std::string(buf);
}

}  // namespace

DatasetIndex generate_synthetic_corpus(const std::string& out_dir, const SyntheticConfig& config,
                                       Rng& rng) {
  if (config.size < 8) fail(ErrorCode::InvalidArgument, "synthetic image size must be >= 8");
  if (config.num_sequences < 1 || config.frames_per_seq < 1) {
    fail(ErrorCode::InvalidArgument, "synthetic corpus must be non-empty");
  }
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "frames", ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + out_dir + ": " + ec.message());

  json manifest = json::array();
  json truth = json::object();
  const bool labeled = config.domain == DomainTag::Labeled;

  for (int s = 0; s < config.num_sequences; ++s) {
    const std::string seq_id = "seq_" + std::to_string(s);
    const double amplitude = rng.uniform(config.amplitude_lo, config.amplitude_hi);
    const double phase = rng.uniform(config.phase_lo, config.phase_hi);
    auto base = make_base_scene(config.size, rng);

    fs::create_directories(fs::path(out_dir) / "frames" / seq_id, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create sequence dir: " + ec.message());

    json frames = json::array();
    std::vector<double> times, curve;
    for (int k = 0; k < config.frames_per_seq; ++k) {
      // Whole-second times so manifest timestamps reproduce them exactly.
      int sec = static_cast<int>(std::lround(86400.0 * k / config.frames_per_seq)) % 86400;
      double t = sec / 86400.0;
      double tone = tone_curve(t, amplitude, phase);

      ImageGrid img(config.size, config.size, 3);
      for (size_t i = 0; i < base.size(); ++i) {
        img.values[i] = static_cast<float>(base[i] * tone * 2.0 - 1.0);
      }
      // Record the tone statistic of the quantized frame, so readers of the
      // PNG reproduce the sidecar exactly.
      auto quantized = to_bytes(img);
      ImageGrid written = from_bytes(quantized.data(), config.size, config.size, 3);
      times.push_back(t);
      curve.push_back(mean_luminance(written));

      char name[32];
      snprintf(name, sizeof(name), "%05d.png", k);
      std::string rel = (fs::path("frames") / seq_id / name).string();
      save_image((fs::path(out_dir) / rel).string(), img);
      frames.push_back({{"path", rel}, {"wall_clock", labeled ? json(iso_from_seconds(sec)) : json()}});
    }
    manifest.push_back({{"sequence_id", seq_id},
                        {"camera_id", "cam_" + std::to_string(s)},
                        {"utc_offset_minutes", 0},
                        {"domain", labeled ? "labeled" : "unlabeled"},
                        {"frames", frames}});
    truth[seq_id] = {{"amplitude", amplitude},
                     {"phase", phase},
                     {"times", times},
                     {"curve_samples", curve}};
  }

  {
    std::ofstream out(fs::path(out_dir) / "manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) fail(ErrorCode::IoError, "cannot write manifest");
  }
  {
    std::ofstream out(fs::path(out_dir) / "truth.json");
    out << truth.dump(2) << "\n";
    if (!out) fail(ErrorCode::IoError, "cannot write truth sidecar");
  }
  return load_manifest((fs::path(out_dir) / "manifest.json").string(), config.domain);
}

std::unordered_map<std::string, SyntheticSequenceTruth> load_synthetic_truth(
    const std::string& out_dir) {
  std::ifstream in(fs::path(out_dir) / "truth.json");
  if (!in) fail(ErrorCode::IoError, "missing truth sidecar in " + out_dir);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, std::string("bad truth sidecar: ") + e.what());
  }
  std::unordered_map<std::string, SyntheticSequenceTruth> out;
  for (auto& [key, val] : doc.items()) {
    SyntheticSequenceTruth t;
    t.amplitude = val.at("amplitude").get<double>();
    t.phase = val.at("phase").get<double>();
    t.times = val.at("times").get<std::vector<double>>();
    t.curve_samples = val.at("curve_samples").get<std::vector<double>>();
    out[key] = std::move(t);
  }
  return out;
}

}  // namespace chrono
