#include "chrono/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace chrono {

TimeOfDay TimeOfDay::wrapped(double v) {
  double w = v - std::floor(v);
  if (w >= 1.0) w = 0.0;  // guard against floor rounding at the boundary
  TimeOfDay t;
  t.value = w;
  return t;
}

void AugmentConfig::validate() const {
  if (crop_to <= 0 || resize_to <= 0) fail(ErrorCode::InvalidArgument, "augment sizes must be positive");
  if (crop_to > resize_to) fail(ErrorCode::InvalidArgument, "crop_to must not exceed resize_to");
  if (hflip_prob < 0.0 || hflip_prob > 1.0) fail(ErrorCode::InvalidArgument, "hflip_prob outside [0,1]");
  if (scale_lo <= 0.0 || scale_hi < scale_lo) fail(ErrorCode::InvalidArgument, "bad scale range");
}

AugmentConfig AugmentConfig::none(int size) {
  AugmentConfig c;
  c.resize_to = size;
  c.crop_to = size;
  c.rotation_deg = 0.0;
  c.scale_lo = 1.0;
  c.scale_hi = 1.0;
  c.shear_deg = 0.0;
  c.hflip_prob = 0.0;
  return c;
}

AugmentDraw sample_augment(const AugmentConfig& config, Rng& rng) {
  config.validate();
  AugmentDraw d;
  d.rotation_deg = rng.uniform(-config.rotation_deg, config.rotation_deg);
  d.scale = rng.uniform(config.scale_lo, config.scale_hi);
  d.shear_deg = rng.uniform(-config.shear_deg, config.shear_deg);
  d.hflip = rng.bernoulli(config.hflip_prob);
  const int slack = config.resize_to - config.crop_to;
  d.crop_x = slack > 0 ? static_cast<int>(rng.uniform_int(slack + 1)) : 0;
  d.crop_y = slack > 0 ? static_cast<int>(rng.uniform_int(slack + 1)) : 0;
  return d;
}

ImageGrid apply_augment(const ImageGrid& raw, const AugmentConfig& config, const AugmentDraw& draw) {
  ImageGrid img = resize_bilinear(raw, config.resize_to, config.resize_to);
  if (draw.hflip) img = hflip(img);

  const double theta = draw.rotation_deg * M_PI / 180.0;
  const double shear = std::tan(draw.shear_deg * M_PI / 180.0);
  // Forward pixel map about the image center: rotate*scale composed with shear,
  // [[a,-b],[b,a]] * [[1,shear],[0,1]].
  const double a = draw.scale * std::cos(theta);
  const double b = draw.scale * std::sin(theta);
  const double fwd[2][2] = {{a, a * shear - b}, {b, b * shear + a}};
  const double det = fwd[0][0] * fwd[1][1] - fwd[0][1] * fwd[1][0];
  if (std::abs(det) < 1e-12) fail(ErrorCode::InvalidArgument, "degenerate augment transform");
  double inv[2][2] = {{fwd[1][1] / det, -fwd[0][1] / det}, {-fwd[1][0] / det, fwd[0][0] / det}};

  const double cx = (config.resize_to - 1) * 0.5;
  Affine2D dst_to_src;
  dst_to_src.m[0][0] = inv[0][0];
  dst_to_src.m[0][1] = inv[0][1];
  dst_to_src.m[0][2] = cx - inv[0][0] * cx - inv[0][1] * cx;
  dst_to_src.m[1][0] = inv[1][0];
  dst_to_src.m[1][1] = inv[1][1];
  dst_to_src.m[1][2] = cx - inv[1][0] * cx - inv[1][1] * cx;
  img = warp_affine(img, dst_to_src, config.resize_to, config.resize_to);

  return crop(img, draw.crop_y, draw.crop_x, config.crop_to, config.crop_to);
}

// ---------------------------------------------------------------------------
// Timestamps
// ---------------------------------------------------------------------------

// Total over any integer offset: the modular arithmetic makes the result
// periodic in whole days, so out-of-range offsets cannot corrupt it. Real
// datasets are held to [-14h, +14h] at manifest load.
TimeOfDay normalize_timestamp(const std::string& wall_clock_utc, int utc_offset_minutes) {
  int year, month, day, hh, mm;
  double ss;
  // Accepts YYYY-MM-DDTHH:MM:SS[.fff][Z]
  int n = sscanf(wall_clock_utc.c_str(), "%d-%d-%dT%d:%d:%lf", &year, &month, &day, &hh, &mm, &ss);
  if (n != 6 || hh < 0 || hh > 23 || mm < 0 || mm > 59 || ss < 0.0 || ss >= 61.0) {
    fail(ErrorCode::InvalidArgument, "unparseable timestamp: " + wall_clock_utc);
  }
  double utc_sec = hh * 3600.0 + mm * 60.0 + ss;
  double local_sec = std::fmod(utc_sec + utc_offset_minutes * 60.0, 86400.0);
  if (local_sec < 0) local_sec += 86400.0;
  return TimeOfDay::wrapped(local_sec / 86400.0);
}

// ---------------------------------------------------------------------------
// Manifest ingestion
// ---------------------------------------------------------------------------

namespace {

enum class AspectCategory { Landscape, Portrait, Square };

AspectCategory aspect_of(int w, int h) {
  if (w == h) return AspectCategory::Square;
  return w > h ? AspectCategory::Landscape : AspectCategory::Portrait;
}

DomainTag parse_domain(const std::string& s) {
  if (s == "labeled") return DomainTag::Labeled;
  if (s == "unlabeled") return DomainTag::Unlabeled;
  fail(ErrorCode::ManifestParse, "unknown domain tag: " + s);
}

}  // namespace

DatasetIndex load_manifest(const std::string& path, DomainTag domain_tag, bool validate_images) {
  if (!fs::exists(path)) fail(ErrorCode::ManifestParse, "manifest not found: " + path);
  json doc;
  try {
    std::ifstream in(path);
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::ManifestParse, std::string("invalid manifest JSON: ") + e.what());
  }
  if (!doc.is_array()) fail(ErrorCode::ManifestParse, "manifest must be a top-level list");

  DatasetIndex index;
  index.root_dir = fs::path(path).parent_path().string();
  std::set<std::string> seen_ids;

  for (const auto& item : doc) {
    SequenceRecord rec;
    try {
      rec.sequence_id = item.at("sequence_id").get<std::string>();
      rec.camera_id = item.at("camera_id").get<std::string>();
      rec.utc_offset_minutes = item.at("utc_offset_minutes").get<int>();
      rec.domain = parse_domain(item.at("domain").get<std::string>());
      for (const auto& f : item.at("frames")) {
        FrameEntry entry;
        entry.image_path = f.at("path").get<std::string>();
        if (f.contains("wall_clock") && !f.at("wall_clock").is_null()) {
          entry.wall_clock = f.at("wall_clock").get<std::string>();
        }
        rec.frames.push_back(std::move(entry));
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::ManifestParse, std::string("bad manifest record: ") + e.what());
    }
    if (rec.domain != domain_tag) continue;
    if (!seen_ids.insert(rec.sequence_id).second) {
      fail(ErrorCode::ManifestParse, "duplicate sequence_id: " + rec.sequence_id);
    }
    if (rec.utc_offset_minutes < -14 * 60 || rec.utc_offset_minutes > 14 * 60) {
      fail(ErrorCode::ManifestParse,
           "utc offset outside [-14h, +14h] for " + rec.sequence_id);
    }

    // Resolve frame paths against the manifest directory.
    for (auto& f : rec.frames) {
      fs::path p(f.image_path);
      if (p.is_relative()) f.image_path = (fs::path(index.root_dir) / p).string();
    }

    std::vector<FrameEntry> kept;
    std::optional<AspectCategory> aspect;
    for (auto& f : rec.frames) {
      if (rec.domain == DomainTag::Labeled && !f.wall_clock) {
        index.stats.dropped_frames++;  // labeled frames require a timestamp
        continue;
      }
      if (validate_images) {
        auto img = try_load_image(f.image_path);
        if (!img) {
          index.stats.dropped_frames++;
          continue;
        }
        f.width = img->width;
        f.height = img->height;
        AspectCategory cat = aspect_of(img->width, img->height);
        if (!aspect) {
          aspect = cat;
        } else if (cat != *aspect) {
          index.stats.dropped_frames++;
          continue;
        }
      }
      kept.push_back(std::move(f));
    }
    rec.frames = std::move(kept);
    if (rec.frames.empty()) {
      index.stats.dropped_sequences++;
      continue;
    }
    index.records.push_back(std::move(rec));
  }

  if (index.records.empty()) fail(ErrorCode::EmptyDataset, "no valid sequences in " + path);

  for (const auto& rec : index.records) {
    index.stats.num_sequences++;
    index.stats.num_frames += static_cast<int64_t>(rec.frames.size());
    if (rec.domain == DomainTag::Labeled) {
      for (const auto& f : rec.frames) {
        index.labeled_times.push_back(normalize_timestamp(*f.wall_clock, rec.utc_offset_minutes).value);
      }
    }
  }
  return index;
}

std::pair<DatasetIndex, DatasetIndex> split_by_camera(const DatasetIndex& index,
                                                      double test_fraction, Rng& rng) {
  if (test_fraction < 0.0 || test_fraction >= 1.0) {
    fail(ErrorCode::InvalidArgument, "test_fraction must be in [0,1)");
  }
  std::set<std::string> camera_set;
  for (const auto& rec : index.records) camera_set.insert(rec.camera_id);
  std::vector<std::string> cameras(camera_set.begin(), camera_set.end());
  // Fisher-Yates on the sorted camera list keeps the split seed-deterministic.
  for (size_t i = cameras.size(); i > 1; --i) {
    std::swap(cameras[i - 1], cameras[rng.uniform_int(static_cast<int64_t>(i))]);
  }
  size_t num_test = static_cast<size_t>(std::floor(test_fraction * cameras.size()));
  if (test_fraction > 0.0 && num_test == 0 && cameras.size() > 1) num_test = 1;
  std::set<std::string> test_cams(cameras.begin(), cameras.begin() + num_test);

  auto build = [&](bool want_test, Split split) {
    DatasetIndex out;
    out.split = split;
    out.root_dir = index.root_dir;
    for (const auto& rec : index.records) {
      if ((test_cams.count(rec.camera_id) > 0) == want_test) out.records.push_back(rec);
    }
    for (const auto& rec : out.records) {
      out.stats.num_sequences++;
      out.stats.num_frames += static_cast<int64_t>(rec.frames.size());
      if (rec.domain == DomainTag::Labeled) {
        for (const auto& f : rec.frames) {
          out.labeled_times.push_back(normalize_timestamp(*f.wall_clock, rec.utc_offset_minutes).value);
        }
      }
    }
    return out;
  };
  return {build(false, Split::Train), build(true, Split::Test)};
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

ImageGrid FrameCache::load(const std::string& path) {
  if (!enabled_) return load_image(path);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(path);
    if (it != cache_.end()) return *it->second;
  }
  auto img = std::make_shared<const ImageGrid>(load_image(path));
  std::lock_guard<std::mutex> lock(mutex_);
  cache_.emplace(path, img);
  return *img;
}

namespace {

std::vector<int> draw_frame_indices(int available, int n, Rng& rng) {
  std::vector<int> indices;
  indices.reserve(n);
  if (available >= n) {
    std::vector<int> pool(available);
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < n; ++i) {
      int j = i + static_cast<int>(rng.uniform_int(available - i));
      std::swap(pool[i], pool[j]);
      indices.push_back(pool[i]);
    }
  } else {
    for (int i = 0; i < n; ++i) indices.push_back(static_cast<int>(rng.uniform_int(available)));
  }
  return indices;
}

FrameDraw assemble_draw(const SequenceRecord& rec, int record_index, const std::vector<int>& indices,
                        const AugmentConfig& augment, Rng& rng, FrameCache* cache, bool with_times) {
  FrameDraw draw;
  draw.record_index = record_index;
  draw.frame_indices = indices;
  draw.augment = sample_augment(augment, rng);
  draw.set.sequence_id = rec.sequence_id;
  FrameCache fallback(false);
  FrameCache* c = cache ? cache : &fallback;
  for (int idx : indices) {
    const FrameEntry& entry = rec.frames[idx];
    TimedFrame frame;
    frame.image = apply_augment(c->load(entry.image_path), augment, draw.augment);
    if (with_times) {
      frame.time = normalize_timestamp(*entry.wall_clock, rec.utc_offset_minutes);
    }
    draw.set.frames.push_back(std::move(frame));
  }
  return draw;
}

}  // namespace

FrameDraw sample_frameset_detailed(const DatasetIndex& index, int n, Rng& rng,
                                   const AugmentConfig& augment, FrameCache* cache) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "frameset size must be >= 1");
  std::vector<int> eligible;
  for (size_t i = 0; i < index.records.size(); ++i) {
    if (index.records[i].domain == DomainTag::Labeled && !index.records[i].frames.empty()) {
      eligible.push_back(static_cast<int>(i));
    }
  }
  if (eligible.empty()) fail(ErrorCode::EmptyDataset, "no labeled sequences to sample from");
  int rec_idx = eligible[rng.uniform_int(static_cast<int64_t>(eligible.size()))];
  const SequenceRecord& rec = index.records[rec_idx];
  auto indices = draw_frame_indices(static_cast<int>(rec.frames.size()), n, rng);
  return assemble_draw(rec, rec_idx, indices, augment, rng, cache, /*with_times=*/true);
}

FrameSet sample_frameset(const DatasetIndex& index, int n, Rng& rng, const AugmentConfig& augment,
                         FrameCache* cache) {
  return sample_frameset_detailed(index, n, rng, augment, cache).set;
}

FrameDraw sample_unlabeled_frameset(const DatasetIndex& index, int n, Rng& rng,
                                    const AugmentConfig& augment, FrameCache* cache) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "frameset size must be >= 1");
  std::vector<int> eligible;
  for (size_t i = 0; i < index.records.size(); ++i) {
    if (!index.records[i].frames.empty()) eligible.push_back(static_cast<int>(i));
  }
  if (eligible.empty()) fail(ErrorCode::EmptyDataset, "no sequences to sample from");
  int rec_idx = eligible[rng.uniform_int(static_cast<int64_t>(eligible.size()))];
  const SequenceRecord& rec = index.records[rec_idx];
  const int len = static_cast<int>(rec.frames.size());
  // Contiguous window; wraps (revisits frames) when the sequence is short.
  int start = static_cast<int>(rng.uniform_int(len));
  std::vector<int> indices;
  for (int i = 0; i < n; ++i) indices.push_back((start + i) % len);
  return assemble_draw(rec, rec_idx, indices, augment, rng, cache, /*with_times=*/false);
}

NegativePairSet make_negative_pairs(const FrameSet& fs, int k, Rng& rng) {
  const int n = static_cast<int>(fs.frames.size());
  if (n < 2) fail(ErrorCode::InsufficientFrames, "negative pairs need at least 2 frames");
  const int64_t total = static_cast<int64_t>(n) * (n - 1);
  if (k < 1 || k > total) fail(ErrorCode::InvalidArgument, "k outside [1, n(n-1)]");

  std::vector<std::pair<int, int>> mismatches;
  mismatches.reserve(total);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) mismatches.emplace_back(i, j);
    }
  }
  for (size_t i = mismatches.size(); i > 1; --i) {
    std::swap(mismatches[i - 1], mismatches[rng.uniform_int(static_cast<int64_t>(i))]);
  }
  NegativePairSet out;
  for (int p = 0; p < k; ++p) {
    auto [i, j] = mismatches[p];
    out.pairs.emplace_back(&fs.frames[i].image, fs.frames[j].time);
    out.index_pairs.emplace_back(i, j);
  }
  return out;
}

TimeOfDay sample_empirical_time(const DatasetIndex& labeled, Rng& rng) {
  if (labeled.labeled_times.empty()) fail(ErrorCode::EmptyDataset, "no labeled timestamps available");
  return TimeOfDay::wrapped(
      labeled.labeled_times[rng.uniform_int(static_cast<int64_t>(labeled.labeled_times.size()))]);
}

}  // namespace chrono
