#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "chrono/common.hpp"
#include "chrono/image.hpp"

namespace chrono {

/// Fraction of a 24-hour day in [0, 1).
struct TimeOfDay {
  double value = 0.0;

  TimeOfDay() = default;
  explicit TimeOfDay(double v) : value(v) {
    if (!(v >= 0.0 && v < 1.0)) fail(ErrorCode::DomainError, "time of day outside [0,1)");
  }

  /// Wraps any real-valued day fraction into [0, 1).
  static TimeOfDay wrapped(double v);
};

enum class DomainTag { Labeled, Unlabeled };
enum class Split { Train, Test };

struct FrameEntry {
  std::string image_path;
  std::optional<std::string> wall_clock;  // ISO-8601 UTC; null for unlabeled footage
  int width = 0;
  int height = 0;
};

struct SequenceRecord {
  std::string sequence_id;
  std::string camera_id;
  int utc_offset_minutes = 0;
  DomainTag domain = DomainTag::Labeled;
  std::vector<FrameEntry> frames;
};

struct DatasetStats {
  int64_t num_sequences = 0;
  int64_t num_frames = 0;
  int64_t dropped_frames = 0;
  int64_t dropped_sequences = 0;
};

struct DatasetIndex {
  std::vector<SequenceRecord> records;
  Split split = Split::Train;
  DatasetStats stats;
  std::string root_dir;  // manifest directory; frame paths resolve against it

  /// All normalized timestamps of labeled frames, in record order. This is the
  /// empirical time distribution that conditions generation for unlabeled data.
  std::vector<double> labeled_times;
};

struct TimedFrame {
  ImageGrid image;
  TimeOfDay time;
};

struct FrameSet {
  std::vector<TimedFrame> frames;
  std::string sequence_id;
};

struct NegativePairSet {
  std::vector<std::pair<const ImageGrid*, TimeOfDay>> pairs;  // views into a FrameSet
  std::vector<std::pair<int, int>> index_pairs;               // (image index, time index)
};

struct AugmentConfig {
  int resize_to = 136;
  int crop_to = 128;
  double rotation_deg = 10.0;   // sampled in [-x, x]
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double shear_deg = 10.0;      // sampled in [-x, x]
  double hflip_prob = 0.5;

  void validate() const;
  static AugmentConfig none(int size);
};

/// One concrete draw of the shared geometric augmentation. All frames of a
/// FrameSet are warped with the same draw so the set stays a single scene.
struct AugmentDraw {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double shear_deg = 0.0;
  bool hflip = false;
  int crop_x = 0;
  int crop_y = 0;
};

AugmentDraw sample_augment(const AugmentConfig& config, Rng& rng);
ImageGrid apply_augment(const ImageGrid& raw, const AugmentConfig& config, const AugmentDraw& draw);

// -- Manifest ingestion -------------------------------------------------------

/// Loads a JSON manifest, keeping records matching `domain_tag`. Frames whose
/// images are missing, undecodable, single-channel, or of a different aspect
/// category than the rest of their sequence are dropped and counted in stats.
/// `validate_images=false` skips decoding (trusted manifests / huge corpora).
DatasetIndex load_manifest(const std::string& path, DomainTag domain_tag,
                           bool validate_images = true);

/// Local time-of-day from a UTC wall clock and a fixed UTC offset.
TimeOfDay normalize_timestamp(const std::string& wall_clock_utc, int utc_offset_minutes);

/// Deterministic camera-disjoint split. Every camera's sequences land wholly
/// in train or test; `test_fraction` of cameras (at least one) go to test.
std::pair<DatasetIndex, DatasetIndex> split_by_camera(const DatasetIndex& index,
                                                      double test_fraction, Rng& rng);

// -- Sampling -----------------------------------------------------------------

/// Caches decoded frames; DatasetIndex stays immutable and shareable.
class FrameCache {
 public:
  explicit FrameCache(bool enabled = true) : enabled_(enabled) {}
  ImageGrid load(const std::string& path);

 private:
  bool enabled_;
  std::mutex mutex_;
  std::unordered_map<std::string, std::shared_ptr<const ImageGrid>> cache_;
};

struct FrameDraw {
  FrameSet set;
  std::vector<int> frame_indices;  // indices into the source record's frames
  int record_index = -1;
  AugmentDraw augment;
};

/// Draws n frames from one uniformly chosen sequence (without replacement when
/// the sequence is long enough, with replacement otherwise), normalizes their
/// timestamps and applies one shared augmentation.
FrameDraw sample_frameset_detailed(const DatasetIndex& index, int n, Rng& rng,
                                   const AugmentConfig& augment, FrameCache* cache = nullptr);
FrameSet sample_frameset(const DatasetIndex& index, int n, Rng& rng,
                         const AugmentConfig& augment, FrameCache* cache = nullptr);

/// Unlabeled variant: contiguous frame window, no timestamps (times left 0).
FrameDraw sample_unlabeled_frameset(const DatasetIndex& index, int n, Rng& rng,
                                    const AugmentConfig& augment, FrameCache* cache = nullptr);

/// k distinct mismatched (image_i, time_j) pairs, i != j.
NegativePairSet make_negative_pairs(const FrameSet& fs, int k, Rng& rng);

/// Draws a timestamp from the labeled corpus's empirical distribution.
TimeOfDay sample_empirical_time(const DatasetIndex& labeled, Rng& rng);

// -- Synthetic corpus ---------------------------------------------------------

struct SyntheticConfig {
  int num_sequences = 8;
  int frames_per_seq = 24;
  int size = 32;
  double amplitude_lo = 0.15;
  double amplitude_hi = 0.35;
  double phase_lo = 0.22;   // brightness peaks near t = phase + 0.25
  double phase_hi = 0.28;
  DomainTag domain = DomainTag::Labeled;
};

struct SyntheticSequenceTruth {
  double amplitude = 0.0;
  double phase = 0.0;
  std::vector<double> times;
  std::vector<double> curve_samples;  // measured mean luminance per written frame
};

/// Day-long tone curve used by the synthetic corpus:
/// brightness(t) = 0.5 + A * sin(2*pi*(t - phase)).
double tone_curve(double t, double amplitude, double phase);

/// Writes PNG frames, a manifest (External Interfaces format) and a ground
/// truth sidecar under out_dir, then returns the loaded index.
DatasetIndex generate_synthetic_corpus(const std::string& out_dir, const SyntheticConfig& config,
                                       Rng& rng);

/// Reads the ground-truth sidecar written by generate_synthetic_corpus.
std::unordered_map<std::string, SyntheticSequenceTruth> load_synthetic_truth(
    const std::string& out_dir);

}  // namespace chrono
