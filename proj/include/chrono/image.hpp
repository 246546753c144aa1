#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chrono/common.hpp"

namespace chrono {

/// Planar float image, channel-major (CHW). Values live in [-1, 1]; the 8-bit
/// I/O boundary maps [0, 255] linearly onto that range.
struct ImageGrid {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> values;  // channels * height * width

  ImageGrid() = default;
  ImageGrid(int h, int w, int c = 3, float fill = 0.f)
      : height(h), width(w), channels(c), values(static_cast<size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) { return values[(static_cast<size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return values[(static_cast<size_t>(c) * height + y) * width + x];
  }

  size_t size() const { return values.size(); }
  bool same_dims(const ImageGrid& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }
};

/// Row-major 2x3 affine map from destination pixel coords to source coords.
struct Affine2D {
  double m[2][3] = {{1, 0, 0}, {0, 1, 0}};

  static Affine2D identity() { return {}; }
  /// Composition: (a * b)(p) == a(b(p)).
  friend Affine2D operator*(const Affine2D& a, const Affine2D& b);
};

// -- I/O --------------------------------------------------------------------

/// Decodes an 8-bit PNG/JPEG into [-1,1] RGB. Single-channel files are
/// rejected (DOMAIN_ERROR); missing/corrupt files raise IO_ERROR.
ImageGrid load_image(const std::string& path);

/// Validation variant: returns nullopt instead of throwing on unreadable or
/// single-channel images. Decoded dims are reported through *out_h/*out_w.
std::optional<ImageGrid> try_load_image(const std::string& path);

/// Encodes to 8-bit PNG (or JPEG by extension). Values are clamped to [-1,1].
void save_image(const std::string& path, const ImageGrid& image);

/// Writes raw float values (no range mapping) as a 32-bit TIFF; used for
/// debug dumps of solver fields.
void save_float_image(const std::string& path, const ImageGrid& image);

std::vector<uint8_t> to_bytes(const ImageGrid& image);
ImageGrid from_bytes(const uint8_t* data, int height, int width, int channels);

// -- Resampling -------------------------------------------------------------

/// Bilinear resize with pixel-center alignment and clamped borders.
ImageGrid resize_bilinear(const ImageGrid& src, int out_h, int out_w);

/// Area-average resize: exact box integration for downscale, bilinear for
/// upscale. Used to bring full-resolution inputs onto the network grid.
ImageGrid resize_area(const ImageGrid& src, int out_h, int out_w);

/// Samples src at affine-mapped coordinates with bilinear interpolation and
/// reflected borders. `dst_to_src` maps destination pixel coords to source.
ImageGrid warp_affine(const ImageGrid& src, const Affine2D& dst_to_src, int out_h, int out_w);

ImageGrid crop(const ImageGrid& src, int y0, int x0, int h, int w);
ImageGrid hflip(const ImageGrid& src);

// -- Statistics -------------------------------------------------------------

/// Mean of all samples mapped to [0,1]; the tone statistic tracked by the
/// synthetic corpus and the toy learning experiment.
double mean_luminance(const ImageGrid& image);

/// Per-pixel gradient magnitude of the channel-mean image (central
/// differences), flattened row-major.
std::vector<float> gradient_magnitude(const ImageGrid& image);

double pearson_correlation(const std::vector<double>& a, const std::vector<double>& b);

double mean_abs_difference(const ImageGrid& a, const ImageGrid& b);

}  // namespace chrono
