#include "chrono/image.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace chrono {

namespace {

inline float clamp_unit(float v) { return std::min(1.f, std::max(-1.f, v)); }

ImageGrid grid_from_mat_rgb(const cv::Mat& rgb) {
  ImageGrid out(rgb.rows, rgb.cols, 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const uint8_t* row = rgb.ptr<uint8_t>(y);
    for (int x = 0; x < rgb.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(c, y, x) = static_cast<float>(row[x * 3 + c]) * (2.f / 255.f) - 1.f;
      }
    }
  }
  return out;
}

}  // namespace

Affine2D operator*(const Affine2D& a, const Affine2D& b) {
  Affine2D r;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      r.m[i][j] = a.m[i][0] * b.m[0][j] + a.m[i][1] * b.m[1][j];
    }
    r.m[i][2] = a.m[i][0] * b.m[0][2] + a.m[i][1] * b.m[1][2] + a.m[i][2];
  }
  return r;
}

std::optional<ImageGrid> try_load_image(const std::string& path) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (raw.empty() || raw.depth() != CV_8U) return std::nullopt;
  if (raw.channels() == 1) return std::nullopt;  // grayscale sources are rejected
  cv::Mat rgb;
  if (raw.channels() == 4) {
    cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
  }
  return grid_from_mat_rgb(rgb);
}

ImageGrid load_image(const std::string& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::IoError, "image not found: " + path);
  cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (raw.empty() || raw.depth() != CV_8U) fail(ErrorCode::IoError, "cannot decode image: " + path);
  if (raw.channels() == 1) fail(ErrorCode::DomainError, "single-channel image rejected: " + path);
  cv::Mat rgb;
  if (raw.channels() == 4) {
    cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
  }
  return grid_from_mat_rgb(rgb);
}

std::vector<uint8_t> to_bytes(const ImageGrid& image) {
  std::vector<uint8_t> out(image.size());
  size_t i = 0;
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x, ++i) {
        float v = (clamp_unit(image.at(c, y, x)) + 1.f) * 127.5f;
        out[i] = static_cast<uint8_t>(std::lround(v));
      }
    }
  }
  return out;
}

ImageGrid from_bytes(const uint8_t* data, int height, int width, int channels) {
  ImageGrid out(height, width, channels);
  for (size_t i = 0; i < out.size(); ++i) {
    out.values[i] = static_cast<float>(data[i]) * (2.f / 255.f) - 1.f;
  }
  return out;
}

void save_image(const std::string& path, const ImageGrid& image) {
  if (image.channels != 3) fail(ErrorCode::ShapeError, "save_image expects 3 channels");
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    uint8_t* row = bgr.ptr<uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = (clamp_unit(image.at(c, y, x)) + 1.f) * 127.5f;
        row[x * 3 + (2 - c)] = static_cast<uint8_t>(std::lround(v));
      }
    }
  }
  if (!cv::imwrite(path, bgr)) fail(ErrorCode::IoError, "cannot write image: " + path);
}

void save_float_image(const std::string& path, const ImageGrid& image) {
  cv::Mat mat(image.height, image.width, CV_32FC3);
  for (int y = 0; y < image.height; ++y) {
    float* row = mat.ptr<float>(y);
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) row[x * 3 + (2 - c)] = image.at(c, y, x);
    }
  }
  if (!cv::imwrite(path, mat)) fail(ErrorCode::IoError, "cannot write image: " + path);
}

ImageGrid resize_bilinear(const ImageGrid& src, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) fail(ErrorCode::InvalidArgument, "resize to empty grid");
  ImageGrid out(out_h, out_w, src.channels);
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, src.height - 1);
    int y1c = std::clamp(y0 + 1, 0, src.height - 1);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, src.width - 1);
      int x1c = std::clamp(x0 + 1, 0, src.width - 1);
      for (int c = 0; c < src.channels; ++c) {
        double top = src.at(c, y0c, x0c) * (1 - wx) + src.at(c, y0c, x1c) * wx;
        double bot = src.at(c, y1c, x0c) * (1 - wx) + src.at(c, y1c, x1c) * wx;
        out.at(c, y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

ImageGrid resize_area(const ImageGrid& src, int out_h, int out_w) {
  if (out_h > src.height || out_w > src.width) return resize_bilinear(src, out_h, out_w);
  ImageGrid out(out_h, out_w, src.channels);
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double y_lo = y * sy, y_hi = (y + 1) * sy;
    int iy0 = static_cast<int>(std::floor(y_lo));
    int iy1 = std::min(src.height, static_cast<int>(std::ceil(y_hi)));
    for (int x = 0; x < out_w; ++x) {
      double x_lo = x * sx, x_hi = (x + 1) * sx;
      int ix0 = static_cast<int>(std::floor(x_lo));
      int ix1 = std::min(src.width, static_cast<int>(std::ceil(x_hi)));
      for (int c = 0; c < src.channels; ++c) {
        double acc = 0, area = 0;
        for (int yy = iy0; yy < iy1; ++yy) {
          double hy = std::min<double>(yy + 1, y_hi) - std::max<double>(yy, y_lo);
          for (int xx = ix0; xx < ix1; ++xx) {
            double hx = std::min<double>(xx + 1, x_hi) - std::max<double>(xx, x_lo);
            acc += src.at(c, yy, xx) * hy * hx;
            area += hy * hx;
          }
        }
        out.at(c, y, x) = static_cast<float>(acc / area);
      }
    }
  }
  return out;
}

namespace {

// Reflect index into [0, n) without repeating the border sample (101-style).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

}  // namespace

ImageGrid warp_affine(const ImageGrid& src, const Affine2D& dst_to_src, int out_h, int out_w) {
  ImageGrid out(out_h, out_w, src.channels);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double sx = dst_to_src.m[0][0] * x + dst_to_src.m[0][1] * y + dst_to_src.m[0][2];
      double sy = dst_to_src.m[1][0] * x + dst_to_src.m[1][1] * y + dst_to_src.m[1][2];
      int x0 = static_cast<int>(std::floor(sx));
      int y0 = static_cast<int>(std::floor(sy));
      double wx = sx - x0, wy = sy - y0;
      int x0r = reflect_index(x0, src.width), x1r = reflect_index(x0 + 1, src.width);
      int y0r = reflect_index(y0, src.height), y1r = reflect_index(y0 + 1, src.height);
      for (int c = 0; c < src.channels; ++c) {
        double top = src.at(c, y0r, x0r) * (1 - wx) + src.at(c, y0r, x1r) * wx;
        double bot = src.at(c, y1r, x0r) * (1 - wx) + src.at(c, y1r, x1r) * wx;
        out.at(c, y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

ImageGrid crop(const ImageGrid& src, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > src.height || x0 + w > src.width) {
    fail(ErrorCode::ShapeError, "crop outside image bounds");
  }
  ImageGrid out(h, w, src.channels);
  for (int c = 0; c < src.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = src.at(c, y0 + y, x0 + x);
    }
  }
  return out;
}

ImageGrid hflip(const ImageGrid& src) {
  ImageGrid out(src.height, src.width, src.channels);
  for (int c = 0; c < src.channels; ++c) {
    for (int y = 0; y < src.height; ++y) {
      for (int x = 0; x < src.width; ++x) out.at(c, y, x) = src.at(c, y, src.width - 1 - x);
    }
  }
  return out;
}

double mean_luminance(const ImageGrid& image) {
  double acc = 0;
  for (float v : image.values) acc += (v + 1.0) * 0.5;
  return image.values.empty() ? 0.0 : acc / static_cast<double>(image.values.size());
}

std::vector<float> gradient_magnitude(const ImageGrid& image) {
  const int h = image.height, w = image.width;
  std::vector<float> gray(static_cast<size_t>(h) * w, 0.f);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) gray[y * w + x] += image.at(c, y, x) / image.channels;
    }
  }
  std::vector<float> mag(gray.size(), 0.f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float gx = gray[y * w + std::min(x + 1, w - 1)] - gray[y * w + std::max(x - 1, 0)];
      float gy = gray[std::min(y + 1, h - 1) * w + x] - gray[std::max(y - 1, 0) * w + x];
      mag[y * w + x] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return mag;
}

double pearson_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) fail(ErrorCode::InvalidArgument, "pearson: size mismatch");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double mean_abs_difference(const ImageGrid& a, const ImageGrid& b) {
  if (!a.same_dims(b)) fail(ErrorCode::ShapeError, "mean_abs_difference: dims differ");
  double acc = 0;
  for (size_t i = 0; i < a.values.size(); ++i) acc += std::abs(a.values[i] - b.values[i]);
  return a.values.empty() ? 0.0 : acc / static_cast<double>(a.values.size());
}

}  // namespace chrono
