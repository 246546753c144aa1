#pragma once

#include <array>
#include <vector>

#include "chrono/image.hpp"

namespace chrono {

/// Per-pixel affine color transform on the low-resolution grid:
/// out = scale * in + offset, stored per channel (CHW like ImageGrid).
/// Kept in double precision so solver optimality is assertable.
struct TransformField {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<double> scale;
  std::vector<double> offset;

  TransformField() = default;
  TransformField(int h, int w, int c = 3)
      : height(h),
        width(w),
        channels(c),
        scale(static_cast<size_t>(c) * h * w, 1.0),
        offset(static_cast<size_t>(c) * h * w, 0.0) {}

  size_t plane_index(int c, int y, int x) const {
    return (static_cast<size_t>(c) * height + y) * width + x;
  }
};

struct UpsampleConfig {
  double beta = 1.0;        // smoothness weight
  double eps_w = 0.01;      // neighbor-weight denominator floor
  double eps_ridge = 1e-4;  // anchoring toward (scale=1, offset=0)
  enum class Solver { CG, Dense } solver = Solver::CG;
  double cg_tol = 1e-6;
  int cg_max_iters = 2000;

  void validate() const;
};

/// Inverse color distance between two neighboring pixel colors (each in
/// [-1,1]^3): 1 / (||cp - cq||_2 + eps_w). Positive and symmetric.
double neighbor_weight(const std::array<double, 3>& c_p, const std::array<double, 3>& c_q,
                       double eps_w);

/// Recovers the per-pixel affine transform mapping input_low onto output_low
/// by minimizing, per channel,
///   sum_p (a_p I_p + b_p - O_p)^2
///   + beta * sum_p sum_{q in N4(p)} w(I_p,I_q) ((a_p-a_q)^2 + (b_p-b_q)^2)
///   + eps_ridge * sum_p ((a_p-1)^2 + b_p^2),
/// with edge weights computed from the full-color input image.
TransformField solve_transform(const ImageGrid& input_low, const ImageGrid& output_low,
                               const UpsampleConfig& config);

/// Bilinearly upsamples the field to the target resolution and applies it:
/// out(p) = clamp(a(p) * in(p) + b(p), -1, 1).
ImageGrid apply_transform(const ImageGrid& input_full, const TransformField& field);

/// Full post-process: area-downsample the input to the guide's grid, solve for
/// the transform, apply it at full resolution.
ImageGrid guided_upsample(const ImageGrid& input_full, const ImageGrid& output_low,
                          const UpsampleConfig& config);

/// Total energy of a candidate field (diagnostics and optimality tests).
double transform_energy(const ImageGrid& input_low, const ImageGrid& output_low,
                        const TransformField& field, const UpsampleConfig& config);

/// Worst per-channel relative L2 residual of the normal equations at the
/// candidate field (the solver's own convergence metric).
double normal_equations_residual(const ImageGrid& input_low, const ImageGrid& output_low,
                                 const TransformField& field, const UpsampleConfig& config);

}  // namespace chrono
