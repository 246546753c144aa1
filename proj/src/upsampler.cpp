#include "chrono/upsampler.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace chrono {

void UpsampleConfig::validate() const {
  if (beta < 0 || eps_w < 0 || eps_ridge < 0) {
    fail(ErrorCode::InvalidArgument, "upsample weights must be nonnegative");
  }
  if (cg_tol <= 0) fail(ErrorCode::InvalidArgument, "cg_tol must be positive");
  if (cg_max_iters < 1) fail(ErrorCode::InvalidArgument, "cg_max_iters must be >= 1");
}

double neighbor_weight(const std::array<double, 3>& c_p, const std::array<double, 3>& c_q,
                       double eps_w) {
  double d2 = 0;
  for (int c = 0; c < 3; ++c) {
    double d = c_p[c] - c_q[c];
    d2 += d * d;
  }
  return 1.0 / (std::sqrt(d2) + eps_w);
}

namespace {

// Edge weights of the low-res input's 4-neighborhood graph. right[y*w+x] links
// (y,x)-(y,x+1); down[y*w+x] links (y,x)-(y+1,x).
struct EdgeWeights {
  int h = 0, w = 0;
  std::vector<double> right;
  std::vector<double> down;
};

EdgeWeights compute_edge_weights(const ImageGrid& input_low, double eps_w) {
  const int h = input_low.height, w = input_low.width;
  EdgeWeights e;
  e.h = h;
  e.w = w;
  e.right.assign(static_cast<size_t>(h) * w, 0.0);
  e.down.assign(static_cast<size_t>(h) * w, 0.0);
  auto color_at = [&](int y, int x) {
    return std::array<double, 3>{input_low.at(0, y, x), input_low.at(1, y, x),
                                 input_low.at(2, y, x)};
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) e.right[y * w + x] = neighbor_weight(color_at(y, x), color_at(y, x + 1), eps_w);
      if (y + 1 < h) e.down[y * w + x] = neighbor_weight(color_at(y, x), color_at(y + 1, x), eps_w);
    }
  }
  return e;
}

// One channel's normal equations, unknowns x = [a_0..a_{N-1}, b_0..b_{N-1}]:
//   a row p: I_p (I_p a_p + b_p) + 2 beta sum_q w_pq (a_p - a_q) + ridge a_p = I_p O_p + ridge
//   b row p:      (I_p a_p + b_p) + 2 beta sum_q w_pq (b_p - b_q) + ridge b_p = O_p
struct ChannelSystem {
  int n = 0;
  const EdgeWeights* edges = nullptr;
  std::vector<double> input;  // I_p
  std::vector<double> rhs;    // 2n
  double beta = 0, ridge = 0;

  void apply(const std::vector<double>& x, std::vector<double>& out) const {
    const int h = edges->h, w = edges->w;
    for (int p = 0; p < n; ++p) {
      const double ip = input[p];
      const double data = ip * x[p] + x[n + p];
      out[p] = ip * data + ridge * x[p];
      out[n + p] = data + ridge * x[n + p];
    }
    const double s = 2.0 * beta;
    if (s == 0.0) return;
    for (int y = 0; y < h; ++y) {
      for (int x_ = 0; x_ < w; ++x_) {
        const int p = y * w + x_;
        if (x_ + 1 < w) {
          const double wgt = s * edges->right[p];
          const int q = p + 1;
          const double da = x[p] - x[q], db = x[n + p] - x[n + q];
          out[p] += wgt * da;
          out[q] -= wgt * da;
          out[n + p] += wgt * db;
          out[n + q] -= wgt * db;
        }
        if (y + 1 < h) {
          const double wgt = s * edges->down[p];
          const int q = p + w;
          const double da = x[p] - x[q], db = x[n + p] - x[n + q];
          out[p] += wgt * da;
          out[q] -= wgt * da;
          out[n + p] += wgt * db;
          out[n + q] -= wgt * db;
        }
      }
    }
  }

  std::vector<double> diagonal() const {
    std::vector<double> diag(2 * n, 0.0);
    const int h = edges->h, w = edges->w;
    for (int p = 0; p < n; ++p) {
      diag[p] = input[p] * input[p] + ridge;
      diag[n + p] = 1.0 + ridge;
    }
    const double s = 2.0 * beta;
    for (int y = 0; y < h; ++y) {
      for (int x_ = 0; x_ < w; ++x_) {
        const int p = y * w + x_;
        if (x_ + 1 < w) {
          const double wgt = s * edges->right[p];
          diag[p] += wgt;
          diag[p + 1] += wgt;
          diag[n + p] += wgt;
          diag[n + p + 1] += wgt;
        }
        if (y + 1 < h) {
          const double wgt = s * edges->down[p];
          diag[p] += wgt;
          diag[p + w] += wgt;
          diag[n + p] += wgt;
          diag[n + p + w] += wgt;
        }
      }
    }
    return diag;
  }
};

ChannelSystem build_system(const ImageGrid& input_low, const ImageGrid& output_low, int channel,
                           const EdgeWeights& edges, const UpsampleConfig& config) {
  const int n = input_low.height * input_low.width;
  ChannelSystem sys;
  sys.n = n;
  sys.edges = &edges;
  sys.beta = config.beta;
  sys.ridge = config.eps_ridge;
  sys.input.resize(n);
  sys.rhs.assign(2 * n, 0.0);
  const size_t plane = static_cast<size_t>(channel) * n;
  for (int p = 0; p < n; ++p) {
    const double ip = input_low.values[plane + p];
    const double op = output_low.values[plane + p];
    sys.input[p] = ip;
    sys.rhs[p] = ip * op + config.eps_ridge;
    sys.rhs[n + p] = op;
  }
  return sys;
}

double norm2(const std::vector<double>& v) {
  double acc = 0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

// Jacobi-preconditioned conjugate gradient. The recursive residual drifts, so
// convergence is confirmed against the explicitly recomputed residual (with a
// restart when the recursion stopped early). Returns false when the iteration
// budget runs out before the residual target.
bool solve_cg(const ChannelSystem& sys, std::vector<double>& x, const UpsampleConfig& config) {
  const size_t m = sys.rhs.size();
  std::vector<double> r(m), z(m), p(m), ap(m);
  auto diag = sys.diagonal();
  const double target = config.cg_tol * std::max(1.0, norm2(sys.rhs));
  int budget = config.cg_max_iters;

  for (int restart = 0; restart < 4 && budget > 0; ++restart) {
    sys.apply(x, ap);
    for (size_t i = 0; i < m; ++i) r[i] = sys.rhs[i] - ap[i];
    if (norm2(r) <= target) return true;

    for (size_t i = 0; i < m; ++i) z[i] = r[i] / diag[i];
    p = z;
    double rz = 0;
    for (size_t i = 0; i < m; ++i) rz += r[i] * z[i];

    while (budget-- > 0) {
      sys.apply(p, ap);
      double pap = 0;
      for (size_t i = 0; i < m; ++i) pap += p[i] * ap[i];
      if (pap <= 0) return false;  // loss of positive definiteness (numerical)
      const double alpha = rz / pap;
      for (size_t i = 0; i < m; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * ap[i];
      }
      if (norm2(r) <= target) break;
      for (size_t i = 0; i < m; ++i) z[i] = r[i] / diag[i];
      double rz_next = 0;
      for (size_t i = 0; i < m; ++i) rz_next += r[i] * z[i];
      const double betak = rz_next / rz;
      rz = rz_next;
      for (size_t i = 0; i < m; ++i) p[i] = z[i] + betak * p[i];
    }
  }
  sys.apply(x, ap);
  for (size_t i = 0; i < m; ++i) r[i] = sys.rhs[i] - ap[i];
  return norm2(r) <= target;
}

void solve_dense(const ChannelSystem& sys, std::vector<double>& x) {
  const int m = 2 * sys.n;
  Eigen::MatrixXd mat = Eigen::MatrixXd::Zero(m, m);
  // Materialize the operator column by column; the system is small here.
  std::vector<double> e(m, 0.0), col(m, 0.0);
  for (int j = 0; j < m; ++j) {
    e[j] = 1.0;
    sys.apply(e, col);
    for (int i = 0; i < m; ++i) mat(i, j) = col[i];
    e[j] = 0.0;
  }
  Eigen::VectorXd rhs(m);
  for (int i = 0; i < m; ++i) rhs(i) = sys.rhs[i];
  Eigen::VectorXd sol = mat.ldlt().solve(rhs);
  for (int i = 0; i < m; ++i) x[i] = sol(i);
}

}  // namespace

TransformField solve_transform(const ImageGrid& input_low, const ImageGrid& output_low,
                               const UpsampleConfig& config) {
  config.validate();
  if (!input_low.same_dims(output_low)) {
    fail(ErrorCode::ShapeError, "solve_transform: input/output grids differ");
  }
  if (input_low.channels != 3) fail(ErrorCode::ShapeError, "solve_transform expects 3 channels");
  const int h = input_low.height, w = input_low.width;
  const int n = h * w;
  auto edges = compute_edge_weights(input_low, config.eps_w);

  TransformField field(h, w, 3);
  for (int c = 0; c < 3; ++c) {
    auto sys = build_system(input_low, output_low, c, edges, config);
    std::vector<double> x(2 * n, 0.0);
    for (int p = 0; p < n; ++p) x[p] = 1.0;  // start from the identity transform

    if (config.solver == UpsampleConfig::Solver::Dense) {
      solve_dense(sys, x);
    } else if (!solve_cg(sys, x, config)) {
      if (n < 64 * 64) {
        log_warn("guided upsample: CG hit the iteration budget, solving densely");
        solve_dense(sys, x);
      } else {
        fail(ErrorCode::Nonconvergence, "CG did not reach tolerance within max iterations");
      }
    }
    const size_t plane = static_cast<size_t>(c) * n;
    for (int p = 0; p < n; ++p) {
      field.scale[plane + p] = x[p];
      field.offset[plane + p] = x[n + p];
    }
  }
  return field;
}

namespace {

// Double-precision bilinear plane upsampling, pixel-center aligned like
// resize_bilinear.
std::vector<double> upsample_plane(const double* src, int sh, int sw, int oh, int ow) {
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  const double sy = static_cast<double>(sh) / oh;
  const double sx = static_cast<double>(sw) / ow;
  for (int y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, sh - 1), y1c = std::clamp(y0 + 1, 0, sh - 1);
    for (int x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, sw - 1), x1c = std::clamp(x0 + 1, 0, sw - 1);
      double top = src[y0c * sw + x0c] * (1 - wx) + src[y0c * sw + x1c] * wx;
      double bot = src[y1c * sw + x0c] * (1 - wx) + src[y1c * sw + x1c] * wx;
      out[y * ow + x] = top * (1 - wy) + bot * wy;
    }
  }
  return out;
}

}  // namespace

ImageGrid apply_transform(const ImageGrid& input_full, const TransformField& field) {
  if (input_full.channels != field.channels) {
    fail(ErrorCode::ShapeError, "apply_transform: channel mismatch");
  }
  const int oh = input_full.height, ow = input_full.width;
  const bool same = field.height == oh && field.width == ow;
  const size_t low_n = static_cast<size_t>(field.height) * field.width;

  ImageGrid out(oh, ow, input_full.channels);
  for (int c = 0; c < input_full.channels; ++c) {
    const double* a_low = field.scale.data() + c * low_n;
    const double* b_low = field.offset.data() + c * low_n;
    std::vector<double> a_full, b_full;
    if (!same) {
      a_full = upsample_plane(a_low, field.height, field.width, oh, ow);
      b_full = upsample_plane(b_low, field.height, field.width, oh, ow);
    }
    const double* a = same ? a_low : a_full.data();
    const double* b = same ? b_low : b_full.data();
    const size_t base = static_cast<size_t>(c) * oh * ow;
    for (size_t i = 0; i < static_cast<size_t>(oh) * ow; ++i) {
      double v = a[i] * input_full.values[base + i] + b[i];
      out.values[base + i] = static_cast<float>(std::min(1.0, std::max(-1.0, v)));
    }
  }
  return out;
}

ImageGrid guided_upsample(const ImageGrid& input_full, const ImageGrid& output_low,
                          const UpsampleConfig& config) {
  if (input_full.height < output_low.height || input_full.width < output_low.width) {
    fail(ErrorCode::ShapeError, "guided_upsample: input smaller than guide");
  }
  ImageGrid input_low = (input_full.height == output_low.height && input_full.width == output_low.width)
                            ? input_full
                            : resize_area(input_full, output_low.height, output_low.width);
  TransformField field = solve_transform(input_low, output_low, config);
  return apply_transform(input_full, field);
}

double transform_energy(const ImageGrid& input_low, const ImageGrid& output_low,
                        const TransformField& field, const UpsampleConfig& config) {
  const int h = input_low.height, w = input_low.width, n = h * w;
  auto edges = compute_edge_weights(input_low, config.eps_w);
  double energy = 0;
  for (int c = 0; c < 3; ++c) {
    const size_t plane = static_cast<size_t>(c) * n;
    for (int p = 0; p < n; ++p) {
      const double a = field.scale[plane + p], b = field.offset[plane + p];
      const double r = a * input_low.values[plane + p] + b - output_low.values[plane + p];
      energy += r * r;
      energy += config.eps_ridge * ((a - 1) * (a - 1) + b * b);
    }
    // Double-counted neighborhood sum: each undirected edge contributes twice.
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int p = y * w + x;
        auto edge_term = [&](int q, double wgt) {
          const double da = field.scale[plane + p] - field.scale[plane + q];
          const double db = field.offset[plane + p] - field.offset[plane + q];
          energy += 2.0 * config.beta * wgt * (da * da + db * db);
        };
        if (x + 1 < w) edge_term(p + 1, edges.right[p]);
        if (y + 1 < h) edge_term(p + w, edges.down[p]);
      }
    }
  }
  return energy;
}

double normal_equations_residual(const ImageGrid& input_low, const ImageGrid& output_low,
                                 const TransformField& field, const UpsampleConfig& config) {
  const int n = input_low.height * input_low.width;
  auto edges = compute_edge_weights(input_low, config.eps_w);
  double worst = 0;
  for (int c = 0; c < 3; ++c) {
    auto sys = build_system(input_low, output_low, c, edges, config);
    std::vector<double> x(2 * n), ax(2 * n), r(2 * n);
    const size_t plane = static_cast<size_t>(c) * n;
    for (int p = 0; p < n; ++p) {
      x[p] = field.scale[plane + p];
      x[n + p] = field.offset[plane + p];
    }
    sys.apply(x, ax);
    for (int i = 0; i < 2 * n; ++i) r[i] = ax[i] - sys.rhs[i];
    // Same convergence metric the CG loop uses.
    worst = std::max(worst, norm2(r) / std::max(1.0, norm2(sys.rhs)));
  }
  return worst;
}

}  // namespace chrono
