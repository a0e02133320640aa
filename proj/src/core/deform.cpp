#include "core/deform.hpp"

#include <cmath>

namespace corld {

namespace {

void check_field_shape(const Tensor& t, const Grid2D& g, const char* what) {
  if (t.shape() != std::vector<int>{2, g.h, g.w})
    fail_invalid("deform", std::string(what) + " must be [2," + std::to_string(g.h) + "," +
                               std::to_string(g.w) + "], got " + shape_str(t.shape()));
}

void check_same_grid(const Grid2D& a, const Grid2D& b, const char* op) {
  if (a.h != b.h || a.w != b.w)
    fail_invalid("deform", std::string(op) + ": grid mismatch " + std::to_string(a.h) + "x" +
                               std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                               std::to_string(b.w));
}

// [out 2, in 2, 3, 1] and [2, 2, 1, 3] central-difference kernels, diagonal
// across channels so each velocity channel is differentiated independently.
Tensor central_diff_kernel(bool along_rows, Dtype dt) {
  std::vector<int> shape = along_rows ? std::vector<int>{2, 2, 3, 1} : std::vector<int>{2, 2, 1, 3};
  Tensor k(shape, dt);
  for (int c = 0; c < 2; ++c) {
    int64_t base = (static_cast<int64_t>(c) * 2 + c) * 3;
    k.data()[static_cast<size_t>(base + 0)] = -0.5;
    k.data()[static_cast<size_t>(base + 2)] = 0.5;
  }
  return k;
}

}  // namespace

VelocityField make_velocity(Grid2D grid, Tensor values) {
  validate_grid(grid);
  check_field_shape(values, grid, "velocity");
  return {grid, std::move(values)};
}

DeformationField identity_grid(Grid2D grid, Dtype dt) {
  validate_grid(grid);
  return {grid, Tensor({2, grid.h, grid.w}, dt)};
}

Tensor identity_coords(Grid2D grid, Dtype dt) {
  Tensor c({2, grid.h, grid.w}, dt);
  auto& d = c.data();
  int64_t hw = static_cast<int64_t>(grid.h) * grid.w;
  for (int y = 0; y < grid.h; ++y)
    for (int x = 0; x < grid.w; ++x) {
      d[static_cast<size_t>(y * grid.w + x)] = static_cast<double>(y);
      d[static_cast<size_t>(hw + y * grid.w + x)] = static_cast<double>(x);
    }
  return c;
}

Tensor identity_coords_batched(int batch, Grid2D grid, Dtype dt) {
  Tensor one = identity_coords(grid, dt);
  Tensor c({batch, 2, grid.h, grid.w}, dt);
  for (int b = 0; b < batch; ++b)
    std::copy(one.data().begin(), one.data().end(),
              c.data().begin() + static_cast<int64_t>(b) * one.numel());
  return c;
}

Tensor exp_map_batched(Tape& tape, const Tensor& velocities, Grid2D grid, int steps) {
  validate_grid(grid);
  if (velocities.rank() != 4 || velocities.dim(1) != 2 || velocities.dim(2) != grid.h ||
      velocities.dim(3) != grid.w)
    fail_invalid("deform", "exp_map: velocities must be [B,2,H,W], got " +
                               shape_str(velocities.shape()));
  if (steps < 4 || steps > 10)
    fail_invalid("deform", "exp_map: steps " + std::to_string(steps) + " outside [4, 10]");
  double vmax = max_abs(velocities);
  double scale = std::ldexp(1.0, -steps);  // 2^-steps
  if (vmax * scale >= 0.5)
    fail_invalid("deform", "exp_map: guard violated, max|v| = " + std::to_string(vmax) +
                               " at steps = " + std::to_string(steps) +
                               " gives an initial step >= 0.5 px");

  Tensor id = identity_coords_batched(velocities.dim(0), grid, velocities.dtype());
  Tensor u = tape.scalar_mul(velocities, scale);
  for (int s = 0; s < steps; ++s) {
    Tensor coords = tape.add(id, u);
    Tensor pulled = tape.apply(Op::GridSample, {u, coords});
    u = tape.add(u, pulled);
  }
  return u;
}

DeformationField exp_map(Tape& tape, const VelocityField& v, int steps) {
  check_field_shape(v.values, v.grid, "velocity");
  Tensor batched = tape.reshape(v.values, {1, 2, v.grid.h, v.grid.w});
  Tensor u = exp_map_batched(tape, batched, v.grid, steps);
  return {v.grid, tape.reshape(u, {2, v.grid.h, v.grid.w})};
}

DeformationField compose(Tape& tape, const DeformationField& phi, const DeformationField& psi) {
  check_same_grid(phi.grid, psi.grid, "compose");
  Tensor id = identity_coords(phi.grid, psi.displacement.dtype());
  Tensor coords = tape.add(id, psi.displacement);
  Tensor pulled = tape.apply(Op::GridSample, {phi.displacement, coords});
  return {phi.grid, tape.add(psi.displacement, pulled)};
}

Tensor warp(Tape& tape, const Tensor& image, const DeformationField& phi) {
  if (image.rank() != 3 || image.dim(1) != phi.grid.h || image.dim(2) != phi.grid.w)
    fail_invalid("deform", "warp: image must be [C," + std::to_string(phi.grid.h) + "," +
                               std::to_string(phi.grid.w) + "], got " + shape_str(image.shape()));
  Tensor id = identity_coords(phi.grid, image.dtype());
  Tensor coords = tape.add(id, phi.displacement);
  return tape.apply(Op::GridSample, {image, coords});
}

Tensor warp_batched(Tape& tape, const Tensor& images, const Tensor& displacements, Grid2D grid) {
  if (images.rank() != 4 || images.dim(2) != grid.h || images.dim(3) != grid.w)
    fail_invalid("deform", "warp: images must be [B,C,H,W] on the field grid, got " +
                               shape_str(images.shape()));
  if (displacements.rank() != 4 || displacements.dim(0) != images.dim(0))
    fail_invalid("deform", "warp: displacement batch mismatch");
  Tensor id = identity_coords_batched(images.dim(0), grid, images.dtype());
  Tensor coords = tape.add(id, displacements);
  return tape.apply(Op::GridSample, {images, coords});
}

Tensor spatial_grad_norm_batched(Tape& tape, const Tensor& velocities, Grid2D grid) {
  if (velocities.rank() != 4 || velocities.dim(1) != 2)
    fail_invalid("deform", "spatial_grad_norm: expected [B,2,H,W], got " +
                               shape_str(velocities.shape()));
  Dtype dt = velocities.dtype();
  Attrs dy;
  dy.pad_h = 1;
  dy.pad_mode = Pad::Periodic;
  Attrs dx;
  dx.pad_w = 1;
  dx.pad_mode = Pad::Periodic;
  Tensor gy = tape.apply(Op::Conv2d, {velocities, central_diff_kernel(true, dt)}, dy);
  Tensor gx = tape.apply(Op::Conv2d, {velocities, central_diff_kernel(false, dt)}, dx);
  Tensor m = tape.add(tape.mean(tape.square(gy)), tape.mean(tape.square(gx)));
  (void)grid;
  return tape.scalar_mul(m, 0.5);
}

Tensor spatial_grad_norm(Tape& tape, const VelocityField& v) {
  check_field_shape(v.values, v.grid, "velocity");
  Tensor batched = tape.reshape(v.values, {1, 2, v.grid.h, v.grid.w});
  return spatial_grad_norm_batched(tape, batched, v.grid);
}

Tensor jacobian_det(const DeformationField& phi) {
  validate_grid(phi.grid);
  const int H = phi.grid.h, W = phi.grid.w;
  const auto& u = phi.displacement.data();
  int64_t hw = static_cast<int64_t>(H) * W;
  Tensor det({H, W}, phi.displacement.dtype());
  auto at = [&](int c, int y, int x) {
    return u[static_cast<size_t>(c * hw + wrap_index(y, H) * W + wrap_index(x, W))];
  };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double u0y = 0.5 * (at(0, y + 1, x) - at(0, y - 1, x));
      double u0x = 0.5 * (at(0, y, x + 1) - at(0, y, x - 1));
      double u1y = 0.5 * (at(1, y + 1, x) - at(1, y - 1, x));
      double u1x = 0.5 * (at(1, y, x + 1) - at(1, y, x - 1));
      det.data()[static_cast<size_t>(y * W + x)] =
          (1.0 + u0y) * (1.0 + u1x) - u0x * u1y;
    }
  return det;
}

void periodic_blur(std::vector<double>& values, int channels, int h, int w, double sigma) {
  if (sigma <= 0.0) return;
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double k = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = k;
    ksum += k;
  }
  for (double& k : kernel) k /= ksum;

  int64_t hw = static_cast<int64_t>(h) * w;
  std::vector<double> tmp(static_cast<size_t>(hw));
  for (int c = 0; c < channels; ++c) {
    double* plane = values.data() + static_cast<int64_t>(c) * hw;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i)
          s += kernel[static_cast<size_t>(i + radius)] * plane[wrap_index(y + i, h) * w + x];
        tmp[static_cast<size_t>(y * w + x)] = s;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i)
          s += kernel[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(y * w + wrap_index(x + i, w))];
        plane[y * w + x] = s;
      }
  }
}

VelocityField smooth_random_velocity(Grid2D grid, double amplitude, Rng& rng,
                                     double sigma_kernel, Dtype dt) {
  validate_grid(grid);
  if (amplitude < 0.0) fail_invalid("deform", "negative velocity amplitude");
  Tensor v({2, grid.h, grid.w}, dt);
  if (amplitude == 0.0) return {grid, v};

  for (double& n : v.data()) n = rng.normal();
  periodic_blur(v.data(), 2, grid.h, grid.w, sigma_kernel);

  double m = max_abs(v);
  if (m > 0.0) {
    double s = amplitude / m;
    for (double& x : v.data()) x = round_mode(dt, x * s);
  }
  return {grid, v};
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

double mean_abs(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += std::abs(v);
  return t.numel() ? s / static_cast<double>(t.numel()) : 0.0;
}

}  // namespace corld
