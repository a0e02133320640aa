#pragma once

// Stationary-velocity-field engine on the 2D torus: identity grid,
// exponential map by scaling and squaring, composition, warping, smoothness
// and Jacobian diagnostics. Fields use channel 0 for row (y) displacement
// and channel 1 for column (x) displacement, in pixel units, with periodic
// wrap everywhere.

#include "core/tape.hpp"

namespace corld {

struct Grid2D {
  int h = 0, w = 0;
};

inline void validate_grid(const Grid2D& g) {
  if (g.h < 4 || g.w < 4)
    fail_invalid("deform", "grid must be at least 4x4, got " + std::to_string(g.h) + "x" +
                               std::to_string(g.w));
}

struct VelocityField {
  Grid2D grid;
  Tensor values;  // [2,H,W], pixels per unit time
};

struct DeformationField {
  Grid2D grid;
  Tensor displacement;  // [2,H,W]; phi(x) = x + displacement(x), wrapped onto the torus
};

VelocityField make_velocity(Grid2D grid, Tensor values);
DeformationField identity_grid(Grid2D grid, Dtype dt = Dtype::F64);

// Absolute sampling coordinates (identity + displacement) as a constant
// tensor: [2,H,W] or, for the batched overloads, [B,2,H,W].
Tensor identity_coords(Grid2D grid, Dtype dt);
Tensor identity_coords_batched(int batch, Grid2D grid, Dtype dt);

// Scaling and squaring: phi <- id + v / 2^steps, then phi <- phi o phi,
// `steps` times. Differentiable through grid_sample back to v. Requires
// steps in [4, 10] and max|v| / 2^steps < 0.5 px.
DeformationField exp_map(Tape& tape, const VelocityField& v, int steps = 6);

// (phi o psi)(x) = phi(psi(x)); bilinear interpolation of phi's displacement
// at psi's target points, periodic wrap.
DeformationField compose(Tape& tape, const DeformationField& phi, const DeformationField& psi);

// output(x) = image sampled at phi(x); differentiable in both arguments.
Tensor warp(Tape& tape, const Tensor& image, const DeformationField& phi);

// Mean of squared central-difference partials of both channels (periodic).
// Realized with fixed difference kernels so the gradient comes from conv2d.
Tensor spatial_grad_norm(Tape& tape, const VelocityField& v);

// Batched variants used by the training path; velocity/displacement stacked
// as [B,2,H,W].
Tensor exp_map_batched(Tape& tape, const Tensor& velocities, Grid2D grid, int steps = 6);
Tensor warp_batched(Tape& tape, const Tensor& images, const Tensor& displacements, Grid2D grid);
Tensor spatial_grad_norm_batched(Tape& tape, const Tensor& velocities, Grid2D grid);

// Determinant of the central-difference Jacobian of phi at every grid point.
// Diagnostic only; not differentiable.
Tensor jacobian_det(const DeformationField& phi);

// White noise smoothed by a truncated periodic Gaussian (sigma in pixels),
// rescaled so max|v| equals `amplitude`. The standard guarded test field.
VelocityField smooth_random_velocity(Grid2D grid, double amplitude, Rng& rng,
                                     double sigma_kernel = 2.0, Dtype dt = Dtype::F64);

double max_abs(const Tensor& t);
double mean_abs(const Tensor& t);

// In-place separable Gaussian blur with periodic wrap, kernel truncated at
// three sigma; `values` holds `channels` row-major planes of h x w.
void periodic_blur(std::vector<double>& values, int channels, int h, int w, double sigma);

}  // namespace corld
