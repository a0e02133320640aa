#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "core/deform.hpp"
#include "core/gradcheck.hpp"
#include "doctest.h"

using namespace corld;

namespace {

VelocityField constant_field(Grid2D g, double dy, double dx) {
  Tensor v({2, g.h, g.w}, Dtype::F64);
  int64_t hw = static_cast<int64_t>(g.h) * g.w;
  for (int64_t i = 0; i < hw; ++i) {
    v.data()[static_cast<size_t>(i)] = dy;
    v.data()[static_cast<size_t>(hw + i)] = dx;
  }
  return {g, v};
}

double max_err_vs_constant(const DeformationField& phi, double dy, double dx) {
  int64_t hw = static_cast<int64_t>(phi.grid.h) * phi.grid.w;
  double worst = 0.0;
  for (int64_t i = 0; i < hw; ++i) {
    worst = std::max(worst, std::abs(phi.displacement.data()[static_cast<size_t>(i)] - dy));
    worst = std::max(worst, std::abs(phi.displacement.data()[static_cast<size_t>(hw + i)] - dx));
  }
  return worst;
}

}  // namespace

TEST_CASE("identity grid laws") {
  Grid2D g{8, 8};
  DeformationField id = identity_grid(g);
  CHECK(max_abs(id.displacement) == 0.0);

  Rng rng(1);
  VelocityField v = smooth_random_velocity(g, 1.0, rng);
  Tape tape;
  DeformationField psi = exp_map(tape, v, 6);

  DeformationField left = compose(tape, identity_grid(g), psi);
  for (size_t i = 0; i < left.displacement.data().size(); ++i)
    CHECK(left.displacement.data()[i] ==
          doctest::Approx(psi.displacement.data()[i]).epsilon(1e-6));

  DeformationField right = compose(tape, psi, identity_grid(g));
  CHECK(right.displacement.data() == psi.displacement.data());

  Tensor image(std::vector<int>{1, 8, 8}, Dtype::F64);
  for (double& x : image.data()) x = rng.uniform01();
  Tensor warped = warp(tape, image, identity_grid(g));
  CHECK(warped.data() == image.data());
}

TEST_CASE("exp_map of zero is exactly the identity") {
  Grid2D g{16, 16};
  Tape tape;
  DeformationField phi = exp_map(tape, constant_field(g, 0, 0), 6);
  CHECK(max_abs(phi.displacement) == 0.0);
}

TEST_CASE("constant field flows to an exact translation") {
  // the flow of a constant field is a translation by the same vector; with
  // constant displacement the interpolation is exact, so the error stays at
  // rounding level
  Grid2D g{16, 16};
  Tape tape;
  DeformationField phi = exp_map(tape, constant_field(g, 1.5, 0.0), 6);
  CHECK(max_err_vs_constant(phi, 1.5, 0.0) <= 1e-3);
}

TEST_CASE("exp_map guards steps and magnitude") {
  Grid2D g{8, 8};
  Tape tape;
  CHECK_THROWS_WITH_AS(exp_map(tape, constant_field(g, 1, 0), 2), doctest::Contains("steps"),
                       std::invalid_argument);
  // max|v|/2^4 = 40/16 >= 0.5 violates the guard
  CHECK_THROWS_WITH_AS(exp_map(tape, constant_field(g, 40.0, 0), 4),
                       doctest::Contains("guard"), std::invalid_argument);
}

TEST_CASE("compose: translations add, grids must match") {
  Grid2D g{12, 12};
  Tape tape;
  DeformationField a{g, constant_field(g, 0.7, 0).values};
  DeformationField b{g, constant_field(g, 1.1, 0).values};
  DeformationField ab = compose(tape, a, b);
  CHECK(max_err_vs_constant(ab, 1.8, 0.0) <= 1e-6);

  DeformationField other = identity_grid({8, 8});
  CHECK_THROWS_WITH_AS(compose(tape, a, other), doctest::Contains("grid mismatch"),
                       std::invalid_argument);
}

TEST_CASE("compose associativity within interpolation error at 32x32") {
  Grid2D g{32, 32};
  Tape tape;
  Rng rng(17);
  auto field = [&](double amp) {
    VelocityField v = smooth_random_velocity(g, amp, rng);
    return exp_map(tape, v, 6);
  };
  DeformationField f1 = field(1.5), f2 = field(1.2), f3 = field(1.0);
  DeformationField left = compose(tape, compose(tape, f1, f2), f3);
  DeformationField right = compose(tape, f1, compose(tape, f2, f3));
  double worst = 0.0;
  for (size_t i = 0; i < left.displacement.data().size(); ++i)
    worst = std::max(worst,
                     std::abs(left.displacement.data()[i] - right.displacement.data()[i]));
  CHECK(worst <= 0.02);
}

TEST_CASE("inverse consistency of the exponential map") {
  Grid2D g{32, 32};
  for (uint64_t seed : {2u, 9u, 23u}) {
    Rng rng(seed);
    VelocityField v = smooth_random_velocity(g, 2.0, rng);
    Tensor neg = v.values.clone();
    for (double& x : neg.data()) x = -x;
    Tape tape;
    DeformationField round_trip = compose(tape, exp_map(tape, v, 6), exp_map(tape, {g, neg}, 6));
    int64_t hw = 32 * 32;
    double mean = 0.0;
    for (int64_t i = 0; i < hw; ++i) {
      double dy = round_trip.displacement.data()[static_cast<size_t>(i)];
      double dx = round_trip.displacement.data()[static_cast<size_t>(hw + i)];
      mean += std::sqrt(dy * dy + dx * dx);
    }
    CHECK(mean / static_cast<double>(hw) <= 0.05);
  }
}

TEST_CASE("warp moves a delta by an integer translation exactly") {
  Grid2D g{8, 8};
  Tensor image(std::vector<int>{1, 8, 8}, Dtype::F64);
  image.data()[static_cast<size_t>(flat_index({1, 8, 8}, {0, 2, 3}))] = 1.0;
  // output(x) = image(x + u); with u = (3, -2), the bright pixel appears at
  // the position that maps onto it: (2,3) - (3,-2) wrapped = (7, 5)
  Tape tape;
  DeformationField shift{g, constant_field(g, 3.0, -2.0).values};
  Tensor warped = warp(tape, image, shift);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double expect = (y == 7 && x == 5) ? 1.0 : 0.0;
      CHECK(warped.data()[static_cast<size_t>(y * 8 + x)] == doctest::Approx(expect));
    }
}

TEST_CASE("warp is linear in the image argument") {
  Grid2D g{16, 16};
  Rng rng(4);
  VelocityField v = smooth_random_velocity(g, 2.0, rng);
  Tensor i1(std::vector<int>{1, 16, 16}, Dtype::F64), i2 = i1.clone();
  for (double& x : i1.data()) x = rng.uniform01();
  for (double& x : i2.data()) x = rng.uniform01();
  Tape tape;
  DeformationField phi = exp_map(tape, v, 6);
  const double a = 2.25, b = -0.75;
  Tensor mix(std::vector<int>{1, 16, 16}, Dtype::F64);
  for (size_t i = 0; i < mix.data().size(); ++i)
    mix.data()[i] = a * i1.data()[i] + b * i2.data()[i];
  Tensor w_mix = warp(tape, mix, phi);
  Tensor w1 = warp(tape, i1, phi);
  Tensor w2 = warp(tape, i2, phi);
  for (size_t i = 0; i < mix.data().size(); ++i)
    CHECK(w_mix.data()[i] == doctest::Approx(a * w1.data()[i] + b * w2.data()[i]).epsilon(1e-6));
}

TEST_CASE("jacobian determinant diagnostics") {
  SUBCASE("identity gives all ones") {
    Tensor det = jacobian_det(identity_grid({8, 8}));
    for (double v : det.data()) CHECK(v == 1.0);
  }
  SUBCASE("uniform dilation gives (1.1)^2 in the interior") {
    // phi(x) = x + 0.1 (x - center): Jacobian = 1.1 I away from the wrap seam
    Grid2D g{16, 16};
    Tensor u(std::vector<int>{2, 16, 16}, Dtype::F64);
    double c = 7.5;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        u.data()[static_cast<size_t>(y * 16 + x)] = 0.1 * (y - c);
        u.data()[static_cast<size_t>(16 * 16 + y * 16 + x)] = 0.1 * (x - c);
      }
    Tensor det = jacobian_det({g, u});
    for (int y = 4; y < 12; ++y)
      for (int x = 4; x < 12; ++x)
        CHECK(det.data()[static_cast<size_t>(y * 16 + x)] == doctest::Approx(1.21).epsilon(1e-2));
  }
  SUBCASE("guarded smooth fields stay positive") {
    Grid2D g{32, 32};
    for (uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      Tape tape;
      DeformationField phi = exp_map(tape, smooth_random_velocity(g, 2.0, rng), 6);
      Tensor det = jacobian_det(phi);
      double dmin = 1e300;
      for (double v : det.data()) dmin = std::min(dmin, v);
      CHECK(dmin > 0.0);
    }
  }
}

TEST_CASE("spatial_grad_norm closed forms") {
  Grid2D g{8, 8};
  SUBCASE("zero and constant fields have zero gradient energy") {
    Tape tape;
    CHECK(spatial_grad_norm(tape, constant_field(g, 0, 0)).item() == 0.0);
    CHECK(spatial_grad_norm(tape, constant_field(g, 3.7, -1.2)).item() == 0.0);
  }
  SUBCASE("sawtooth matches the hand-computed periodic differences") {
    // v[c](y,x) = x: central differences are 1 except at the wrap columns
    Tensor v(std::vector<int>{2, 8, 8}, Dtype::F64);
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          v.data()[static_cast<size_t>(c * 64 + y * 8 + x)] = static_cast<double>(x);
    double expect = 0.0;
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          auto val = [&](int xx) { return static_cast<double>(wrap_index(xx, 8)); };
          double ddx = 0.5 * (val(x + 1) - val(x - 1));
          expect += ddx * ddx;  // d/dy of the sawtooth is zero everywhere
        }
    expect /= 4.0 * 64.0;  // mean over 2 channels x 2 directions x H x W
    Tape tape;
    CHECK(spatial_grad_norm(tape, {g, v}).item() == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("warp and exp_map pass finite-difference checks") {
  Grid2D g{8, 8};
  Rng rng(33);
  VelocityField v = smooth_random_velocity(g, 1.5, rng);
  Tensor image(std::vector<int>{1, 8, 8}, Dtype::F64);
  for (double& x : image.data()) x = rng.uniform01();

  double err = grad_check(
      [g](Tape& t, const std::vector<Tensor>& l) {
        DeformationField phi = exp_map(t, {g, l[1]}, 6);
        return t.sum(t.square(warp(t, l[0], phi)));
      },
      {image, v.values}, 1e-6);
  CHECK(err <= 1e-4);
}
