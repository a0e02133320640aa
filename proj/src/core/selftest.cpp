#include "core/selftest.hpp"

#include <cmath>
#include <functional>
#include <ostream>

#include "core/gradcheck.hpp"
#include "core/losses.hpp"
#include "core/networks.hpp"

namespace corld {

namespace {

constexpr double kTol = 1e-4;

Tensor seeded(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape), Dtype::F64);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// values bounded away from the activation kink so central differences see a
// smooth function
Tensor seeded_off_kink(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape), Dtype::F64);
  for (double& v : t.data()) {
    double x = rng.uniform(0.05, 1.0);
    v = rng.uniform01() < 0.5 ? -x : x;
  }
  return t;
}

struct Check {
  std::ostream& os;
  SuiteResult& result;
  void run(const std::string& name, const GraphFn& f, std::vector<Tensor> leaves,
           double step = 1e-5) {
    double err = grad_check(f, std::move(leaves), step, derive_seed(99, name.c_str()));
    ++result.checks;
    bool ok = err <= kTol;
    if (!ok) ++result.failures;
    os << (ok ? "[PASS] " : "[FAIL] ") << "grad " << name << " (max rel err " << err << ")\n";
  }
  void expect(const std::string& name, bool ok, const std::string& detail) {
    ++result.checks;
    if (!ok) ++result.failures;
    os << (ok ? "[PASS] " : "[FAIL] ") << name << " (" << detail << ")\n";
  }
};

Tensor displaced_coords(Grid2D g, Rng& rng, Dtype dt) {
  Tensor c = identity_coords(g, dt);
  // fractional offsets in [0.2, 0.8] keep finite differences away from the
  // bilinear interpolation kinks at integer coordinates
  for (double& v : c.data()) v += rng.uniform(0.2, 0.8);
  return c;
}

}  // namespace

SuiteResult selftest_gradients(std::ostream& os, bool quick) {
  SuiteResult result;
  Check ck{os, result};
  Rng rng(20240811);

  ck.run("add", [](Tape& t, const std::vector<Tensor>& l) { return t.sum(t.add(l[0], l[1])); },
         {seeded({3, 4}, rng), seeded({3, 4}, rng)});
  ck.run("sub",
         [](Tape& t, const std::vector<Tensor>& l) { return t.sum(t.square(t.sub(l[0], l[1]))); },
         {seeded({3, 4}, rng), seeded({3, 4}, rng)});
  ck.run("mul", [](Tape& t, const std::vector<Tensor>& l) { return t.sum(t.mul(l[0], l[1])); },
         {seeded({2, 5}, rng), seeded({2, 5}, rng)});
  ck.run("scalar_mul",
         [](Tape& t, const std::vector<Tensor>& l) { return t.sum(t.scalar_mul(l[0], -2.5)); },
         {seeded({6}, rng)});

  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      Attrs at;
      at.trans_a = ta;
      at.trans_b = tb;
      std::vector<int> ashape = ta ? std::vector<int>{4, 3} : std::vector<int>{3, 4};
      std::vector<int> bshape = tb ? std::vector<int>{2, 4} : std::vector<int>{4, 2};
      ck.run("matmul ta=" + std::to_string(ta) + " tb=" + std::to_string(tb),
             [at](Tape& t, const std::vector<Tensor>& l) {
               return t.sum(t.square(t.apply(Op::MatMul, {l[0], l[1], l[2]}, at)));
             },
             {seeded(ashape, rng), seeded(bshape, rng), seeded({2}, rng)});
    }

  for (Pad mode : {Pad::Zero, Pad::Periodic}) {
    Attrs at;
    at.pad_h = at.pad_w = 1;
    at.stride_h = at.stride_w = 2;
    at.pad_mode = mode;
    ck.run(std::string("conv2d pad=") + (mode == Pad::Zero ? "zero" : "periodic"),
           [at](Tape& t, const std::vector<Tensor>& l) {
             return t.sum(t.square(t.apply(Op::Conv2d, {l[0], l[1], l[2]}, at)));
           },
           {seeded({2, 3, 6, 5}, rng), seeded({4, 3, 3, 3}, rng), seeded({4}, rng)});
  }
  for (Pad mode : {Pad::Zero, Pad::Periodic}) {
    Attrs at;
    at.pad_h = at.pad_w = 1;
    at.stride_h = at.stride_w = 2;
    at.pad_mode = mode;
    ck.run(std::string("transposed_conv2d pad=") + (mode == Pad::Zero ? "zero" : "periodic"),
           [at](Tape& t, const std::vector<Tensor>& l) {
             return t.sum(t.square(t.apply(Op::TransposedConv2d, {l[0], l[1], l[2]}, at)));
           },
           {seeded({2, 3, 4, 4}, rng), seeded({3, 2, 4, 4}, rng), seeded({2}, rng)});
  }

  ck.run("leaky_relu",
         [](Tape& t, const std::vector<Tensor>& l) { return t.sum(t.square(t.leaky_relu(l[0], 0.1))); },
         {seeded_off_kink({4, 4}, rng)});
  {
    Attrs at;
    at.groups = 2;
    at.eps = 1e-5;
    ck.run("group_norm",
           [at](Tape& t, const std::vector<Tensor>& l) {
             return t.sum(t.square(t.apply(Op::GroupNorm, {l[0]}, at)));
           },
           {seeded({2, 4, 3, 3}, rng)});
  }
  {
    Attrs at;
    at.kernel_h = at.kernel_w = at.stride_h = at.stride_w = 2;
    ck.run("avg_pool2d",
           [at](Tape& t, const std::vector<Tensor>& l) {
             return t.sum(t.square(t.apply(Op::AvgPool2d, {l[0]}, at)));
           },
           {seeded({2, 3, 4, 4}, rng)});
  }
  {
    Attrs at;
    at.out_h = 2;
    at.out_w = 3;
    ck.run("adaptive_avg_pool2d",
           [at](Tape& t, const std::vector<Tensor>& l) {
             return t.sum(t.square(t.apply(Op::AdaptiveAvgPool2d, {l[0]}, at)));
           },
           {seeded({1, 2, 5, 7}, rng)});
  }
  ck.run("flatten",
         [](Tape& t, const std::vector<Tensor>& l) { return t.sum(t.square(t.flatten(l[0], 1))); },
         {seeded({2, 3, 4}, rng)});
  {
    Attrs at;
    at.axis = 1;
    ck.run("concat",
           [at](Tape& t, const std::vector<Tensor>& l) {
             return t.sum(t.square(t.apply(Op::Concat, {l[0], l[1]}, at)));
           },
           {seeded({2, 3}, rng), seeded({2, 4}, rng)});
  }
  {
    Attrs at;
    at.axis = 1;
    at.eps = 1e-12;
    ck.run("l2_normalize",
           [at](Tape& t, const std::vector<Tensor>& l) {
             Tensor y = t.apply(Op::L2Normalize, {l[0]}, at);
             return t.sum(t.mul(y, y));
           },
           {seeded_off_kink({3, 5}, rng)});
  }
  ck.run("dot", [](Tape& t, const std::vector<Tensor>& l) { return t.apply(Op::Dot, {l[0], l[1]}); },
         {seeded({6}, rng), seeded({6}, rng)});
  ck.run("sum", [](Tape& t, const std::vector<Tensor>& l) { return t.sum(l[0]); },
         {seeded({7}, rng)});
  ck.run("mean", [](Tape& t, const std::vector<Tensor>& l) { return t.mean(t.square(l[0])); },
         {seeded({7}, rng)});
  ck.run("square", [](Tape& t, const std::vector<Tensor>& l) { return t.sum(t.square(l[0])); },
         {seeded({5}, rng)});
  ck.run("sqrt",
         [](Tape& t, const std::vector<Tensor>& l) { return t.sum(t.apply(Op::Sqrt, {l[0]})); },
         {seeded({6}, rng, 0.2, 1.2)});
  ck.run("log",
         [](Tape& t, const std::vector<Tensor>& l) { return t.sum(t.apply(Op::Log, {l[0]})); },
         {seeded({6}, rng, 0.2, 1.2)});
  ck.run("exp",
         [](Tape& t, const std::vector<Tensor>& l) { return t.sum(t.apply(Op::Exp, {l[0]})); },
         {seeded({5}, rng)});
  {
    Attrs at;
    at.axis = 1;
    ck.run("softmax",
           [at](Tape& t, const std::vector<Tensor>& l) {
             Tensor y = t.apply(Op::Softmax, {l[0]}, at);
             return t.sum(t.square(y));
           },
           {seeded({3, 4}, rng)});
  }
  {
    Grid2D g{6, 6};
    Tensor coords = displaced_coords(g, rng, Dtype::F64);
    Tensor batched = Tensor::from({1, 2, 6, 6}, coords.data(), Dtype::F64);
    ck.run("grid_sample",
           [](Tape& t, const std::vector<Tensor>& l) {
             return t.sum(t.square(t.apply(Op::GridSample, {l[0], l[1]})));
           },
           {seeded({1, 2, 6, 6}, rng), batched}, 1e-6);
  }

  // composite losses
  LossWeights w;
  w.sigma = 0.1;  // keeps finite differences of the matching term well-scaled
  {
    Grid2D g{8, 8};
    Rng field_rng(31);
    VelocityField v = smooth_random_velocity(g, 1.5, field_rng);
    Tensor source = seeded({1, 8, 8}, rng, 0.0, 1.0);
    Tensor target = seeded({1, 8, 8}, rng, 0.0, 1.0);
    ck.run("registration_energy",
           [source, target, g, w](Tape& t, const std::vector<Tensor>& l) {
             return registration_energy(t, source, target, {g, l[0]}, w, 6);
           },
           {v.values}, 1e-6);
  }
  {
    Grid2D g{8, 8};
    Rng field_rng(47);
    Tensor vel({2, 2, 8, 8}, Dtype::F64);
    for (int b = 0; b < 2; ++b) {
      VelocityField f = smooth_random_velocity(g, 1.5, field_rng);
      std::copy(f.values.data().begin(), f.values.data().end(),
                vel.data().begin() + b * f.values.numel());
    }
    Tensor images = seeded({2, 1, 8, 8}, rng, 0.0, 1.0);
    Tensor templates = seeded({2, 1, 8, 8}, rng, 0.0, 1.0);
    ck.run("shape_loss",
           [images, templates, w](Tape& t, const std::vector<Tensor>& l) {
             return shape_loss(t, images, templates, l[0], w, 6);
           },
           {vel}, 1e-6);
  }
  {
    std::vector<int> labels = {0, 1, 0, 1};
    for (CandidateSet cs : {CandidateSet::AllOthers, CandidateSet::DifferentClassOnly}) {
      std::string name = cs == CandidateSet::AllOthers ? "csr_loss all_others"
                                                       : "csr_loss different_class_only";
      ck.run(name,
             [labels, cs](Tape& t, const std::vector<Tensor>& l) {
               return csr_loss(t, l[0], labels, 0.75, cs);
             },
             {seeded_off_kink({4, 6}, rng)});
    }
  }
  {
    Grid2D g{8, 8};
    Rng field_rng(53);
    Tensor vel({2, 2, 8, 8}, Dtype::F64);
    for (int b = 0; b < 2; ++b) {
      VelocityField f = smooth_random_velocity(g, 1.5, field_rng);
      std::copy(f.values.data().begin(), f.values.data().end(),
                vel.data().begin() + b * f.values.numel());
    }
    Tensor images = seeded({2, 1, 8, 8}, rng, 0.0, 1.0);
    Tensor templates = seeded({2, 1, 8, 8}, rng, 0.0, 1.0);
    std::vector<int> labels = {0, 0};
    ck.run("corld_loss",
           [images, templates, labels, w](Tape& t, const std::vector<Tensor>& l) {
             return corld_loss(t, images, templates, l[0], l[1], labels, w,
                               CandidateSet::AllOthers, 6);
           },
           {vel, seeded_off_kink({2, 6}, rng)}, 1e-6);
  }
  ck.run("clf_loss",
         [](Tape& t, const std::vector<Tensor>& l) {
           return clf_loss(t, l[0], {0, 2, 1, 2}, 1.0);
         },
         {seeded({4, 3}, rng)});

  if (!quick) {
    // every network parameter through the full training loss
    ArchDescriptor arch;
    arch.image_size = 8;
    arch.enc_channels = {4, 4, 8};
    arch.dec_channels = {4, 4, 4};
    arch.gn_groups = 2;
    arch.proj_channels = 4;
    arch.num_classes = 2;
    Rng net_rng(7);
    CorldNet net = CorldNet::init(arch, net_rng, Dtype::F64);
    // the zero-gain velocity head would park every sampling coordinate on an
    // integer lattice point, the kink of bilinear interpolation; nudge it so
    // finite differences see the smooth region
    for (double& v : net.params.at("vel.w").data()) v = 0.05 * net_rng.normal();
    for (double& v : net.params.at("vel.b").data()) v = 0.4 + 0.1 * net_rng.normal();
    Tensor images = seeded({2, 1, 8, 8}, rng, 0.0, 1.0);
    Tensor templates = seeded({2, 1, 8, 8}, rng, 0.0, 1.0);
    std::vector<int> labels = {0, 0};
    std::vector<Tensor> leaves;
    for (auto& [name, t] : net.params.items) leaves.push_back(t);
    LossWeights w2 = w;
    ck.run("corld_loss end-to-end (network parameters)",
           [&net, images, templates, labels, w2](Tape& t, const std::vector<Tensor>&) {
             CorldNet::Forward f = net.forward(t, images);
             return corld_loss(t, images, templates, f.velocities, f.projected, labels, w2,
                               CandidateSet::AllOthers, 6);
           },
           leaves, 1e-6);
  }
  return result;
}

SuiteResult selftest_deform(std::ostream& os, bool quick) {
  SuiteResult result;
  Check ck{os, result};
  Grid2D g{32, 32};

  {
    Tape tape;
    VelocityField zero{g, Tensor({2, 32, 32}, Dtype::F64)};
    DeformationField phi = exp_map(tape, zero, 6);
    ck.expect("exp_map(0) = identity exactly", max_abs(phi.displacement) == 0.0,
              "max displacement " + std::to_string(max_abs(phi.displacement)));
  }
  {
    Tape tape;
    Tensor cv({2, 32, 32}, Dtype::F64);
    for (int i = 0; i < 32 * 32; ++i) cv.data()[static_cast<size_t>(i)] = 1.5;  // rows channel
    DeformationField phi = exp_map(tape, {g, cv}, 6);
    double worst = 0.0;
    for (int i = 0; i < 32 * 32; ++i) {
      worst = std::max(worst, std::abs(phi.displacement.data()[static_cast<size_t>(i)] - 1.5));
      worst = std::max(worst, std::abs(phi.displacement.data()[static_cast<size_t>(32 * 32 + i)]));
    }
    ck.expect("constant-field translation error <= 1e-3", worst <= 1e-3,
              "max error " + std::to_string(worst) + " px");
  }

  const int trials = quick ? 20 : 100;
  double worst_inverse = 0.0, worst_det = 1e300;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(1000 + static_cast<uint64_t>(trial), "deform_suite"));
    VelocityField v = smooth_random_velocity(g, 2.0, rng);
    Tape tape;
    DeformationField fwd = exp_map(tape, v, 6);
    Tensor det = jacobian_det(fwd);
    double dmin = 1e300;
    for (double x : det.data()) dmin = std::min(dmin, x);
    worst_det = std::min(worst_det, dmin);

    Tensor neg = v.values.clone();
    for (double& x : neg.data()) x = -x;
    DeformationField bwd = exp_map(tape, {g, neg}, 6);
    DeformationField round_trip = compose(tape, fwd, bwd);
    double mean_disp = 0.0;
    for (int i = 0; i < 32 * 32; ++i) {
      double dy = round_trip.displacement.data()[static_cast<size_t>(i)];
      double dx = round_trip.displacement.data()[static_cast<size_t>(32 * 32 + i)];
      mean_disp += std::sqrt(dy * dy + dx * dx);
    }
    mean_disp /= 32.0 * 32.0;
    worst_inverse = std::max(worst_inverse, mean_disp);
  }
  ck.expect("jacobian determinant > 0 over " + std::to_string(trials) + " guarded fields",
            worst_det > 0.0, "min det " + std::to_string(worst_det));
  ck.expect("inverse consistency mean displacement <= 0.05 px", worst_inverse <= 0.05,
            "worst mean " + std::to_string(worst_inverse) + " px");
  return result;
}

}  // namespace corld
