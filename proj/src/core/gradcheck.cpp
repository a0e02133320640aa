#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace corld {

double grad_check(const GraphFn& f, std::vector<Tensor> leaves, double step, uint64_t seed) {
  if (step < 1e-6 || step > 1e-3)
    fail_invalid("gradcore", "grad_check: step " + std::to_string(step) + " outside [1e-6, 1e-3]");
  for (Tensor& t : leaves) {
    if (t.dtype() != Dtype::F64) fail_invalid("gradcore", "grad_check requires f64 leaves");
    t.set_requires_grad(true);
    t.zero_grad();
  }

  {
    Tape tape;
    Tensor loss = f(tape, leaves);
    tape.backward(loss);
  }

  auto eval = [&]() {
    Tape tape;
    return f(tape, leaves).item();
  };

  Rng rng(seed);
  double worst = 0.0;
  for (Tensor& leaf : leaves) {
    const int64_t n = leaf.numel();
    std::vector<int64_t> coords;
    if (n <= 64) {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      coords.reserve(64);
      for (int i = 0; i < 64; ++i) coords.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(n))));
    }
    const std::vector<double>& g = leaf.grad();  // zeros when untouched by backward
    for (int64_t c : coords) {
      double analytic = g[static_cast<size_t>(c)];
      double saved = leaf.data()[static_cast<size_t>(c)];
      leaf.data()[static_cast<size_t>(c)] = saved + step;
      double fp = eval();
      leaf.data()[static_cast<size_t>(c)] = saved - step;
      double fm = eval();
      leaf.data()[static_cast<size_t>(c)] = saved;
      double numeric = (fp - fm) / (2.0 * step);
      double err = std::abs(analytic - numeric) /
                   std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace corld
