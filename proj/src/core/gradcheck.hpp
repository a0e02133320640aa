#pragma once

// Central finite-difference verification of tape gradients. Only meaningful
// in f64 mode; f32 rounding would swamp the difference quotients.

#include <functional>
#include <vector>

#include "core/tape.hpp"

namespace corld {

using GraphFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

// Returns max over sampled coordinates of
//   |analytic - central_difference| / max(1, |analytic|, |numeric|).
// Samples at most 64 coordinates per leaf with a seeded RNG.
double grad_check(const GraphFn& f, std::vector<Tensor> leaves, double step = 1e-5,
                  uint64_t seed = 0x5eed);

}  // namespace corld
