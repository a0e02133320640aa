#pragma once

// Property suites behind the selftest command and the acceptance gate:
// finite-difference checks for every primitive and composite loss, and the
// diffeomorphism properties of the exponential map.

#include <iosfwd>

namespace corld {

struct SuiteResult {
  int checks = 0;
  int failures = 0;
  bool ok() const { return failures == 0; }
};

// Gradient fidelity: each primitive plus the composite losses, checked by
// central finite differences in f64 on seeded inputs of dim <= 16.
SuiteResult selftest_gradients(std::ostream& os, bool quick = false);

// Exponential-map properties over seeded guarded smooth fields at 32x32:
// exp(0) identity, positive Jacobian determinants, inverse consistency,
// constant-field translation accuracy.
SuiteResult selftest_deform(std::ostream& os, bool quick = false);

}  // namespace corld
