#pragma once

#include <cstddef>
#include <cstdint>

namespace ediv::testing {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t params_checked = 0;  // parameter + input entries compared
  std::size_t param_count = 0;
  int attempts = 0;                // instances drawn before one cleared the kink margin
};

// Draws a random small network (<= 2k parameters) and batch, then compares
// reverse-mode gradients of the cross-entropy loss against central finite
// differences (step 1e-4). Relative error is |a - n| / max(|a|, |n|, 1e-3).
// Instances whose ReLU inputs or max-pool winners sit within 1e-3 of a kink
// are redrawn, since the difference quotient is meaningless there.
GradcheckResult gradcheck_random_instance(std::uint64_t seed);

}  // namespace ediv::testing
