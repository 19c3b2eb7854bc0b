// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "unicontrol/rng.hpp"
#include "unicontrol/tape.hpp"
#include "unicontrol/tensor.hpp"

namespace uc {

struct BuiltGraph {
  std::shared_ptr<Tape> tape;
  Tensor loss;  // scalar
  // Parameters to check, in report order. Entries without requires_grad are
  // skipped (frozen parameters do not appear in the report).
  std::vector<std::pair<std::string, Tensor>> params;
};

using GraphBuilder = std::function<BuiltGraph(Xoshiro256pp&)>;

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::int64_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool all_below(double tol) const { return worst < tol; }
  std::string to_text() const;
};

// Compares analytic gradients against central finite differences (step h)
// evaluated with a 64-bit shadow of the recorded graph. Failures are
// reported, not thrown.
GradCheckReport gradcheck(const GraphBuilder& builder, std::uint64_t seed, double h = 1e-3);

}  // namespace uc
