// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "unicontrol/gradcheck.hpp"

namespace uc {

// Finite-difference checks for every primitive plus the full tiny-config
// controlled denoiser (all trainable parameters, hypernet paths included).
// The model is nudged off its zero initialization so gradients actually
// flow through the bridges being checked.
std::vector<std::pair<std::string, GradCheckReport>> run_standard_gradchecks(std::uint64_t seed);

// Builder for the tiny-config controlled_denoise graph; exposed for tests.
GraphBuilder tiny_controlled_denoise_builder();

}  // namespace uc
