// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "unicontrol/model.hpp"
#include "unicontrol/tensor.hpp"

namespace uc {

// Named-tensor container, bit-exact on disk. File layout: magic "UCKP",
// version u32 LE, manifest byte-length u64 LE, UTF-8 manifest lines
// "name<TAB>dtype<TAB>rank<TAB>extents...<TAB>offset", contiguous 32-bit LE
// payloads at the stated offsets, trailing CRC32 of the payload. Training
// metadata rides along as reserved "__meta/..." tensors whose payloads are
// bit casts, not numbers.
struct Checkpoint {
  std::uint32_t version = 1;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::uint64_t step = 0;
  std::string config_text;
  std::array<std::uint64_t, 4> rng_state{};
};

Checkpoint checkpoint_from_model(const Model& m, std::uint64_t step,
                                 const std::string& config_text,
                                 const std::array<std::uint64_t, 4>& rng_state);

// Copies checkpoint tensor values into the model's parameters by name;
// throws on missing or shape-mismatched entries.
void apply_checkpoint(Model& m, const Checkpoint& ckpt);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace uc
