// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unicontrol/params.hpp"
#include "unicontrol/tasks.hpp"
#include "unicontrol/unet.hpp"

namespace uc {

struct ControlConfig {
  int adapter_hidden = 16;
  int adapter_kernel = 3;  // odd; spatial size preserving
  int adapter_depth = 2;   // convolution+activation pairs per module
  void validate() const;
};

// The full multi-task model: frozen base denoiser ("base/"), trainable copy
// of its encoder+middle ("ctrl/"), per-task adapter modules ("adapterK/"),
// zero-convolution bridges ("zero/") and the task-instruction hypernet
// ("hyper/").
struct Model {
  UNetConfig unet;
  ControlConfig control;
  TaskRegistry registry;
  ParamStore params;
  std::vector<Tensor> instruction_embeddings;  // cached encode_text per task

  int num_tasks() const { return registry.size(); }
};

Model init_model(const UNetConfig& unet, const ControlConfig& control,
                 const TaskRegistry& registry, std::uint64_t seed);

// All names whose tensors the optimizer may update (requires_grad set).
std::vector<std::string> trainable_names(const Model& m);

}  // namespace uc
