// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "unicontrol/checkpoint.hpp"
#include "unicontrol/dataset.hpp"
#include "unicontrol/diffusion.hpp"
#include "unicontrol/model.hpp"
#include "unicontrol/schedule.hpp"

namespace uc {

struct TrainConfig {
  std::vector<std::string> tasks;
  int steps = 2000;
  int batch_size = 8;
  float lr = 1e-4f;           // toy scale; the paper-scale reference is 1e-5
  float weight_decay = 0.01f;
  double drop_prob = 0.30;
  double freeze_frac = 0.80;  // hypernet frozen from freeze_frac * steps on
  std::uint64_t seed = 0;
  std::string config_snapshot;  // stored verbatim in the checkpoint
};

// Uniform task index from the shared stream.
int sample_task(Xoshiro256pp& rng, int K);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<std::string> loss_lines;  // "step<TAB>task<TAB>loss"
  std::vector<float> losses;
};

// Multi-task loop: per step samples a task, draws a single-task minibatch,
// computes the training loss through controlled_denoise and steps AdamW on
// the trainable parameters (hypernet excluded after the freeze step).
TrainResult train(Model& model, const Dataset& data, const NoiseSchedule& schedule,
                  const TrainConfig& cfg);

struct ParamRow {
  std::string name;
  std::int64_t count = 0;
};

struct ParamTable {
  std::vector<ParamRow> rows;
  std::int64_t base = 0;
  std::int64_t control_copy = 0;
  std::int64_t zero_convs = 0;
  std::int64_t adapters = 0;  // all K modules
  std::int64_t hypernet = 0;
  int num_tasks = 0;

  std::int64_t control_branch() const { return control_copy + zero_convs; }
  std::int64_t adapters_plus_hypernet() const { return adapters + hypernet; }
  std::int64_t unified_total() const { return base + control_branch() + adapters + hypernet; }
  std::int64_t stacked_total() const { return num_tasks * (base + control_branch()); }

  // Text table including the paper-scale reference row.
  std::string render() const;
};

ParamTable count_params(const Model& m);

struct FidelityReport {
  std::string task;
  std::vector<double> conditional;
  std::vector<double> unconditional;
  double conditional_mean = 0.0;
  double unconditional_mean = 0.0;
  std::string render() const;
};

// Sample hook: produces an image for a held-out scene; `cond` is the null
// (all-zero) condition on the baseline arm.
using SampleFn = std::function<Tensor(int index, const SceneBundle& scene, const Tensor& cond,
                                      const std::string& prompt, std::uint64_t sample_seed)>;

// Generic evaluation core: synthesizes n held-out scenes from `seed`,
// renders samples through `fn` for the conditional and null-condition arms,
// re-derives the condition from each sample and scores it against the
// input condition.
FidelityReport eval_condition_fidelity_with(const SampleFn& fn, const std::string& task, int n,
                                            std::uint64_t seed, const DatagenConfig& cfg);

// DDIM-backed evaluation of a trained model.
FidelityReport eval_condition_fidelity(const Model& m, const NoiseSchedule& schedule,
                                       const GuidanceConfig& guidance, const std::string& task,
                                       int n, std::uint64_t seed, const DatagenConfig& cfg = {});

}  // namespace uc
