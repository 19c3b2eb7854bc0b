// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "unicontrol/tensor.hpp"

namespace uc {

inline constexpr int kTextEmbedDim = 64;

struct TaskSpec {
  std::string key;
  std::string instruction;
  int cond_channels = 3;
  int adapter_index = 0;
};

// The nine condition-to-image tasks with their fixed instruction strings.
class TaskRegistry {
 public:
  static TaskRegistry standard();

  int size() const { return static_cast<int>(specs_.size()); }
  const TaskSpec& by_index(int i) const;
  const TaskSpec& by_key(const std::string& key) const;
  bool has(const std::string& key) const;
  int index_of(const std::string& key) const { return by_key(key).adapter_index; }
  const std::vector<TaskSpec>& specs() const { return specs_; }

  // Exact instruction string for a registered key; throws naming the key.
  const std::string& instruction_for(const std::string& key) const;

  std::string serialize() const;
  static TaskRegistry parse(const std::string& text);

 private:
  std::vector<TaskSpec> specs_;
  std::map<std::string, int> by_key_;
};

// Deterministic hashed bag-of-tokens text encoder: lowercase whitespace
// tokens, FNV-1a 64 per token, SplitMix64 + Box-Muller draws, per-token L2
// normalization, mean, renormalize. Empty input gives the null (all-zero)
// embedding. Output is [64].
Tensor encode_text(const std::string& text);
Tensor null_text_embedding();

double cosine(const Tensor& a, const Tensor& b);

// Manual weight assignment: validates (nonnegative, not all zero, length K
// when given by vector) and renormalizes to sum 1.
std::vector<float> estimate_task_weights_manual(const TaskRegistry& reg,
                                                const std::map<std::string, float>& weights);

// Similarity mode: cosine between the new instruction embedding and each
// registered instruction, negatives clamped to zero, renormalized.
std::vector<float> estimate_task_weights_similarity(const TaskRegistry& reg,
                                                    const std::string& new_instruction);

struct HybridInputs {
  std::string instruction;       // "<a> and <b> to image"
  std::string augmented_prompt;  // prompt with background/foreground keywords
  int task_a = 0;
  int task_b = 0;
  Tensor cond_a;
  Tensor cond_b;
};

// Builds the hybrid-task inputs for two registered tasks with same-size
// condition maps.
HybridInputs compose_hybrid(const TaskRegistry& reg,
                            const std::string& task_a, const Tensor& cond_a,
                            const std::string& task_b, const Tensor& cond_b,
                            const std::string& prompt);

// Golden embedding file: 9 records of (key length u32 LE, key bytes,
// 64 little-endian 32-bit reals).
void write_instruction_embeddings(const TaskRegistry& reg, const std::string& path);
std::vector<std::pair<std::string, Tensor>> read_instruction_embeddings(const std::string& path);

}  // namespace uc
