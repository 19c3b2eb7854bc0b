// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/tasks.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "unicontrol/rng.hpp"

namespace uc {

TaskRegistry TaskRegistry::standard() {
  TaskRegistry r;
  const std::pair<const char*, const char*> entries[] = {
      {"hed", "hed edge to image"},
      {"canny", "canny edge to image"},
      {"seg", "segmentation map to image"},
      {"depth", "depth map to image"},
      {"normal", "normal surface map to image"},
      {"pose", "human pose skeleton to image"},
      {"hedsketch", "sketch to image"},
      {"bbox", "bounding box to image"},
      {"outpainting", "image outpainting"},
  };
  int i = 0;
  for (const auto& [key, instr] : entries) {
    r.specs_.push_back(TaskSpec{key, instr, 3, i});
    r.by_key_[key] = i;
    ++i;
  }
  return r;
}

const TaskSpec& TaskRegistry::by_index(int i) const {
  if (i < 0 || i >= size()) {
    throw std::out_of_range("task index " + std::to_string(i) + " out of range [0," +
                            std::to_string(size()) + ")");
  }
  return specs_[static_cast<std::size_t>(i)];
}

const TaskSpec& TaskRegistry::by_key(const std::string& key) const {
  auto it = by_key_.find(key);
  if (it == by_key_.end()) throw std::out_of_range("unknown task \"" + key + "\"");
  return specs_[static_cast<std::size_t>(it->second)];
}

bool TaskRegistry::has(const std::string& key) const { return by_key_.count(key) != 0; }

const std::string& TaskRegistry::instruction_for(const std::string& key) const {
  return by_key(key).instruction;
}

std::string TaskRegistry::serialize() const {
  std::string out;
  for (const auto& s : specs_) {
    out += s.key + "\t" + s.instruction + "\t" + std::to_string(s.cond_channels) + "\t" +
           std::to_string(s.adapter_index) + "\n";
  }
  return out;
}

TaskRegistry TaskRegistry::parse(const std::string& text) {
  TaskRegistry r;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t p0 = line.find('\t');
    std::size_t p1 = line.find('\t', p0 + 1);
    std::size_t p2 = line.find('\t', p1 + 1);
    if (p0 == std::string::npos || p1 == std::string::npos || p2 == std::string::npos) {
      throw std::invalid_argument("malformed task registry line: " + line);
    }
    TaskSpec s;
    s.key = line.substr(0, p0);
    s.instruction = line.substr(p0 + 1, p1 - p0 - 1);
    s.cond_channels = std::stoi(line.substr(p1 + 1, p2 - p1 - 1));
    s.adapter_index = std::stoi(line.substr(p2 + 1));
    r.by_key_[s.key] = static_cast<int>(r.specs_.size());
    r.specs_.push_back(std::move(s));
  }
  return r;
}

Tensor encode_text(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));

  Tensor out = Tensor::zeros({kTextEmbedDim});
  if (tokens.empty()) return out;  // null embedding

  auto acc = out.values_mut();
  std::vector<double> token_vec(kTextEmbedDim);
  std::vector<double> mean(kTextEmbedDim, 0.0);
  for (const auto& tok : tokens) {
    SplitMix64 sm(fnv1a64(tok.data(), tok.size()));
    for (int i = 0; i < kTextEmbedDim; i += 2) {
      const double u1 = unit_open01(sm.next());
      const double u2 = unit01(sm.next());
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double a = 6.283185307179586476925286766559 * u2;
      token_vec[static_cast<std::size_t>(i)] = r * std::cos(a);
      token_vec[static_cast<std::size_t>(i) + 1] = r * std::sin(a);
    }
    double norm2 = 0.0;
    for (double v : token_vec) norm2 += v * v;
    const double inv = 1.0 / std::sqrt(norm2);
    for (int i = 0; i < kTextEmbedDim; ++i) mean[static_cast<std::size_t>(i)] += token_vec[static_cast<std::size_t>(i)] * inv;
  }
  for (auto& v : mean) v /= static_cast<double>(tokens.size());
  double norm2 = 0.0;
  for (double v : mean) norm2 += v * v;
  const double inv = 1.0 / std::sqrt(norm2);
  for (int i = 0; i < kTextEmbedDim; ++i) acc[static_cast<std::size_t>(i)] = static_cast<float>(mean[static_cast<std::size_t>(i)] * inv);
  return out;
}

Tensor null_text_embedding() { return Tensor::zeros({kTextEmbedDim}); }

double cosine(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("cosine: shape mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    dot += static_cast<double>(va[i]) * vb[i];
    na += static_cast<double>(va[i]) * va[i];
    nb += static_cast<double>(vb[i]) * vb[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<float> estimate_task_weights_manual(const TaskRegistry& reg,
                                                const std::map<std::string, float>& weights) {
  std::vector<float> out(static_cast<std::size_t>(reg.size()), 0.0f);
  double sum = 0.0;
  for (const auto& [key, w] : weights) {
    if (w < 0.0f) throw std::invalid_argument("task weight for \"" + key + "\" is negative");
    const int idx = reg.index_of(key);
    out[static_cast<std::size_t>(idx)] = w;
    sum += w;
  }
  if (sum <= 0.0) throw std::invalid_argument("manual task weights are all zero");
  for (auto& w : out) w = static_cast<float>(w / sum);
  return out;
}

std::vector<float> estimate_task_weights_similarity(const TaskRegistry& reg,
                                                    const std::string& new_instruction) {
  const Tensor e = encode_text(new_instruction);
  std::vector<float> out(static_cast<std::size_t>(reg.size()), 0.0f);
  double sum = 0.0;
  for (const auto& spec : reg.specs()) {
    double c = cosine(e, encode_text(spec.instruction));
    if (c < 0.0) c = 0.0;
    out[static_cast<std::size_t>(spec.adapter_index)] = static_cast<float>(c);
    sum += c;
  }
  if (sum <= 0.0) {
    throw std::invalid_argument("no positive instruction similarity for \"" + new_instruction + "\"");
  }
  for (auto& w : out) w = static_cast<float>(w / sum);
  return out;
}

namespace {

// "canny edge to image" -> "canny edge"; instructions without the suffix
// (image outpainting) are used whole. The skeleton task blends as
// "human skeleton", matching the published hybrid phrasing.
std::string instruction_prefix(const std::string& instruction) {
  if (instruction == "human pose skeleton to image") return "human skeleton";
  static const std::string suffix = " to image";
  if (instruction.size() > suffix.size() &&
      instruction.compare(instruction.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return instruction.substr(0, instruction.size() - suffix.size());
  }
  return instruction;
}

}  // namespace

HybridInputs compose_hybrid(const TaskRegistry& reg,
                            const std::string& task_a, const Tensor& cond_a,
                            const std::string& task_b, const Tensor& cond_b,
                            const std::string& prompt) {
  const TaskSpec& a = reg.by_key(task_a);
  const TaskSpec& b = reg.by_key(task_b);
  if (cond_a.shape() != cond_b.shape()) {
    throw std::invalid_argument("compose_hybrid: condition size mismatch " +
                                shape_str(cond_a.shape()) + " vs " + shape_str(cond_b.shape()));
  }
  HybridInputs h;
  h.instruction = instruction_prefix(a.instruction) + " and " + instruction_prefix(b.instruction) + " to image";
  h.augmented_prompt = prompt + ", background and foreground";
  h.task_a = a.adapter_index;
  h.task_b = b.adapter_index;
  h.cond_a = cond_a;
  h.cond_b = cond_b;
  return h;
}

void write_instruction_embeddings(const TaskRegistry& reg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& spec : reg.specs()) {
    const Tensor e = encode_text(spec.instruction);
    const std::uint32_t len = static_cast<std::uint32_t>(spec.key.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(spec.key.data(), static_cast<std::streamsize>(spec.key.size()));
    out.write(reinterpret_cast<const char*>(e.values().data()),
              static_cast<std::streamsize>(e.numel() * 4));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> read_instruction_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::pair<std::string, Tensor>> out;
  while (true) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    if (!in) break;
    std::string key(len, '\0');
    in.read(key.data(), len);
    std::vector<float> vals(kTextEmbedDim);
    in.read(reinterpret_cast<char*>(vals.data()), kTextEmbedDim * 4);
    if (!in) throw std::runtime_error("truncated embedding file: " + path);
    out.emplace_back(std::move(key), Tensor::from({kTextEmbedDim}, std::move(vals)));
  }
  return out;
}

}  // namespace uc
