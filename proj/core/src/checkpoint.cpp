// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "unicontrol/crc32.hpp"

namespace uc {
namespace {

constexpr char kMagic[4] = {'U', 'C', 'K', 'P'};

float bitcast_u32(std::uint32_t v) {
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

std::uint32_t bitcast_f32(float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  return v;
}

Tensor u64_tensor(const std::uint64_t* data, int count) {
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(count) * 2);
  for (int i = 0; i < count; ++i) {
    out.push_back(bitcast_u32(static_cast<std::uint32_t>(data[i])));
    out.push_back(bitcast_u32(static_cast<std::uint32_t>(data[i] >> 32)));
  }
  return Tensor::from({count * 2}, std::move(out));
}

std::uint64_t u64_from(const Tensor& t, int i) {
  const std::uint32_t lo = bitcast_f32(t.values()[static_cast<std::size_t>(2 * i)]);
  const std::uint32_t hi = bitcast_f32(t.values()[static_cast<std::size_t>(2 * i) + 1]);
  return static_cast<std::uint64_t>(hi) << 32 | lo;
}

Tensor text_tensor(const std::string& text) {
  const std::size_t words = (text.size() + 3) / 4;
  std::vector<float> out(std::max<std::size_t>(words, 1), 0.0f);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t w = 0;
    for (std::size_t k = 0; k < 4 && i + k < text.size(); ++k) {
      w |= static_cast<std::uint32_t>(static_cast<unsigned char>(text[i + k])) << (8 * k);
    }
    out[i / 4] = bitcast_u32(w);
  }
  const int n = static_cast<int>(out.size());
  return Tensor::from({n}, std::move(out));
}

std::string text_from(const Tensor& t, std::size_t length) {
  std::string s(length, '\0');
  for (std::size_t i = 0; i < length; ++i) {
    const std::uint32_t w = bitcast_f32(t.values()[i / 4]);
    s[i] = static_cast<char>((w >> (8 * (i % 4))) & 0xffu);
  }
  return s;
}

}  // namespace

Checkpoint checkpoint_from_model(const Model& m, std::uint64_t step,
                                 const std::string& config_text,
                                 const std::array<std::uint64_t, 4>& rng_state) {
  Checkpoint c;
  c.step = step;
  c.config_text = config_text;
  c.rng_state = rng_state;
  for (const auto& name : m.params.names()) {
    c.tensors.emplace_back(name, m.params.at(name));
  }
  return c;
}

void apply_checkpoint(Model& m, const Checkpoint& ckpt) {
  std::size_t applied = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("__meta/", 0) == 0) continue;
    if (!m.params.contains(name)) {
      throw std::runtime_error("checkpoint tensor " + name + " has no matching model parameter");
    }
    Tensor& dst = m.params.at(name);
    if (dst.shape() != t.shape()) {
      throw std::runtime_error("checkpoint tensor " + name + " shape " + shape_str(t.shape()) +
                               " does not match model " + shape_str(dst.shape()));
    }
    std::memcpy(dst.values_mut().data(), t.values().data(), t.values().size() * 4);
    ++applied;
  }
  if (applied != m.params.size()) {
    throw std::runtime_error("checkpoint covers " + std::to_string(applied) + " of " +
                             std::to_string(m.params.size()) + " model parameters");
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<std::pair<std::string, Tensor>> all = ckpt.tensors;
  all.emplace_back("__meta/step", u64_tensor(&ckpt.step, 1));
  all.emplace_back("__meta/rng", u64_tensor(ckpt.rng_state.data(), 4));
  const std::uint64_t cfg_len = ckpt.config_text.size();
  all.emplace_back("__meta/config_len", u64_tensor(&cfg_len, 1));
  all.emplace_back("__meta/config", text_tensor(ckpt.config_text));

  std::string manifest;
  std::vector<std::uint8_t> payload;
  for (const auto& [name, t] : all) {
    manifest += name + "\tf32\t" + std::to_string(t.rank());
    for (int e : t.shape()) manifest += "\t" + std::to_string(e);
    manifest += "\t" + std::to_string(payload.size()) + "\n";
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(t.values().data());
    payload.insert(payload.end(), bytes, bytes + t.values().size() * 4);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint " + path + " for writing");
  out.write(kMagic, 4);
  const std::uint32_t version = ckpt.version;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t mlen = manifest.size();
  out.write(reinterpret_cast<const char*>(&mlen), 8);
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  const std::uint32_t crc = crc32(payload.data(), payload.size());
  out.write(reinterpret_cast<const char*>(&crc), 4);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const auto need = [&](std::size_t at, std::size_t n, const char* what) {
    if (at + n > bytes.size()) {
      throw std::runtime_error(path + ": truncated " + what + " at byte offset " + std::to_string(at));
    }
  };
  need(0, 16, "header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::runtime_error(path + ": bad magic at byte offset 0 (expected \"UCKP\")");
  }
  Checkpoint c;
  std::memcpy(&c.version, bytes.data() + 4, 4);
  if (c.version != 1) {
    throw std::runtime_error(path + ": unsupported version " + std::to_string(c.version) +
                             " at byte offset 4");
  }
  std::uint64_t mlen = 0;
  std::memcpy(&mlen, bytes.data() + 8, 8);
  need(16, mlen, "manifest");
  const std::string manifest(reinterpret_cast<const char*>(bytes.data()) + 16, mlen);
  const std::size_t payload_start = 16 + mlen;
  if (bytes.size() < payload_start + 4) {
    throw std::runtime_error(path + ": truncated payload at byte offset " + std::to_string(payload_start));
  }
  const std::size_t payload_size = bytes.size() - payload_start - 4;
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, bytes.data() + payload_start + payload_size, 4);
  const std::uint32_t actual_crc = crc32(bytes.data() + payload_start, payload_size);
  if (stored_crc != actual_crc) {
    throw std::runtime_error(path + ": payload CRC mismatch at byte offset " +
                             std::to_string(payload_start + payload_size));
  }

  std::vector<std::pair<std::string, Tensor>> all;
  std::istringstream ms(manifest);
  std::string line;
  while (std::getline(ms, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 5) throw std::runtime_error(path + ": malformed manifest line: " + line);
    const std::string& name = fields[0];
    if (fields[1] != "f32") throw std::runtime_error(path + ": unsupported dtype " + fields[1]);
    const int rank = std::stoi(fields[2]);
    if (static_cast<int>(fields.size()) != 4 + rank) {
      throw std::runtime_error(path + ": manifest rank/extent mismatch: " + line);
    }
    std::vector<int> shape;
    std::int64_t n = 1;
    for (int i = 0; i < rank; ++i) {
      shape.push_back(std::stoi(fields[static_cast<std::size_t>(3 + i)]));
      n *= shape.back();
    }
    const std::uint64_t offset = std::stoull(fields.back());
    const std::size_t at = payload_start + offset;
    need(at, static_cast<std::size_t>(n) * 4, ("tensor " + name).c_str());
    std::vector<float> data(static_cast<std::size_t>(n));
    std::memcpy(data.data(), bytes.data() + at, static_cast<std::size_t>(n) * 4);
    all.emplace_back(name, Tensor::from(std::move(shape), std::move(data)));
  }

  std::string config_text;
  std::uint64_t config_len = 0;
  Tensor config_tensor;
  for (auto& [name, t] : all) {
    if (name == "__meta/step") {
      c.step = u64_from(t, 0);
    } else if (name == "__meta/rng") {
      for (int i = 0; i < 4; ++i) c.rng_state[static_cast<std::size_t>(i)] = u64_from(t, i);
    } else if (name == "__meta/config_len") {
      config_len = u64_from(t, 0);
    } else if (name == "__meta/config") {
      config_tensor = t;
    } else {
      c.tensors.emplace_back(name, t);
    }
  }
  if (config_tensor.defined()) c.config_text = text_from(config_tensor, config_len);
  return c;
}

}  // namespace uc
