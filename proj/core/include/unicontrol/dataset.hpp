// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "unicontrol/conditions.hpp"
#include "unicontrol/tensor.hpp"

namespace uc {

struct Record {
  std::string prompt;
  std::string task_key;
  Tensor image;  // [3,S,S]
  Tensor cond;   // [3,S,S]
  std::uint64_t seed = 0;
};

struct ManifestEntry {
  int index = 0;
  std::string file;
  std::string task;
  std::uint64_t seed = 0;
  std::uint32_t crc = 0;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::string to_text() const;
  static Manifest parse(const std::string& text);
};

// Record file: magic "UCDS", version u32 LE, prompt (u32 length + UTF-8),
// task key (u32 length + bytes), image tensor, condition tensor; tensors as
// (rank u32, extents u32[], 32-bit LE reals).
std::vector<std::uint8_t> encode_record(const Record& r);
Record decode_record(const std::vector<std::uint8_t>& bytes, const std::string& origin);
Record load_record(const std::string& path);

// Writes count scenes x |tasks| records plus MANIFEST.tsv. Per-sample seeds
// are SplitMix64(seed XOR index), so parallel generation (threads > 1)
// produces byte-identical trees.
Manifest write_dataset(const std::string& out_dir, int count, std::uint64_t seed,
                       const std::vector<std::string>& tasks, const DatagenConfig& cfg = {},
                       int threads = 1);

struct Dataset {
  std::vector<Record> records;
  std::map<std::string, std::vector<int>> by_task;

  const std::vector<int>& task_records(const std::string& key) const;
};

Dataset load_dataset(const std::string& dir);

}  // namespace uc
