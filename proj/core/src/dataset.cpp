// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "unicontrol/crc32.hpp"
#include "unicontrol/scene.hpp"

namespace fs = std::filesystem;

namespace uc {
namespace {

constexpr std::uint32_t kRecordMagic = 0x53444355u;  // "UCDS" little-endian
constexpr std::uint32_t kRecordVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

void put_tensor(std::vector<std::uint8_t>& out, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (int e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  put_bytes(out, t.values().data(), t.values().size() * 4);
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  const std::string& origin;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > bytes.size()) {
      throw std::runtime_error(origin + ": truncated " + what + " at byte offset " +
                               std::to_string(pos));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  Tensor tensor(const char* what) {
    const std::uint32_t rank = u32(what);
    if (rank > 8) {
      throw std::runtime_error(origin + ": implausible tensor rank " + std::to_string(rank) +
                               " at byte offset " + std::to_string(pos - 4));
    }
    std::vector<int> shape;
    std::int64_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t e = u32(what);
      shape.push_back(static_cast<int>(e));
      n *= e;
    }
    need(static_cast<std::size_t>(n) * 4, what);
    std::vector<float> data(static_cast<std::size_t>(n));
    std::memcpy(data.data(), bytes.data() + pos, static_cast<std::size_t>(n) * 4);
    pos += static_cast<std::size_t>(n) * 4;
    return Tensor::from(std::move(shape), std::move(data));
  }
};

}  // namespace

std::vector<std::uint8_t> encode_record(const Record& r) {
  std::vector<std::uint8_t> out;
  put_u32(out, kRecordMagic);
  put_u32(out, kRecordVersion);
  put_string(out, r.prompt);
  put_string(out, r.task_key);
  put_tensor(out, r.image);
  put_tensor(out, r.cond);
  return out;
}

Record decode_record(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  Reader rd{bytes, origin};
  if (rd.u32("magic") != kRecordMagic) {
    throw std::runtime_error(origin + ": bad magic at byte offset 0 (expected \"UCDS\")");
  }
  const std::uint32_t version = rd.u32("version");
  if (version != kRecordVersion) {
    throw std::runtime_error(origin + ": unsupported record version " + std::to_string(version) +
                             " at byte offset 4");
  }
  Record r;
  r.prompt = rd.str("prompt");
  r.task_key = rd.str("task key");
  r.image = rd.tensor("image tensor");
  r.cond = rd.tensor("condition tensor");
  return r;
}

Record load_record(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open record " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_record(bytes, path);
}

std::string Manifest::to_text() const {
  std::string out;
  for (const auto& e : entries) {
    out += std::to_string(e.index) + "\t" + e.file + "\t" + e.task + "\t" +
           std::to_string(e.seed) + "\t" + std::to_string(e.crc) + "\n";
  }
  return out;
}

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string seed_str, crc_str;
    if (!std::getline(ls, seed_str, '\t')) throw std::runtime_error("malformed manifest line: " + line);
    e.index = std::stoi(seed_str);
    if (!std::getline(ls, e.file, '\t') || !std::getline(ls, e.task, '\t') ||
        !std::getline(ls, seed_str, '\t') || !std::getline(ls, crc_str, '\t')) {
      throw std::runtime_error("malformed manifest line: " + line);
    }
    e.seed = std::stoull(seed_str);
    e.crc = static_cast<std::uint32_t>(std::stoul(crc_str));
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest write_dataset(const std::string& out_dir, int count, std::uint64_t seed,
                       const std::vector<std::string>& tasks, const DatagenConfig& cfg,
                       int threads) {
  if (count < 1) throw std::invalid_argument("write_dataset: count must be >= 1");
  if (tasks.empty()) throw std::invalid_argument("write_dataset: no tasks given");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create dataset directory " + out_dir + ": " + ec.message());

  const int K = static_cast<int>(tasks.size());
  std::vector<ManifestEntry> entries(static_cast<std::size_t>(count) * K);

  const auto worker = [&](int begin, int end) {
    for (int s = begin; s < end; ++s) {
      const std::uint64_t sample_seed = splitmix64_once(seed ^ static_cast<std::uint64_t>(s));
      const SceneBundle bundle = synth_scene(sample_seed, cfg.canvas);
      for (int k = 0; k < K; ++k) {
        const std::string& task = tasks[static_cast<std::size_t>(k)];
        Xoshiro256pp rng(splitmix64_once(sample_seed ^ fnv1a64(task.data(), task.size())));
        Record r;
        r.prompt = bundle.prompt;
        r.task_key = task;
        r.image = bundle.image;
        r.cond = derive_condition(bundle.scene, bundle.image, task, rng, cfg);
        r.seed = sample_seed;

        const int index = s * K + k;
        char name[64];
        std::snprintf(name, sizeof(name), "r%06d_%s.ucds", index, task.c_str());
        const auto bytes = encode_record(r);
        const fs::path path = fs::path(out_dir) / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed: " + path.string());

        ManifestEntry& e = entries[static_cast<std::size_t>(index)];
        e.index = index;
        e.file = name;
        e.task = task;
        e.seed = sample_seed;
        e.crc = crc32(bytes.data(), bytes.size());
      }
    }
  };

  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    worker(0, count);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (count + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int begin = t * chunk;
      const int end = std::min(count, begin + chunk);
      if (begin < end) pool.emplace_back(worker, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  Manifest manifest;
  manifest.entries = std::move(entries);
  const fs::path mpath = fs::path(out_dir) / "MANIFEST.tsv";
  std::ofstream mout(mpath, std::ios::binary);
  if (!mout) throw std::runtime_error("cannot open " + mpath.string() + " for writing");
  const std::string text = manifest.to_text();
  mout.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!mout) throw std::runtime_error("write failed: " + mpath.string());
  return manifest;
}

const std::vector<int>& Dataset::task_records(const std::string& key) const {
  auto it = by_task.find(key);
  if (it == by_task.end() || it->second.empty()) {
    throw std::out_of_range("dataset has no records for task \"" + key + "\"");
  }
  return it->second;
}

Dataset load_dataset(const std::string& dir) {
  const fs::path mpath = fs::path(dir) / "MANIFEST.tsv";
  std::ifstream min(mpath, std::ios::binary);
  if (!min) throw std::runtime_error("cannot open manifest " + mpath.string());
  std::stringstream buf;
  buf << min.rdbuf();
  const Manifest manifest = Manifest::parse(buf.str());

  Dataset ds;
  ds.records.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    Record r = load_record((fs::path(dir) / e.file).string());
    r.seed = e.seed;
    ds.by_task[r.task_key].push_back(static_cast<int>(ds.records.size()));
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace uc
