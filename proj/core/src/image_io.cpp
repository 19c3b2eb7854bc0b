// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "unicontrol/dataset.hpp"

namespace uc {

void write_ppm_grid(const std::string& path, const std::vector<Tensor>& images, int cols) {
  if (images.empty()) throw std::invalid_argument("write_ppm_grid: no images");
  const int S = images.front().dim(1);
  for (const auto& t : images) {
    if (t.rank() != 3 || t.dim(0) != 3 || t.dim(1) != S || t.dim(2) != S) {
      throw std::invalid_argument("write_ppm_grid: images must all be [3," + std::to_string(S) +
                                  "," + std::to_string(S) + "]");
    }
  }
  cols = std::max(1, std::min(cols, static_cast<int>(images.size())));
  const int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
  const int W = cols * S, H = rows * S;
  std::vector<unsigned char> pix(static_cast<std::size_t>(W) * H * 3, 0);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const int gr = static_cast<int>(n) / cols;
    const int gc = static_cast<int>(n) % cols;
    const auto v = images[n].values();
    const std::size_t plane = static_cast<std::size_t>(S) * S;
    for (int i = 0; i < S; ++i) {
      for (int j = 0; j < S; ++j) {
        const std::size_t src = static_cast<std::size_t>(i) * S + j;
        const std::size_t dst = (static_cast<std::size_t>(gr * S + i) * W + (gc * S + j)) * 3;
        for (int c = 0; c < 3; ++c) {
          const float x = std::clamp(v[static_cast<std::size_t>(c) * plane + src], -1.0f, 1.0f);
          pix[dst + static_cast<std::size_t>(c)] =
              static_cast<unsigned char>(std::lround((x + 1.0f) * 127.5f));
        }
      }
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P6\n" << W << " " << H << "\n255\n";
  out.write(reinterpret_cast<const char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_tensor_file(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
  out.write(reinterpret_cast<const char*>(&rank), 4);
  for (int e : t.shape()) {
    const std::uint32_t ext = static_cast<std::uint32_t>(e);
    out.write(reinterpret_cast<const char*>(&ext), 4);
  }
  out.write(reinterpret_cast<const char*>(t.values().data()),
            static_cast<std::streamsize>(t.values().size() * 4));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Tensor read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::uint32_t rank = 0;
  in.read(reinterpret_cast<char*>(&rank), 4);
  if (!in || rank > 8) throw std::runtime_error(path + ": not a raw tensor file");
  std::vector<int> shape;
  std::int64_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t e = 0;
    in.read(reinterpret_cast<char*>(&e), 4);
    if (!in) throw std::runtime_error(path + ": truncated extents");
    shape.push_back(static_cast<int>(e));
    n *= e;
  }
  std::vector<float> data(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * 4));
  if (!in) throw std::runtime_error(path + ": truncated payload");
  return Tensor::from(std::move(shape), std::move(data));
}

Tensor load_condition_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  in.close();
  if (std::memcmp(magic, "UCDS", 4) == 0) {
    return load_record(path).cond;
  }
  return read_tensor_file(path);
}

}  // namespace uc
