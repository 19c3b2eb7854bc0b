// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace uc {
namespace {

Tensor replicate3(const std::vector<float>& plane, int S) {
  Tensor t = Tensor::zeros({3, S, S});
  auto v = t.values_mut();
  const std::size_t n = plane.size();
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = plane[i];
    v[n + i] = plane[i];
    v[2 * n + i] = plane[i];
  }
  return t;
}

std::vector<float> luma(const Tensor& image) {
  const int S = image.dim(1);
  const std::size_t plane = static_cast<std::size_t>(S) * S;
  const auto v = image.values();
  std::vector<float> g(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    g[i] = 0.299f * v[i] + 0.587f * v[plane + i] + 0.114f * v[2 * plane + i];
  }
  return g;
}

}  // namespace

std::vector<float> canny_edges(const Tensor& image, double low_frac, double high_frac) {
  const int S = image.dim(1);
  const auto gray = luma(image);
  const auto at = [&](int i, int j) {
    i = std::clamp(i, 0, S - 1);
    j = std::clamp(j, 0, S - 1);
    return gray[static_cast<std::size_t>(i) * S + j];
  };
  std::vector<float> gx(gray.size()), gy(gray.size()), mag(gray.size());
  float max_mag = 0.0f;
  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < S; ++j) {
      const float sx = (at(i - 1, j + 1) + 2.0f * at(i, j + 1) + at(i + 1, j + 1)) -
                       (at(i - 1, j - 1) + 2.0f * at(i, j - 1) + at(i + 1, j - 1));
      const float sy = (at(i + 1, j - 1) + 2.0f * at(i + 1, j) + at(i + 1, j + 1)) -
                       (at(i - 1, j - 1) + 2.0f * at(i - 1, j) + at(i - 1, j + 1));
      const std::size_t idx = static_cast<std::size_t>(i) * S + j;
      gx[idx] = sx;
      gy[idx] = sy;
      mag[idx] = std::sqrt(sx * sx + sy * sy);
      max_mag = std::max(max_mag, mag[idx]);
    }
  }
  std::vector<float> out(gray.size(), 0.0f);
  if (max_mag <= 0.0f) return out;

  // Non-max suppression along the quantized gradient direction.
  std::vector<float> nms(gray.size(), 0.0f);
  const auto mag_at = [&](int i, int j) {
    if (i < 0 || i >= S || j < 0 || j >= S) return 0.0f;
    return mag[static_cast<std::size_t>(i) * S + j];
  };
  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < S; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * S + j;
      if (mag[idx] <= 0.0f) continue;
      const float angle = std::atan2(gy[idx], gx[idx]);
      // Quantize to 0, 45, 90, 135 degrees.
      const int sector = static_cast<int>(std::lround(angle / 0.78539816339744831)) & 3;
      int di = 0, dj = 0;
      switch (sector) {
        case 0: di = 0; dj = 1; break;   // horizontal gradient
        case 1: di = 1; dj = 1; break;
        case 2: di = 1; dj = 0; break;   // vertical gradient
        case 3: di = 1; dj = -1; break;
      }
      if (mag[idx] >= mag_at(i + di, j + dj) && mag[idx] >= mag_at(i - di, j - dj)) {
        nms[idx] = mag[idx];
      }
    }
  }

  const float low = static_cast<float>(low_frac) * max_mag;
  const float high = static_cast<float>(high_frac) * max_mag;
  std::deque<std::pair<int, int>> queue;
  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < S; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * S + j;
      if (nms[idx] >= high) {
        out[idx] = 1.0f;
        queue.emplace_back(i, j);
      }
    }
  }
  // Hysteresis: grow strong edges through weak neighbors (8-connected).
  while (!queue.empty()) {
    const auto [ci, cj] = queue.front();
    queue.pop_front();
    for (int di = -1; di <= 1; ++di) {
      for (int dj = -1; dj <= 1; ++dj) {
        const int ni = ci + di, nj = cj + dj;
        if (ni < 0 || ni >= S || nj < 0 || nj >= S) continue;
        const std::size_t nidx = static_cast<std::size_t>(ni) * S + nj;
        if (out[nidx] == 0.0f && nms[nidx] >= low) {
          out[nidx] = 1.0f;
          queue.emplace_back(ni, nj);
        }
      }
    }
  }
  return out;
}

std::vector<float> boundary_map(const Scene& scene) {
  const int S = scene.size;
  const auto owner = owner_map(scene);
  std::vector<float> out(owner.size(), 0.0f);
  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < S; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * S + j;
      if (owner[idx] < 0) continue;  // boundary is marked on the shape side
      const int di[] = {-1, 1, 0, 0};
      const int dj[] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const int ni = i + di[k], nj = j + dj[k];
        if (ni < 0 || ni >= S || nj < 0 || nj >= S) continue;
        if (owner[static_cast<std::size_t>(ni) * S + nj] != owner[idx]) {
          out[idx] = 1.0f;
          break;
        }
      }
    }
  }
  return out;
}

std::vector<double> gaussian_kernel_1d(double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("sketch sigma must be >= 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  if (radius == 0) {
    k[0] = 1.0;
    return k;
  }
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

Tensor make_sketch(const Tensor& edge_map, double sigma, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw std::invalid_argument("sketch threshold must be in (0,1)");
  }
  const auto kernel = gaussian_kernel_1d(sigma);  // validates sigma
  const int radius = static_cast<int>(kernel.size()) / 2;
  const int C = edge_map.dim(0);
  const int H = edge_map.dim(1);
  const int W = edge_map.dim(2);
  Tensor out = Tensor::zeros(edge_map.shape());
  const auto src = edge_map.values();
  auto dst = out.values_mut();
  std::vector<double> tmp(static_cast<std::size_t>(H) * W);
  for (int c = 0; c < C; ++c) {
    const std::size_t off = static_cast<std::size_t>(c) * H * W;
    // Horizontal then vertical pass, zero padding.
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int jj = j + k;
          if (jj < 0 || jj >= W) continue;
          s += kernel[static_cast<std::size_t>(k + radius)] * src[off + static_cast<std::size_t>(i) * W + jj];
        }
        tmp[static_cast<std::size_t>(i) * W + j] = s;
      }
    }
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int ii = i + k;
          if (ii < 0 || ii >= H) continue;
          s += kernel[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(ii) * W + j];
        }
        dst[off + static_cast<std::size_t>(i) * W + j] = s >= threshold ? 1.0f : 0.0f;
      }
    }
  }
  return out;
}

std::vector<float> depth_map(const Scene& scene) {
  const auto owner = owner_map(scene);
  const float P = static_cast<float>(scene.prims.size());
  std::vector<float> d(owner.size(), 0.0f);
  for (std::size_t i = 0; i < owner.size(); ++i) {
    if (owner[i] >= 0) d[i] = (static_cast<float>(owner[i]) + 1.0f) / P;
  }
  return d;
}

Tensor normals_from_depth(const std::vector<float>& depth, int size, double scale) {
  const int S = size;
  if (depth.size() != static_cast<std::size_t>(S) * S) {
    throw std::invalid_argument("normals_from_depth: depth size mismatch");
  }
  Tensor out = Tensor::zeros({3, S, S});
  auto v = out.values_mut();
  const std::size_t plane = static_cast<std::size_t>(S) * S;
  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < S; ++j) {
      const int jm = std::max(j - 1, 0), jp = std::min(j + 1, S - 1);
      const int im = std::max(i - 1, 0), ip = std::min(i + 1, S - 1);
      const double dx = (depth[static_cast<std::size_t>(i) * S + jp] - depth[static_cast<std::size_t>(i) * S + jm]) / (jp - jm);
      const double dy = (depth[static_cast<std::size_t>(ip) * S + j] - depth[static_cast<std::size_t>(im) * S + j]) / (ip - im);
      double nx = -scale * dx, ny = -scale * dy, nz = 1.0;
      const double inv = 1.0 / std::sqrt(nx * nx + ny * ny + nz * nz);
      const std::size_t idx = static_cast<std::size_t>(i) * S + j;
      v[idx] = static_cast<float>(nx * inv);
      v[plane + idx] = static_cast<float>(ny * inv);
      v[2 * plane + idx] = static_cast<float>(nz * inv);
    }
  }
  return out;
}

OutpaintMask make_outpaint_mask(std::uint64_t seed, double fraction, const Tensor& image) {
  if (fraction < 0.20 || fraction > 0.80) {
    throw std::invalid_argument("outpaint fraction " + std::to_string(fraction) +
                                " outside [0.20, 0.80]");
  }
  const int S = image.dim(1);
  const double total = static_cast<double>(S) * S;
  std::vector<std::pair<int, int>> candidates;
  for (int w = 1; w <= S; ++w) {
    for (int h = 1; h <= S; ++h) {
      const double achieved = 1.0 - (static_cast<double>(w) * h) / total;
      if (std::abs(achieved - fraction) <= 0.02) candidates.emplace_back(w, h);
    }
  }
  if (candidates.empty()) {
    throw std::runtime_error("no outpaint mask achieves fraction " + std::to_string(fraction));
  }
  SplitMix64 sm(seed);
  const auto [w, h] = candidates[static_cast<std::size_t>(sm.next() % candidates.size())];
  const int x0 = (S - w + 1) / 2;
  const int y0 = (S - h + 1) / 2;

  OutpaintMask out;
  out.mask = Tensor::zeros({1, S, S});
  out.masked = Tensor::zeros(image.shape());
  out.achieved_fraction = 1.0 - (static_cast<double>(w) * h) / total;
  auto mv = out.mask.values_mut();
  auto ov = out.masked.values_mut();
  const auto iv = image.values();
  const std::size_t plane = static_cast<std::size_t>(S) * S;
  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < S; ++j) {
      const bool inside = i >= y0 && i < y0 + h && j >= x0 && j < x0 + w;
      const std::size_t idx = static_cast<std::size_t>(i) * S + j;
      mv[idx] = inside ? 0.0f : 1.0f;
      for (int c = 0; c < 3; ++c) {
        ov[static_cast<std::size_t>(c) * plane + idx] = inside ? iv[static_cast<std::size_t>(c) * plane + idx] : 0.0f;
      }
    }
  }
  return out;
}

namespace {

std::vector<float> bbox_outline_map(const Scene& scene) {
  const int S = scene.size;
  std::vector<float> out(static_cast<std::size_t>(S) * S, 0.0f);
  for (const auto& prim : scene.prims) {
    int x0, y0, x1, y1;
    prim.bounds(S, x0, y0, x1, y1);
    for (int j = x0; j <= x1; ++j) {
      out[static_cast<std::size_t>(y0) * S + j] = 1.0f;
      out[static_cast<std::size_t>(y1) * S + j] = 1.0f;
    }
    for (int i = y0; i <= y1; ++i) {
      out[static_cast<std::size_t>(i) * S + x0] = 1.0f;
      out[static_cast<std::size_t>(i) * S + x1] = 1.0f;
    }
  }
  return out;
}

std::vector<float> pose_map(const Scene& scene) {
  // Skeleton rendering: thin limbs plus the head outline, white on black.
  const int S = scene.size;
  std::vector<float> out(static_cast<std::size_t>(S) * S, 0.0f);
  for (const auto& prim : scene.prims) {
    if (prim.kind != ShapeKind::Figure) continue;
    Primitive skel = prim;
    skel.a = prim.a;  // limb coverage with minimal thickness
    int x0, y0, x1, y1;
    skel.bounds(S, x0, y0, x1, y1);
    const float s = prim.a;
    const float head_r = 0.35f * s;
    const float hx = prim.cx, hy = prim.cy - 0.80f * s;
    for (int i = y0; i <= y1; ++i) {
      for (int j = x0; j <= x1; ++j) {
        const float px = static_cast<float>(j) + 0.5f;
        const float py = static_cast<float>(i) + 0.5f;
        const float d2 = (px - hx) * (px - hx) + (py - hy) * (py - hy);
        // Head ring
        const float ring = std::abs(std::sqrt(d2) - head_r);
        bool on = ring <= 0.71f;
        if (!on && skel.covers(px, py) && d2 > head_r * head_r) on = true;
        if (on) out[static_cast<std::size_t>(i) * S + j] = 1.0f;
      }
    }
  }
  return out;
}

}  // namespace

Tensor derive_condition(const Scene& scene, const Tensor& image, const std::string& task,
                        Xoshiro256pp& rng, const DatagenConfig& cfg) {
  const int S = scene.size;
  if (task == "canny") {
    const double lo = rng.uniform(cfg.canny.low_min, cfg.canny.low_max);
    const double hi_min = std::max(cfg.canny.high_min, lo + 1e-6);
    const double hi = rng.uniform(hi_min, std::max(hi_min, cfg.canny.high_max));
    return replicate3(canny_edges(image, lo, hi), S);
  }
  if (task == "hed") {
    return replicate3(boundary_map(scene), S);
  }
  if (task == "hedsketch") {
    const Tensor hed = replicate3(boundary_map(scene), S);
    return make_sketch(hed, cfg.sketch_sigma, cfg.sketch_threshold);
  }
  if (task == "depth") {
    return replicate3(depth_map(scene), S);
  }
  if (task == "normal") {
    return normals_from_depth(depth_map(scene), S, static_cast<double>(S));
  }
  if (task == "seg") {
    const auto owner = owner_map(scene);
    std::vector<float> labels(owner.size());
    for (std::size_t i = 0; i < owner.size(); ++i) labels[i] = static_cast<float>(owner[i] + 1);
    return replicate3(labels, S);
  }
  if (task == "bbox") {
    return replicate3(bbox_outline_map(scene), S);
  }
  if (task == "pose") {
    return replicate3(pose_map(scene), S);
  }
  if (task == "outpainting") {
    const double frac = rng.uniform(cfg.outpaint_min, cfg.outpaint_max);
    return make_outpaint_mask(rng.next(), frac, image).masked;
  }
  throw std::invalid_argument("derive_condition: unknown task \"" + task + "\"");
}

std::vector<int> quantize_to_palette(const Tensor& image) {
  const int S = image.dim(1);
  const std::size_t plane = static_cast<std::size_t>(S) * S;
  const auto v = image.values();
  std::vector<int> out(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const float r = v[i], g = v[plane + i], b = v[2 * plane + i];
    int best = 0;
    float best_d = 1e30f;
    int id = 0;
    const auto consider = [&](const PaletteColor& c) {
      const float d = (r - c.r) * (r - c.r) + (g - c.g) * (g - c.g) + (b - c.b) * (b - c.b);
      if (d < best_d) {
        best_d = d;
        best = id;
      }
      ++id;
    };
    for (const auto& c : kBackgroundPalette) consider(c);
    for (const auto& c : kForegroundPalette) consider(c);
    out[i] = best;
  }
  return out;
}

std::vector<std::uint8_t> foreground_mask_from_image(const Tensor& image) {
  const auto q = quantize_to_palette(image);
  int counts[kBackgroundColors + kForegroundColors] = {};
  for (int id : q) counts[id]++;
  int mode = 0;
  for (int i = 1; i < kBackgroundColors + kForegroundColors; ++i) {
    if (counts[i] > counts[mode]) mode = i;
  }
  std::vector<std::uint8_t> fg(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) fg[i] = q[i] != mode ? 1 : 0;
  return fg;
}

std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& mask, int size) {
  std::vector<std::uint8_t> out(mask.size(), 0);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      if (!mask[static_cast<std::size_t>(i) * size + j]) continue;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          const int ni = i + di, nj = j + dj;
          if (ni < 0 || ni >= size || nj < 0 || nj >= size) continue;
          out[static_cast<std::size_t>(ni) * size + nj] = 1;
        }
      }
    }
  }
  return out;
}

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  if (uni == 0) return 1.0;  // both empty: perfect agreement
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double edge_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, int size) {
  return mask_iou(dilate(a, size), dilate(b, size));
}

std::vector<Box> boxes_from_mask(const std::vector<std::uint8_t>& mask, int size) {
  std::vector<int> comp(mask.size(), -1);
  std::vector<Box> boxes;
  std::deque<int> queue;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || comp[start] >= 0) continue;
    const int id = static_cast<int>(boxes.size());
    Box box{size, size, -1, -1};
    comp[start] = id;
    queue.push_back(static_cast<int>(start));
    while (!queue.empty()) {
      const int cur = queue.front();
      queue.pop_front();
      const int i = cur / size, j = cur % size;
      box.x0 = std::min(box.x0, j);
      box.x1 = std::max(box.x1, j);
      box.y0 = std::min(box.y0, i);
      box.y1 = std::max(box.y1, i);
      const int di[] = {-1, 1, 0, 0};
      const int dj[] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const int ni = i + di[k], nj = j + dj[k];
        if (ni < 0 || ni >= size || nj < 0 || nj >= size) continue;
        const int nidx = ni * size + nj;
        if (mask[static_cast<std::size_t>(nidx)] && comp[static_cast<std::size_t>(nidx)] < 0) {
          comp[static_cast<std::size_t>(nidx)] = id;
          queue.push_back(nidx);
        }
      }
    }
    boxes.push_back(box);
  }
  return boxes;
}

std::vector<std::uint8_t> filled_box_mask(const std::vector<Box>& boxes, int size) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(size) * size, 0);
  for (const auto& b : boxes) {
    for (int i = b.y0; i <= b.y1; ++i) {
      for (int j = b.x0; j <= b.x1; ++j) out[static_cast<std::size_t>(i) * size + j] = 1;
    }
  }
  return out;
}

}  // namespace uc
