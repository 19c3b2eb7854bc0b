// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace uc {

const char* shape_word(ShapeKind k) {
  switch (k) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Rect: return "rectangle";
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::Figure: return "figure";
  }
  return "shape";
}

namespace {

struct Segment {
  float x0, y0, x1, y1;
};

// Limbs of the stick figure for scale s around (cx, cy).
std::vector<Segment> figure_segments(float cx, float cy, float s) {
  return {
      {cx, cy - 0.45f * s, cx, cy + 0.30f * s},                  // spine
      {cx, cy - 0.25f * s, cx - 0.50f * s, cy + 0.05f * s},      // left arm
      {cx, cy - 0.25f * s, cx + 0.50f * s, cy + 0.05f * s},      // right arm
      {cx, cy + 0.30f * s, cx - 0.40f * s, cy + 0.90f * s},      // left leg
      {cx, cy + 0.30f * s, cx + 0.40f * s, cy + 0.90f * s},      // right leg
  };
}

float dist2_to_segment(float px, float py, const Segment& seg) {
  const float dx = seg.x1 - seg.x0;
  const float dy = seg.y1 - seg.y0;
  const float len2 = dx * dx + dy * dy;
  float t = len2 > 0.0f ? ((px - seg.x0) * dx + (py - seg.y0) * dy) / len2 : 0.0f;
  t = std::clamp(t, 0.0f, 1.0f);
  const float qx = seg.x0 + t * dx;
  const float qy = seg.y0 + t * dy;
  return (px - qx) * (px - qx) + (py - qy) * (py - qy);
}

float figure_thickness(float s) { return std::max(0.7f, 0.1f * s); }

}  // namespace

bool Primitive::covers(float px, float py) const {
  switch (kind) {
    case ShapeKind::Circle: {
      const float dx = px - cx, dy = py - cy;
      return dx * dx + dy * dy <= a * a;
    }
    case ShapeKind::Rect:
      return std::abs(px - cx) <= a && std::abs(py - cy) <= b;
    case ShapeKind::Triangle: {
      // Isoceles, apex up: (cx, cy-b), (cx-a, cy+b), (cx+a, cy+b).
      if (py < cy - b || py > cy + b) return false;
      const float frac = (py - (cy - b)) / (2.0f * b);  // 0 at apex, 1 at base
      return std::abs(px - cx) <= frac * a;
    }
    case ShapeKind::Figure: {
      const float s = a;
      const float head_r = 0.35f * s;
      const float hx = cx, hy = cy - 0.80f * s;
      if ((px - hx) * (px - hx) + (py - hy) * (py - hy) <= head_r * head_r) return true;
      const float th = figure_thickness(s);
      for (const auto& seg : figure_segments(cx, cy, s)) {
        if (dist2_to_segment(px, py, seg) <= th * th) return true;
      }
      return false;
    }
  }
  return false;
}

void Primitive::bounds(int canvas, int& x0, int& y0, int& x1, int& y1) const {
  float fx0, fy0, fx1, fy1;
  switch (kind) {
    case ShapeKind::Circle:
      fx0 = cx - a; fx1 = cx + a; fy0 = cy - a; fy1 = cy + a;
      break;
    case ShapeKind::Rect:
      fx0 = cx - a; fx1 = cx + a; fy0 = cy - b; fy1 = cy + b;
      break;
    case ShapeKind::Triangle:
      fx0 = cx - a; fx1 = cx + a; fy0 = cy - b; fy1 = cy + b;
      break;
    case ShapeKind::Figure: {
      const float s = a;
      const float th = figure_thickness(s);
      fx0 = cx - 0.50f * s - th; fx1 = cx + 0.50f * s + th;
      fy0 = cy - 0.80f * s - 0.35f * s - th;
      fy1 = cy + 0.90f * s + th;
      break;
    }
    default:
      fx0 = fy0 = 0; fx1 = fy1 = 0;
  }
  x0 = std::clamp(static_cast<int>(std::lround(fx0)), 0, canvas - 1);
  y0 = std::clamp(static_cast<int>(std::lround(fy0)), 0, canvas - 1);
  x1 = std::clamp(static_cast<int>(std::lround(fx1)), 0, canvas - 1);
  y1 = std::clamp(static_cast<int>(std::lround(fy1)), 0, canvas - 1);
}

std::vector<int> owner_map(const Scene& scene) {
  const int S = scene.size;
  std::vector<int> owner(static_cast<std::size_t>(S) * S, -1);
  for (std::size_t p = 0; p < scene.prims.size(); ++p) {
    const Primitive& prim = scene.prims[p];
    int x0, y0, x1, y1;
    prim.bounds(S, x0, y0, x1, y1);
    for (int i = y0; i <= y1; ++i) {
      for (int j = x0; j <= x1; ++j) {
        if (prim.covers(static_cast<float>(j) + 0.5f, static_cast<float>(i) + 0.5f)) {
          owner[static_cast<std::size_t>(i) * S + j] = static_cast<int>(p);
        }
      }
    }
  }
  return owner;
}

Tensor render_scene(const Scene& scene) {
  const int S = scene.size;
  Tensor img = Tensor::zeros({3, S, S});
  auto v = img.values_mut();
  const auto owner = owner_map(scene);
  const PaletteColor& bg = kBackgroundPalette[scene.bg_color];
  const std::size_t plane = static_cast<std::size_t>(S) * S;
  for (std::size_t i = 0; i < plane; ++i) {
    const int o = owner[i];
    const PaletteColor& c = o < 0 ? bg : kForegroundPalette[scene.prims[static_cast<std::size_t>(o)].color];
    v[i] = c.r;
    v[plane + i] = c.g;
    v[2 * plane + i] = c.b;
  }
  return img;
}

std::string prompt_for(const Scene& scene) {
  std::string p = "a ";
  for (std::size_t i = 0; i < scene.prims.size(); ++i) {
    if (i > 0) p += (i + 1 == scene.prims.size()) ? " and a " : ", a ";
    const Primitive& prim = scene.prims[i];
    p += std::string(kForegroundPalette[prim.color].word) + " " + shape_word(prim.kind);
  }
  p += std::string(" on a ") + kBackgroundPalette[scene.bg_color].word + " background";
  return p;
}

SceneBundle synth_scene(std::uint64_t seed, int canvas_size) {
  if (canvas_size < 8) throw std::invalid_argument("canvas size must be >= 8");
  Xoshiro256pp rng(seed);  // seeds the xoshiro state through SplitMix64
  const float S = static_cast<float>(canvas_size);

  Scene scene;
  scene.size = canvas_size;
  scene.bg_color = static_cast<int>(rng.below(kBackgroundColors));

  const int want = 1 + static_cast<int>(rng.below(4));
  std::vector<std::array<int, 4>> taken;  // x0,y0,x1,y1 with 1px gap
  for (int n = 0; n < want; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < 16 && !placed; ++attempt) {
      Primitive prim;
      prim.kind = static_cast<ShapeKind>(rng.below(4));
      prim.color = static_cast<int>(rng.below(kForegroundColors));
      prim.a = static_cast<float>(rng.uniform(0.10, 0.20)) * S;
      prim.b = static_cast<float>(rng.uniform(0.10, 0.20)) * S;
      if (prim.kind == ShapeKind::Figure) prim.a = static_cast<float>(rng.uniform(0.12, 0.22)) * S;
      // Keep the whole primitive inside the canvas with a small margin.
      const float margin = (prim.kind == ShapeKind::Figure) ? 1.3f * prim.a : std::max(prim.a, prim.b) + 1.0f;
      if (2.0f * margin >= S - 2.0f) continue;
      prim.cx = static_cast<float>(rng.uniform(margin + 1.0, S - margin - 1.0));
      prim.cy = static_cast<float>(rng.uniform(margin + 1.0, S - margin - 1.0));
      prim.z = static_cast<int>(scene.prims.size());
      int x0, y0, x1, y1;
      prim.bounds(canvas_size, x0, y0, x1, y1);
      bool overlap = false;
      for (const auto& t : taken) {
        if (x0 <= t[2] + 1 && x1 >= t[0] - 1 && y0 <= t[3] + 1 && y1 >= t[1] - 1) {
          overlap = true;
          break;
        }
      }
      if (overlap) continue;
      taken.push_back({x0, y0, x1, y1});
      scene.prims.push_back(prim);
      placed = true;
    }
  }
  if (scene.prims.empty()) {
    // Degenerate draw sequence: guarantee at least one primitive.
    Primitive prim;
    prim.kind = ShapeKind::Circle;
    prim.color = static_cast<int>(rng.below(kForegroundColors));
    prim.a = prim.b = 0.12f * S;
    prim.cx = prim.cy = S / 2.0f;
    prim.z = 0;
    scene.prims.push_back(prim);
  }

  SceneBundle out;
  out.scene = scene;
  out.image = render_scene(scene);
  out.prompt = prompt_for(scene);
  return out;
}

}  // namespace uc
