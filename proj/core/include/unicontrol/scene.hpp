// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unicontrol/rng.hpp"
#include "unicontrol/tensor.hpp"

namespace uc {

// [-1,1] RGB palette. Foreground colors are disjoint from background colors
// so shapes are always visible and recoverable by nearest-color
// quantization.
struct PaletteColor {
  const char* word;
  float r, g, b;
};
inline constexpr PaletteColor kForegroundPalette[] = {
    {"red", 1.0f, -1.0f, -1.0f},    {"green", -1.0f, 1.0f, -1.0f},
    {"blue", -1.0f, -1.0f, 1.0f},   {"yellow", 1.0f, 1.0f, -1.0f},
    {"magenta", 1.0f, -1.0f, 1.0f}, {"cyan", -1.0f, 1.0f, 1.0f},
};
inline constexpr PaletteColor kBackgroundPalette[] = {
    {"black", -1.0f, -1.0f, -1.0f},
    {"white", 1.0f, 1.0f, 1.0f},
    {"gray", 0.0f, 0.0f, 0.0f},
};
inline constexpr int kForegroundColors = 6;
inline constexpr int kBackgroundColors = 3;

enum class ShapeKind { Circle, Rect, Triangle, Figure };
const char* shape_word(ShapeKind k);

struct Primitive {
  ShapeKind kind;
  int color;          // foreground palette index
  float cx, cy;       // pixel coordinates
  float a, b;         // half extents (radius, half-width/height, scale)
  int z;              // draw order rank; equals index in Scene::prims

  // Geometric pixel-space bounding box (inclusive pixel coordinates).
  void bounds(int canvas, int& x0, int& y0, int& x1, int& y1) const;
  bool covers(float px, float py) const;
};

struct Scene {
  int size = 32;
  int bg_color = 0;  // background palette index
  std::vector<Primitive> prims;
};

struct SceneBundle {
  Scene scene;
  Tensor image;        // [3,S,S] in [-1,1]
  std::string prompt;  // mentions every primitive's color and shape word
};

// Procedural scene: 1-4 non-overlapping primitives drawn with the fixed RNG
// discipline (xoshiro256++ seeded through SplitMix64), no antialiasing.
SceneBundle synth_scene(std::uint64_t seed, int canvas_size);

Tensor render_scene(const Scene& scene);

// Visible owner per pixel: -1 background, else primitive index.
std::vector<int> owner_map(const Scene& scene);

std::string prompt_for(const Scene& scene);

}  // namespace uc
