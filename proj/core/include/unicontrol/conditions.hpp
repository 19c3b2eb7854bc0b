// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unicontrol/rng.hpp"
#include "unicontrol/scene.hpp"
#include "unicontrol/tensor.hpp"

namespace uc {

// Fractions of the maximum gradient magnitude; a low threshold is always
// drawn strictly below the high one.
struct CannyConfig {
  double low_min = 0.05;
  double low_max = 0.20;
  double high_min = 0.20;
  double high_max = 0.50;
};

struct DatagenConfig {
  int canvas = 32;
  CannyConfig canny;
  double sketch_sigma = 1.0;
  double sketch_threshold = 0.15;
  double outpaint_min = 0.20;
  double outpaint_max = 0.80;
};

// All condition maps are [3,S,S]; binary maps hold {0,1} replicated across
// channels, seg holds the label id replicated, normals hold the xyz
// components.
Tensor derive_condition(const Scene& scene, const Tensor& image, const std::string& task,
                        Xoshiro256pp& rng, const DatagenConfig& cfg = {});

// Sobel-magnitude edges with non-max suppression and hysteresis; thresholds
// are fractions of the max gradient magnitude. Returns a binary [S,S] map.
std::vector<float> canny_edges(const Tensor& image, double low_frac, double high_frac);

// Object-boundary map from scene geometry: foreground pixels whose visible
// owner differs from a 4-neighbor.
std::vector<float> boundary_map(const Scene& scene);

// Gaussian blur (truncated at 3 sigma, kernel normalized to sum 1) followed
// by binarization at `threshold`.
Tensor make_sketch(const Tensor& edge_map, double sigma, double threshold);
std::vector<double> gaussian_kernel_1d(double sigma);

// Depth from z-order: background 0, visible primitive (z+1)/P. [S,S].
std::vector<float> depth_map(const Scene& scene);

// Unit normals of a height field by clamped central differences; gradient
// scaled by `scale` before normalization. Input [S,S] row-major, output
// [3,S,S].
Tensor normals_from_depth(const std::vector<float>& depth, int size, double scale);

struct OutpaintMask {
  Tensor mask;    // [1,S,S], 1 on the masked border band
  Tensor masked;  // [3,S,S], image with the band zeroed
  double achieved_fraction = 0.0;
};

// Border band leaving a centered unmasked rectangle; the masked fraction is
// within +-2% of the request. fraction must lie in [0.20, 0.80].
OutpaintMask make_outpaint_mask(std::uint64_t seed, double fraction, const Tensor& image);

// ---- evaluation helpers ----

// Nearest palette color (backgrounds then foregrounds) per pixel.
std::vector<int> quantize_to_palette(const Tensor& image);
// Foreground = pixels whose quantized color differs from the modal color.
std::vector<std::uint8_t> foreground_mask_from_image(const Tensor& image);
std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& mask, int size);
// IoU of the 1px-dilated binary maps.
double edge_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, int size);
double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

struct Box {
  int x0, y0, x1, y1;
};
std::vector<Box> boxes_from_mask(const std::vector<std::uint8_t>& mask, int size);
std::vector<std::uint8_t> filled_box_mask(const std::vector<Box>& boxes, int size);

}  // namespace uc
