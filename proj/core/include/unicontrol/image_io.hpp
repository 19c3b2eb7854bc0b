// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "unicontrol/tensor.hpp"

namespace uc {

// Binary P6 pixmap of a grid of [3,S,S] images in [-1,1].
void write_ppm_grid(const std::string& path, const std::vector<Tensor>& images, int cols);

// Standalone raw tensor file: rank u32 LE, extents u32[], 32-bit LE reals.
void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

// Accepts either a raw tensor file or a dataset record (sniffed by the
// "UCDS" magic); records yield their condition tensor.
Tensor load_condition_file(const std::string& path);

}  // namespace uc
