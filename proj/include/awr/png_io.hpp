#pragma once

#include <string>

#include "awr/tensor.hpp"

namespace awr {

// 8-bit RGB PNG <-> (h, w, 3) tensor in [0,1]. Reading accepts gray,
// gray+alpha, palette, RGB and RGBA sources and converts to RGB.
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& image);

// Quantize to the 8-bit grid the PNG writer uses; write_png(read_png(p))
// is lossless for images already on the grid.
Tensor quantize8(const Tensor& image);

}  // namespace awr
