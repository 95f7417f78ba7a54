#pragma once

#include <string>

#include "glamor/tensor.hpp"

namespace glamor {

// Binary PPM (P6) / PGM (P5), 8-bit only. Pixel values map to [0,1] as k/255.
// Images are [3,H,W] (PPM) or [H,W] (PGM) float tensors.

TensorF load_ppm(const std::string& path);
void save_ppm(const TensorF& image, const std::string& path);

TensorF load_pgm(const std::string& path);
void save_pgm(const TensorF& image, const std::string& path);

// Bilinear resample with half-pixel centers: source coordinate of output
// pixel i is (i + 0.5) * in/out - 0.5, clamped to the valid range.
TensorF resize_bilinear(const TensorF& image, int64_t out_h, int64_t out_w);

// Zeroes the axis-aligned rectangle (x,y,w,h) in every channel.
TensorF mask_rect(const TensorF& image, int64_t x, int64_t y, int64_t w, int64_t h);

// Copies the rectangle out of the image.
TensorF crop(const TensorF& image, int64_t x, int64_t y, int64_t w, int64_t h);

} // namespace glamor
