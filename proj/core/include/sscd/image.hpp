#pragma once

#include <string>

#include "sscd/tensor.hpp"

namespace sscd {

// Images are channel-major float tensors (3,H,W) with values in [0,1].
// Label masks are (H,W) uint8 with values {0,1}.

Tensor<float> load_image_rgb(const std::string& path);
Tensor<std::uint8_t> load_mask(const std::string& path);

void save_image_rgb(const std::string& path, const Tensor<float>& chw);
void save_mask(const std::string& path, const Tensor<std::uint8_t>& mask);
void save_rgb8(const std::string& path, const Tensor<std::uint8_t>& hwc);

// Half-pixel-center bilinear resize, matching the network's feature upsample.
Tensor<float> resize_bilinear(const Tensor<float>& chw, int out_h, int out_w);
Tensor<std::uint8_t> resize_nearest(const Tensor<std::uint8_t>& mask, int out_h,
                                    int out_w);

Tensor<float> crop(const Tensor<float>& chw, int top, int left, int height,
                   int width);
Tensor<std::uint8_t> crop(const Tensor<std::uint8_t>& mask, int top, int left,
                          int height, int width);

Tensor<float> hflip(const Tensor<float>& chw);
Tensor<std::uint8_t> hflip(const Tensor<std::uint8_t>& mask);

// Mirror padding without repeating the border pixel.
Tensor<float> reflect_pad(const Tensor<float>& chw, int top, int bottom,
                          int left, int right);
Tensor<std::uint8_t> reflect_pad(const Tensor<std::uint8_t>& mask, int top,
                                 int bottom, int left, int right);

// Separable Gaussian blur with reflected borders; kernel radius ceil(3*sigma).
Tensor<float> gaussian_blur(const Tensor<float>& chw, double sigma);

Tensor<float> clamp01(Tensor<float> chw);

// Photometric transforms; factor 1 is the identity for each. Brightness
// scales values, contrast blends with the global gray mean, saturation blends
// each pixel with its own gray value. Results are clamped to [0,1].
Tensor<float> adjust_brightness(const Tensor<float>& chw, double factor);
Tensor<float> adjust_contrast(const Tensor<float>& chw, double factor);
Tensor<float> adjust_saturation(const Tensor<float>& chw, double factor);

}  // namespace sscd
