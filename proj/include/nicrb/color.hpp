#pragma once

#include <array>

#include "nicrb/image.hpp"
#include "nicrb/tensor.hpp"

namespace nicrb::color {

// BT.601 full-range RGB <-> YCbCr (Cb/Cr offset by +0.5)
Image rgb_to_ycbcr(const Image& rgb);
Image ycbcr_to_rgb(const Image& ycbcr);

// sRGB (D65) <-> CIE Lab; input in [0,1], Lab in native units
Image rgb_to_lab(const Image& rgb);
Image lab_to_rgb(const Image& lab);

double ciede2000(const std::array<double, 3>& lab1,
                 const std::array<double, 3>& lab2);

// graph versions for differentiable losses / attacks
ad::Tensor rgb_to_ycbcr_g(const ad::Tensor& rgb);
ad::Tensor luma_g(const ad::Tensor& rgb);  // Y channel only, [1,H,W]
ad::Tensor rgb_to_lab_g(const ad::Tensor& rgb);
ad::Tensor lab_to_rgb_g(const ad::Tensor& lab);

}  // namespace nicrb::color
