#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nicrb/tensor.hpp"

namespace nicrb {

// Planar image, channels x height x width, values in [0,1].
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;  // [c][y][x]

    Image() = default;
    Image(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t numel() const { return data.size(); }
    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    bool same_shape(const Image& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    ad::Tensor to_tensor(bool requires_grad = false) const {
        return ad::Tensor::leaf({channels, height, width}, data,
                                requires_grad);
    }
    static Image from_tensor(const ad::Tensor& t) {
        if (t.shape().size() != 3)
            throw ad::TensorError("from_tensor: expected [C,H,W]");
        Image im(t.shape()[0], t.shape()[1], t.shape()[2]);
        im.data = t.data();
        return im;
    }
};

// PNG (8/16-bit, gray or RGB) and binary PPM. Values scaled to [0,1].
Image load_image(const std::string& path);
// 16-bit RGB PNG
void save_png16(const Image& im, const std::string& path);

double linf_norm(const Image& a, const Image& b);
double l2_norm(const Image& a, const Image& b);

}  // namespace nicrb
