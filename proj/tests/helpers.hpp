#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "nicrb/image.hpp"
#include "nicrb/tensor.hpp"

namespace testutil {

inline std::vector<double> random_vec(std::size_t n, std::uint64_t seed,
                                      double lo = 0.0, double hi = 1.0) {
    std::uint64_t s = seed;
    std::vector<double> v(n);
    for (auto& x : v) x = lo + (hi - lo) * nicrb::ad::uniform01(s);
    return v;
}

inline nicrb::Image random_image(int c, int h, int w, std::uint64_t seed) {
    nicrb::Image im(c, h, w);
    im.data = random_vec(im.numel(), seed);
    return im;
}

// max relative error between reverse-mode gradient and central finite
// differences of a scalar-valued graph builder
inline double grad_check(
    const std::function<nicrb::ad::Tensor(const nicrb::ad::Tensor&)>& f,
    const std::vector<int>& shape, const std::vector<double>& x0,
    double h = 1e-4) {
    using nicrb::ad::Tensor;
    Tensor leaf = Tensor::leaf(shape, x0, true);
    Tensor loss = f(leaf);
    nicrb::ad::backward(loss);
    std::vector<double> g = leaf.grad();
    double worst = 0.0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        std::vector<double> xp = x0, xm = x0;
        xp[i] += h;
        xm[i] -= h;
        double fp = f(Tensor::leaf(shape, xp, false)).item();
        double fm = f(Tensor::leaf(shape, xm, false)).item();
        double fd = (fp - fm) / (2.0 * h);
        double denom = std::max({std::fabs(fd), std::fabs(g[i]), 1.0});
        worst = std::max(worst, std::fabs(fd - g[i]) / denom);
    }
    return worst;
}

}  // namespace testutil
