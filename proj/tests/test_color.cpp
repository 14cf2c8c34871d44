#include <array>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "nicrb/color.hpp"

using namespace nicrb;

namespace {

// published CIEDE2000 reference pairs with expected differences
struct RefPair {
    std::array<double, 3> lab1, lab2;
    double de;
};
const RefPair kPairs[] = {
    {{50.0000, 2.6772, -79.7751}, {50.0000, 0.0000, -82.7485}, 2.042460},
    {{50.0000, 3.1571, -77.2803}, {50.0000, 0.0000, -82.7485}, 2.861510},
    {{50.0000, 2.8361, -74.0200}, {50.0000, 0.0000, -82.7485}, 3.441191},
    {{50.0000, -1.3802, -84.2814}, {50.0000, 0.0000, -82.7485}, 0.999999},
    {{50.0000, -1.1848, -84.8006}, {50.0000, 0.0000, -82.7485}, 1.000005},
    {{50.0000, -0.9009, -85.5211}, {50.0000, 0.0000, -82.7485}, 1.000013},
    {{50.0000, 0.0000, 0.0000}, {50.0000, -1.0000, 2.0000}, 2.366859},
    {{50.0000, -1.0000, 2.0000}, {50.0000, 0.0000, 0.0000}, 2.366859},
    {{50.0000, 2.4900, -0.0010}, {50.0000, -2.4900, 0.0009}, 7.179172},
    {{50.0000, 2.4900, -0.0010}, {50.0000, -2.4900, 0.0010}, 7.179163},
    {{50.0000, -0.0010, 2.4900}, {50.0000, 0.0010, -2.4900}, 4.804525},
    {{50.0000, 2.5000, 0.0000}, {50.0000, 0.0000, -2.5000}, 4.306482},
    {{50.0000, 2.5000, 0.0000}, {73.0000, 25.0000, -18.0000}, 27.149231},
    {{50.0000, 2.5000, 0.0000}, {61.0000, -5.0000, 29.0000}, 22.897692},
    {{50.0000, 2.5000, 0.0000}, {56.0000, -27.0000, -3.0000}, 31.903005},
    {{50.0000, 2.5000, 0.0000}, {58.0000, 24.0000, 15.0000}, 19.453521},
    {{50.0000, 2.5000, 0.0000}, {50.0000, 3.1736, 0.5854}, 1.000026},
    {{50.0000, 2.5000, 0.0000}, {50.0000, 3.2972, 0.0000}, 0.999973},
    {{50.0000, 2.5000, 0.0000}, {50.0000, 1.8634, 0.5757}, 1.000049},
    {{50.0000, 2.5000, 0.0000}, {50.0000, 3.2592, 0.3350}, 1.000035},
    {{60.2574, -34.0099, 36.2677}, {60.4626, -34.1751, 39.4387}, 1.264420},
    {{63.0109, -31.0961, -5.8663}, {62.8187, -29.7946, -4.0864}, 1.262959},
    {{61.2901, 3.7196, -5.3901}, {61.4292, 2.2480, -4.9620}, 1.873071},
    {{35.0831, -44.1164, 3.7933}, {35.0232, -40.0716, 1.5901}, 1.864495},
    {{22.7233, 20.0904, -46.6940}, {23.0331, 14.9730, -42.5619}, 2.037258},
    {{36.4612, 47.8580, 18.3852}, {36.2715, 50.5065, 21.2231}, 1.414578},
    {{90.8027, -2.0831, 1.4410}, {91.1528, -1.6435, 0.0447}, 1.444129},
    {{90.9257, -0.5406, -0.9208}, {88.6381, -0.8985, -0.7239}, 1.538117},
    {{6.7747, -0.2908, -2.4247}, {5.8714, -0.0985, -2.2286}, 0.637728},
    {{2.0776, 0.0795, -1.1350}, {0.9033, -0.0636, -0.5514}, 0.908233},
};

}  // namespace

TEST_CASE("ciede2000 matches the reference pair set") {
    for (const auto& p : kPairs)
        CHECK(std::fabs(color::ciede2000(p.lab1, p.lab2) - p.de) < 1e-3);
}

TEST_CASE("ciede2000 identity and symmetry") {
    for (const auto& p : kPairs) {
        CHECK(color::ciede2000(p.lab1, p.lab1) == 0.0);
        CHECK(color::ciede2000(p.lab1, p.lab2) ==
              doctest::Approx(color::ciede2000(p.lab2, p.lab1))
                  .epsilon(1e-12));
    }
}

TEST_CASE("ycbcr round-trip") {
    Image x = testutil::random_image(3, 7, 9, 5);
    Image back = color::ycbcr_to_rgb(color::rgb_to_ycbcr(x));
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(std::fabs(back.data[i] - x.data[i]) < 1e-9);
}

TEST_CASE("lab round-trip for in-gamut colors") {
    Image x = testutil::random_image(3, 6, 6, 6);
    for (double& v : x.data) v = 0.05 + 0.9 * v;
    Image back = color::lab_to_rgb(color::rgb_to_lab(x));
    // accuracy limited by the rounded published sRGB<->XYZ matrices
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(std::fabs(back.data[i] - x.data[i]) < 1e-6);
}

TEST_CASE("graph color conversions agree with the image-space versions") {
    Image x = testutil::random_image(3, 5, 4, 7);
    for (double& v : x.data) v = 0.05 + 0.9 * v;

    Image ycc = color::rgb_to_ycbcr(x);
    ad::Tensor ycc_g = color::rgb_to_ycbcr_g(x.to_tensor());
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(std::fabs(ycc_g.data()[i] - ycc.data[i]) < 1e-12);

    ad::Tensor y = color::luma_g(x.to_tensor());
    REQUIRE(y.shape() == std::vector<int>{1, 5, 4});
    for (int i = 0; i < 20; ++i)
        CHECK(std::fabs(y.data()[i] - ycc.data[i]) < 1e-12);

    Image lab = color::rgb_to_lab(x);
    ad::Tensor lab_g = color::rgb_to_lab_g(x.to_tensor());
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(std::fabs(lab_g.data()[i] - lab.data[i]) < 1e-9);

    ad::Tensor rgb_g = color::lab_to_rgb_g(lab_g);
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(std::fabs(rgb_g.data()[i] - x.data[i]) < 1e-6);
}

TEST_CASE("luma projection: chroma-only shifts keep Y fixed") {
    Image x = testutil::random_image(3, 4, 4, 8);
    for (double& v : x.data) v = 0.2 + 0.6 * v;
    // add a vector with zero BT.601 luma component
    Image shifted = x;
    for (int i = 0; i < 16; ++i) {
        shifted.at(0, i / 4, i % 4) += 0.587 * 0.02;
        shifted.at(1, i / 4, i % 4) -= 0.299 * 0.02;
    }
    ad::Tensor y0 = color::luma_g(x.to_tensor());
    ad::Tensor y1 = color::luma_g(shifted.to_tensor());
    for (std::size_t i = 0; i < y0.numel(); ++i)
        CHECK(std::fabs(y0.data()[i] - y1.data()[i]) < 1e-12);
}
