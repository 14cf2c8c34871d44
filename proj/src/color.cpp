#include "nicrb/color.hpp"

#include <cmath>

namespace nicrb::color {

namespace {

constexpr double kPi = 3.14159265358979323846;

// D65 reference white
constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;

const std::vector<std::vector<double>> kRgbToYcc = {
    {0.299, 0.587, 0.114},
    {-0.168735892, -0.331264108, 0.5},
    {0.5, -0.418687589, -0.081312411}};
const std::vector<double> kYccOff = {0.0, 0.5, 0.5};
const std::vector<std::vector<double>> kYccToRgb = {
    {1.0, 0.0, 1.402},
    {1.0, -0.344136286, -0.714136286},
    {1.0, 1.772, 0.0}};

const std::vector<std::vector<double>> kLinToXyz = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041}};
const std::vector<std::vector<double>> kXyzToLin = {
    {3.2404542, -1.5371385, -0.4985314},
    {-0.9692660, 1.8760108, 0.0415560},
    {0.0556434, -0.2040259, 1.0572252}};

double srgb_lin(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}
double lin_srgb(double v) {
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}
double lab_fwd(double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
}
double lab_inv(double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d ? t * t * t : 3 * d * d * (t - 4.0 / 29.0);
}

}  // namespace

Image rgb_to_ycbcr(const Image& rgb) {
    Image out(3, rgb.height, rgb.width);
    const int hw = rgb.height * rgb.width;
    for (int i = 0; i < hw; ++i) {
        double r = rgb.data[i], g = rgb.data[hw + i], b = rgb.data[2 * hw + i];
        for (int c = 0; c < 3; ++c)
            out.data[c * hw + i] = kRgbToYcc[c][0] * r + kRgbToYcc[c][1] * g +
                                   kRgbToYcc[c][2] * b + kYccOff[c];
    }
    return out;
}

Image ycbcr_to_rgb(const Image& ycc) {
    Image out(3, ycc.height, ycc.width);
    const int hw = ycc.height * ycc.width;
    for (int i = 0; i < hw; ++i) {
        double y = ycc.data[i];
        double cb = ycc.data[hw + i] - 0.5;
        double cr = ycc.data[2 * hw + i] - 0.5;
        double in[3] = {y, cb, cr};
        for (int c = 0; c < 3; ++c)
            out.data[c * hw + i] = kYccToRgb[c][0] * in[0] +
                                   kYccToRgb[c][1] * in[1] +
                                   kYccToRgb[c][2] * in[2];
    }
    return out;
}

Image rgb_to_lab(const Image& rgb) {
    Image out(3, rgb.height, rgb.width);
    const int hw = rgb.height * rgb.width;
    for (int i = 0; i < hw; ++i) {
        double lin[3];
        for (int c = 0; c < 3; ++c) lin[c] = srgb_lin(rgb.data[c * hw + i]);
        double x = 0, y = 0, z = 0;
        x = kLinToXyz[0][0] * lin[0] + kLinToXyz[0][1] * lin[1] +
            kLinToXyz[0][2] * lin[2];
        y = kLinToXyz[1][0] * lin[0] + kLinToXyz[1][1] * lin[1] +
            kLinToXyz[1][2] * lin[2];
        z = kLinToXyz[2][0] * lin[0] + kLinToXyz[2][1] * lin[1] +
            kLinToXyz[2][2] * lin[2];
        double fx = lab_fwd(x / kXn), fy = lab_fwd(y / kYn),
               fz = lab_fwd(z / kZn);
        out.data[i] = 116.0 * fy - 16.0;
        out.data[hw + i] = 500.0 * (fx - fy);
        out.data[2 * hw + i] = 200.0 * (fy - fz);
    }
    return out;
}

Image lab_to_rgb(const Image& lab) {
    Image out(3, lab.height, lab.width);
    const int hw = lab.height * lab.width;
    for (int i = 0; i < hw; ++i) {
        double l = lab.data[i], a = lab.data[hw + i], b = lab.data[2 * hw + i];
        double fy = (l + 16.0) / 116.0;
        double fx = fy + a / 500.0;
        double fz = fy - b / 200.0;
        double xyz[3] = {kXn * lab_inv(fx), kYn * lab_inv(fy),
                         kZn * lab_inv(fz)};
        for (int c = 0; c < 3; ++c) {
            double lin = kXyzToLin[c][0] * xyz[0] + kXyzToLin[c][1] * xyz[1] +
                         kXyzToLin[c][2] * xyz[2];
            out.data[c * hw + i] =
                std::min(1.0, std::max(0.0, lin_srgb(std::max(0.0, lin))));
        }
    }
    return out;
}

double ciede2000(const std::array<double, 3>& lab1,
                 const std::array<double, 3>& lab2) {
    const double l1 = lab1[0], a1 = lab1[1], b1 = lab1[2];
    const double l2 = lab2[0], a2 = lab2[1], b2 = lab2[2];

    const double c1 = std::hypot(a1, b1);
    const double c2 = std::hypot(a2, b2);
    const double cbar = 0.5 * (c1 + c2);
    const double cbar7 = std::pow(cbar, 7.0);
    const double g = 0.5 * (1.0 - std::sqrt(cbar7 / (cbar7 + std::pow(25.0, 7.0))));
    const double ap1 = (1.0 + g) * a1;
    const double ap2 = (1.0 + g) * a2;
    const double cp1 = std::hypot(ap1, b1);
    const double cp2 = std::hypot(ap2, b2);

    auto hue = [](double ap, double b) {
        if (ap == 0.0 && b == 0.0) return 0.0;
        double h = std::atan2(b, ap) * 180.0 / kPi;
        return h < 0 ? h + 360.0 : h;
    };
    const double hp1 = hue(ap1, b1);
    const double hp2 = hue(ap2, b2);

    const double dl = l2 - l1;
    const double dc = cp2 - cp1;
    double dhp = 0.0;
    if (cp1 * cp2 != 0.0) {
        dhp = hp2 - hp1;
        if (dhp > 180.0)
            dhp -= 360.0;
        else if (dhp < -180.0)
            dhp += 360.0;
    }
    const double dh =
        2.0 * std::sqrt(cp1 * cp2) * std::sin(dhp * kPi / 360.0);

    const double lbar = 0.5 * (l1 + l2);
    const double cpbar = 0.5 * (cp1 + cp2);
    double hpbar;
    if (cp1 * cp2 == 0.0) {
        hpbar = hp1 + hp2;
    } else if (std::abs(hp1 - hp2) <= 180.0) {
        hpbar = 0.5 * (hp1 + hp2);
    } else if (hp1 + hp2 < 360.0) {
        hpbar = 0.5 * (hp1 + hp2 + 360.0);
    } else {
        hpbar = 0.5 * (hp1 + hp2 - 360.0);
    }

    const double t = 1.0 - 0.17 * std::cos((hpbar - 30.0) * kPi / 180.0) +
                     0.24 * std::cos(2.0 * hpbar * kPi / 180.0) +
                     0.32 * std::cos((3.0 * hpbar + 6.0) * kPi / 180.0) -
                     0.20 * std::cos((4.0 * hpbar - 63.0) * kPi / 180.0);
    const double dtheta =
        30.0 * std::exp(-((hpbar - 275.0) / 25.0) * ((hpbar - 275.0) / 25.0));
    const double cpbar7 = std::pow(cpbar, 7.0);
    const double rc = 2.0 * std::sqrt(cpbar7 / (cpbar7 + std::pow(25.0, 7.0)));
    const double lterm = (lbar - 50.0) * (lbar - 50.0);
    const double sl = 1.0 + 0.015 * lterm / std::sqrt(20.0 + lterm);
    const double sc = 1.0 + 0.045 * cpbar;
    const double sh = 1.0 + 0.015 * cpbar * t;
    const double rt = -std::sin(2.0 * dtheta * kPi / 180.0) * rc;

    const double tl = dl / sl, tc = dc / sc, th = dh / sh;
    return std::sqrt(tl * tl + tc * tc + th * th + rt * tc * th);
}

// ---------------- graph versions ----------------

ad::Tensor rgb_to_ycbcr_g(const ad::Tensor& rgb) {
    return ad::channel_affine(rgb, kRgbToYcc, kYccOff);
}

ad::Tensor luma_g(const ad::Tensor& rgb) {
    return ad::channel_affine(rgb, {kRgbToYcc[0]}, {0.0});
}

ad::Tensor rgb_to_lab_g(const ad::Tensor& rgb) {
    using namespace ad;
    Tensor lin = srgb_to_linear(rgb);
    Tensor xyz = channel_affine(
        lin,
        {{kLinToXyz[0][0] / kXn, kLinToXyz[0][1] / kXn, kLinToXyz[0][2] / kXn},
         {kLinToXyz[1][0] / kYn, kLinToXyz[1][1] / kYn, kLinToXyz[1][2] / kYn},
         {kLinToXyz[2][0] / kZn, kLinToXyz[2][1] / kZn, kLinToXyz[2][2] / kZn}},
        {0, 0, 0});
    Tensor f = lab_f(xyz);
    // L = 116 fy - 16; a = 500 (fx - fy); b = 200 (fy - fz)
    return channel_affine(f, {{0, 116, 0}, {500, -500, 0}, {0, 200, -200}},
                          {-16.0, 0.0, 0.0});
}

ad::Tensor lab_to_rgb_g(const ad::Tensor& lab) {
    using namespace ad;
    // fy = (L+16)/116, fx = fy + a/500, fz = fy - b/200
    Tensor f = channel_affine(lab,
                              {{1.0 / 116.0, 1.0 / 500.0, 0.0},
                               {1.0 / 116.0, 0.0, 0.0},
                               {1.0 / 116.0, 0.0, -1.0 / 200.0}},
                              {16.0 / 116.0, 16.0 / 116.0, 16.0 / 116.0});
    Tensor xyz_rel = lab_f_inv(f);  // {X/Xn, Y/Yn, Z/Zn}
    Tensor lin = channel_affine(
        xyz_rel,
        {{kXyzToLin[0][0] * kXn, kXyzToLin[0][1] * kYn, kXyzToLin[0][2] * kZn},
         {kXyzToLin[1][0] * kXn, kXyzToLin[1][1] * kYn, kXyzToLin[1][2] * kZn},
         {kXyzToLin[2][0] * kXn, kXyzToLin[2][1] * kYn, kXyzToLin[2][2] * kZn}},
        {0, 0, 0});
    return linear_to_srgb(clamp(lin, 0.0, 1.0));
}

}  // namespace nicrb::color
