#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "nicrb/color.hpp"
#include "nicrb/metrics.hpp"

using namespace nicrb;
using testutil::random_image;

namespace {

// ---- independent MS-SSIM reference ----------------------------------------
// Deliberately separate from the library: plain nested loops, explicit
// window normalization, no shared code.

std::vector<double> ref_window(int n, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(n) * n);
    int r = n / 2;
    double sum = 0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double v = std::exp(-((x - r) * (x - r) + (y - r) * (y - r)) /
                                (2.0 * sigma * sigma));
            w[y * n + x] = v;
            sum += v;
        }
    for (double& v : w) v /= sum;
    return w;
}

// single channel plane, valid windows only
void ref_ssim_plane(const std::vector<double>& a, const std::vector<double>& b,
                    int h, int w, double& mean_lcs, double& mean_cs) {
    const int n = 11;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    auto win = ref_window(n, 1.5);
    double slcs = 0, scs = 0;
    int count = 0;
    for (int y = 0; y + n <= h; ++y)
        for (int x = 0; x + n <= w; ++x) {
            double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    double va = a[(y + i) * w + (x + j)];
                    double vb = b[(y + i) * w + (x + j)];
                    double wt = win[i * n + j];
                    ma += wt * va;
                    mb += wt * vb;
                    maa += wt * va * va;
                    mbb += wt * vb * vb;
                    mab += wt * va * vb;
                }
            double sa = maa - ma * ma, sb = mbb - mb * mb, sab = mab - ma * mb;
            double l = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            double cs = (2 * sab + c2) / (sa + sb + c2);
            slcs += l * cs;
            scs += cs;
            ++count;
        }
    mean_lcs = slcs / count;
    mean_cs = scs / count;
}

void ref_downsample(std::vector<double>& p, int& h, int& w) {
    int h2 = h / 2, w2 = w / 2;
    std::vector<double> out(static_cast<std::size_t>(h2) * w2);
    for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x)
            out[y * w2 + x] = 0.25 * (p[2 * y * w + 2 * x] +
                                      p[2 * y * w + 2 * x + 1] +
                                      p[(2 * y + 1) * w + 2 * x] +
                                      p[(2 * y + 1) * w + 2 * x + 1]);
    p = std::move(out);
    h = h2;
    w = w2;
}

double ref_ms_ssim(const Image& a, const Image& b) {
    const double weights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    int scales = 0, mind = std::min(a.height, a.width);
    while (scales < 5 && mind >= 11) {
        ++scales;
        mind /= 2;
    }
    double wsum = 0;
    for (int s = 0; s < scales; ++s) wsum += weights[s];
    double total = 1.0;
    // channels are pooled jointly (single mean over all C maps); replicate
    // by averaging per-channel plane results at each scale
    std::vector<std::vector<double>> pa(a.channels), pb(a.channels);
    int h = a.height, w = a.width;
    for (int c = 0; c < a.channels; ++c) {
        pa[c].assign(a.data.begin() + static_cast<std::size_t>(c) * h * w,
                     a.data.begin() + static_cast<std::size_t>(c + 1) * h * w);
        pb[c].assign(b.data.begin() + static_cast<std::size_t>(c) * h * w,
                     b.data.begin() + static_cast<std::size_t>(c + 1) * h * w);
    }
    for (int s = 0; s < scales; ++s) {
        double lcs = 0, cs = 0;
        for (int c = 0; c < a.channels; ++c) {
            double l1, c1v;
            ref_ssim_plane(pa[c], pb[c], h, w, l1, c1v);
            lcs += l1 / a.channels;
            cs += c1v / a.channels;
        }
        double term = (s == scales - 1) ? lcs : cs;
        term = std::min(1.0, std::max(1e-6, term));
        total *= std::pow(term, weights[s] / wsum);
        if (s != scales - 1) {
            int hh = h, ww = w;
            for (int c = 0; c < a.channels; ++c) {
                hh = h;
                ww = w;
                if (hh % 2 || ww % 2) {
                    // even-crop
                    std::vector<double> t(static_cast<std::size_t>(hh - hh % 2) *
                                          (ww - ww % 2));
                    for (int y = 0; y < hh - hh % 2; ++y)
                        for (int x = 0; x < ww - ww % 2; ++x)
                            t[y * (ww - ww % 2) + x] = pa[c][y * ww + x];
                    pa[c] = t;
                    for (int y = 0; y < hh - hh % 2; ++y)
                        for (int x = 0; x < ww - ww % 2; ++x)
                            t[y * (ww - ww % 2) + x] = pb[c][y * ww + x];
                    pb[c] = t;
                    hh -= hh % 2;
                    ww -= ww % 2;
                }
                int h2 = hh, w2 = ww;
                ref_downsample(pa[c], h2, w2);
                h2 = hh;
                w2 = ww;
                ref_downsample(pb[c], h2, w2);
            }
            h = hh / 2;
            w = ww / 2;
        }
    }
    return total;
}

}  // namespace

TEST_CASE("psnr closed forms") {
    Image x = random_image(3, 16, 16, 1);
    CHECK(metrics::psnr(x, x) == 100.0);  // cap

    Image y = x;
    for (double& v : y.data) v = std::min(1.0, v + 1.0 / 255.0);
    // keep the offset exact: use a mid-range image so no clipping occurs
    Image x2(3, 16, 16, 0.4), y2(3, 16, 16, 0.4 + 1.0 / 255.0);
    double expected = 20.0 * std::log10(255.0);
    CHECK(std::fabs(metrics::psnr(x2, y2) - expected) < 0.01);
    CHECK(metrics::mse(x, y) == doctest::Approx(metrics::mse(y, x)));
    CHECK_THROWS(metrics::psnr(x, Image(3, 8, 8)));
}

TEST_CASE("psnr strictly decreasing in mse") {
    Image x(1, 8, 8, 0.5);
    Image a = x, b = x;
    a.data[0] += 0.1;
    b.data[0] += 0.2;
    CHECK(metrics::mse(x, b) > metrics::mse(x, a));
    CHECK(metrics::psnr(x, b) < metrics::psnr(x, a));
}

TEST_CASE("ms_ssim identity, range, ordering") {
    Image x = random_image(3, 48, 48, 2);
    CHECK(metrics::ms_ssim(x, x) == doctest::Approx(1.0).epsilon(1e-9));
    Image noisy = x;
    std::uint64_t s = 7;
    for (double& v : noisy.data)
        v = std::min(1.0, std::max(0.0, v + 0.1 * (ad::uniform01(s) - 0.5)));
    double v = metrics::ms_ssim(x, noisy);
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK_THROWS(metrics::ms_ssim(Image(1, 8, 8, 0.5), Image(1, 8, 8, 0.5)));
}

TEST_CASE("ms_ssim flip invariance") {
    Image a = random_image(3, 32, 32, 3), b = random_image(3, 32, 32, 4);
    auto flip = [](const Image& im) {
        Image out = im;
        for (int c = 0; c < im.channels; ++c)
            for (int y = 0; y < im.height; ++y)
                for (int x = 0; x < im.width; ++x)
                    out.at(c, y, x) = im.at(c, im.height - 1 - y,
                                            im.width - 1 - x);
        return out;
    };
    CHECK(metrics::ms_ssim(flip(a), flip(b)) ==
          doctest::Approx(metrics::ms_ssim(a, b)).epsilon(1e-12));
}

TEST_CASE("ms_ssim matches the independent reference implementation") {
    for (int k = 0; k < 5; ++k) {
        Image a = random_image(3, 44 + 3 * k, 52 - 2 * k, 100 + k);
        Image b = a;
        std::uint64_t s = 200 + k;
        for (double& v : b.data)
            v = std::min(1.0, std::max(0.0, v + 0.2 * (ad::uniform01(s) - 0.5)));
        double lib = metrics::ms_ssim(a, b);
        double ref = ref_ms_ssim(a, b);
        CHECK(std::fabs(lib - ref) < 1e-6);
    }
}

TEST_CASE("delta score identities") {
    Image x = random_image(3, 24, 24, 5);
    metrics::CodecFn blur = [](const Image& im) {
        return Image::from_tensor(
            ad::gaussian_blur(im.to_tensor(), 5, 1.2));
    };
    for (auto id : {metrics::MetricId::Psnr, metrics::MetricId::Mse,
                    metrics::MetricId::MsSsim})
        CHECK(metrics::delta_score(id, blur, x, x) == 0.0);

    metrics::CodecFn ident = [](const Image& im) { return im; };
    Image adv = random_image(3, 24, 24, 6);
    CHECK(metrics::delta_score(metrics::MetricId::Psnr, ident, x, adv) == 0.0);
}

TEST_CASE("transfer score identities") {
    Image x = random_image(3, 24, 24, 7), adv = random_image(3, 24, 24, 8);
    metrics::CodecFn blur = [](const Image& im) {
        return Image::from_tensor(ad::gaussian_blur(im.to_tensor(), 5, 1.2));
    };
    metrics::CodecFn ident = [](const Image& im) { return im; };
    CHECK(metrics::transfer_score(metrics::MetricId::Psnr, blur, blur, x,
                                  adv) == 0.0);
    CHECK(metrics::transfer_score(metrics::MetricId::Psnr, blur, ident, x,
                                  x) == 0.0);
}

TEST_CASE("color artifact scores") {
    Image x = random_image(3, 16, 16, 9);
    CHECK(metrics::color_artifact(x, x) == 0.0);

    // whole-image constant pair: pooling is exact, so the score must equal
    // the single-pixel deltaE of the same pair
    Image rgb1(3, 16, 16), rgb2(3, 16, 16);
    for (int i = 0; i < 256; ++i) {
        rgb1.data[i] = 0.35;
        rgb1.data[256 + i] = 0.50;
        rgb1.data[512 + i] = 0.65;
        rgb2.data[i] = 0.40;
        rgb2.data[256 + i] = 0.48;
        rgb2.data[512 + i] = 0.60;
    }
    Image lab1 = color::rgb_to_lab(rgb1), lab2 = color::rgb_to_lab(rgb2);
    double expected = color::ciede2000(
        {lab1.data[0], lab1.data[256], lab1.data[512]},
        {lab2.data[0], lab2.data[256], lab2.data[512]});
    double score = metrics::color_artifact(rgb1, rgb2);
    CHECK(score == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("hue shift scores above brightness-matched noise at equal mse") {
    Image x(3, 32, 32);
    std::uint64_t s = 11;
    for (double& v : x.data) v = 0.3 + 0.4 * ad::uniform01(s);
    // hue-ish shift: rotate channels slightly
    Image hue = x;
    for (int i = 0; i < 32 * 32; ++i) {
        hue.data[i] += 0.05;
        hue.data[32 * 32 + i] -= 0.05;
    }
    double target = metrics::mse(x, hue);
    // achromatic comparison: equal luma offset on all channels, identical mse
    Image noise = x;
    double off = std::sqrt(target);
    for (std::size_t i = 0; i < noise.numel(); ++i) noise.data[i] += off;
    CHECK(metrics::mse(x, noise) == doctest::Approx(target).epsilon(1e-9));
    CHECK(metrics::color_artifact(x, hue) > metrics::color_artifact(x, noise));
}

TEST_CASE("texture artifact") {
    Image x = random_image(3, 64, 64, 13);
    // smooth the randomness a little so block-dct tracks it well
    x = Image::from_tensor(ad::gaussian_blur(x.to_tensor(), 5, 1.5));
    Image baseline = metrics::block_dct_baseline(x, 50);
    CHECK(std::fabs(metrics::texture_artifact(x, baseline)) < 1e-9);
    CHECK(metrics::texture_artifact(x, x) <= 0.0);
    Image blur = Image::from_tensor(ad::gaussian_blur(x.to_tensor(), 11, 4.0));
    CHECK(metrics::texture_artifact(x, blur) > 0.0);
    // smaller than one tile: single-tile fallback still works
    Image small = random_image(3, 32, 32, 14);
    CHECK(std::isfinite(metrics::texture_artifact(small, small)));
}

TEST_CASE("bsq rate") {
    std::vector<metrics::RDPoint> a = {
        {0.25, 30.0}, {0.5, 33.0}, {1.0, 36.5}, {2.0, 40.0}};
    CHECK(metrics::bsq_rate(a, a) == doctest::Approx(1.0).epsilon(1e-9));

    std::vector<metrics::RDPoint> half = a;
    for (auto& p : half) p.bpp *= 0.5;
    CHECK(metrics::bsq_rate(a, half) == doctest::Approx(0.5).epsilon(1e-9));

    // shuffled input gives the identical result
    std::vector<metrics::RDPoint> shuffled = {a[2], a[0], a[3], a[1]};
    CHECK(metrics::bsq_rate(shuffled, half) ==
          doctest::Approx(0.5).epsilon(1e-9));

    std::vector<metrics::RDPoint> disjoint = {{0.3, 50.0}, {0.6, 60.0}};
    CHECK_THROWS(metrics::bsq_rate(a, disjoint));
    CHECK_THROWS(metrics::bsq_rate({a[0]}, a));
}

TEST_CASE("correlation matrix") {
    std::vector<std::vector<double>> cols = {
        {1, 2, 3, 4, 5},
        {2, 4, 6, 8, 10},
        {5, 4, 3, 2, 1},
        {3, 3, 3, 3, 3},
    };
    auto m = metrics::correlation_matrix(cols);
    CHECK(m[0][0] == doctest::Approx(1.0));
    CHECK(m[0][1] == doctest::Approx(1.0));
    CHECK(m[0][2] == doctest::Approx(-1.0));
    CHECK(std::isnan(m[0][3]));
    CHECK(std::isnan(m[3][3]));
    // spearman on a monotone nonlinear pair is exactly 1
    std::vector<std::vector<double>> rank_cols = {{1, 2, 3, 4, 5},
                                                  {1, 8, 27, 64, 125}};
    auto sp = metrics::correlation_matrix(rank_cols, true);
    CHECK(sp[0][1] == doctest::Approx(1.0));
    auto pe = metrics::correlation_matrix(rank_cols, false);
    CHECK(pe[0][1] < 1.0);
}

TEST_CASE("external scorer protocol") {
    Image a = random_image(3, 8, 8, 20), b = random_image(3, 8, 8, 21);
    std::string script = "/tmp/nicrb_test_scorer.sh";
    {
        std::ofstream f(script);
        f << "#!/bin/sh\ntest -f \"$1\" && test -f \"$2\" && echo 0.625\n";
    }
    REQUIRE(std::system(("chmod +x " + script).c_str()) == 0);
    CHECK(metrics::external_score(script, a, b) ==
          doctest::Approx(0.625));
    CHECK_THROWS(metrics::external_score("/nonexistent/scorer", a, b));
    CHECK_THROWS(metrics::evaluate(metrics::MetricId::External, a, b, ""));
}
