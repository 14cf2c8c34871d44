#include "nicrb/metrics.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>

#include "nicrb/color.hpp"

namespace nicrb::metrics {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
const double kMsWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

void check_pair(const Image& a, const Image& b) {
    if (!a.same_shape(b))
        throw MetricError("metric inputs differ in shape");
}

}  // namespace

const char* metric_name(MetricId id) {
    switch (id) {
        case MetricId::Psnr: return "psnr";
        case MetricId::Mse: return "mse";
        case MetricId::MsSsim: return "ms-ssim";
        case MetricId::Ssim: return "ssim";
        case MetricId::Linf: return "linf";
        case MetricId::External: return "external";
    }
    return "?";
}

MetricId metric_from_name(const std::string& name) {
    if (name == "psnr") return MetricId::Psnr;
    if (name == "mse") return MetricId::Mse;
    if (name == "ms-ssim" || name == "msssim") return MetricId::MsSsim;
    if (name == "ssim") return MetricId::Ssim;
    if (name == "linf") return MetricId::Linf;
    if (name == "external") return MetricId::External;
    throw MetricError("unknown metric id: " + name);
}

bool higher_is_better(MetricId id) {
    switch (id) {
        case MetricId::Mse:
        case MetricId::Linf:
            return false;
        default:
            return true;
    }
}

double mse(const Image& a, const Image& b) {
    check_pair(a, b);
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
    double m = mse(a, b);
    if (m < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / m);
}

int ms_ssim_scales(int height, int width) {
    int mindim = std::min(height, width);
    int scales = 0;
    while (scales < 5 && mindim >= kWindow) {
        ++scales;
        mindim /= 2;
    }
    if (scales == 0)
        throw MetricError("image smaller than the SSIM window");
    return scales;
}

namespace {

// one SSIM scale on graph tensors over valid (interior) windows only;
// returns {mean pointwise l*cs map, mean cs map}
std::pair<ad::Tensor, ad::Tensor> ssim_terms_g(const ad::Tensor& x,
                                               const ad::Tensor& y) {
    using namespace ad;
    Tensor mx = gaussian_blur(x, kWindow, kSigma);
    Tensor my = gaussian_blur(y, kWindow, kSigma);
    Tensor mxx = gaussian_blur(mul(x, x), kWindow, kSigma);
    Tensor myy = gaussian_blur(mul(y, y), kWindow, kSigma);
    Tensor mxy = gaussian_blur(mul(x, y), kWindow, kSigma);
    int r = (kWindow - 1) / 2;
    int vh = x.shape()[1] - 2 * r, vw = x.shape()[2] - 2 * r;
    auto valid = [&](const Tensor& t) { return crop(t, r, r, vh, vw); };
    mx = valid(mx);
    my = valid(my);
    mxx = valid(mxx);
    myy = valid(myy);
    mxy = valid(mxy);
    Tensor mx2 = mul(mx, mx);
    Tensor my2 = mul(my, my);
    Tensor sx = sub(mxx, mx2);
    Tensor sy = sub(myy, my2);
    Tensor sxy = sub(mxy, mul(mx, my));
    Tensor l = div(add_scalar(mul_scalar(mul(mx, my), 2.0), kC1),
                   add_scalar(add(mx2, my2), kC1));
    Tensor cs = div(add_scalar(mul_scalar(sxy, 2.0), kC2),
                    add_scalar(add(sx, sy), kC2));
    return {reduce_mean(mul(l, cs)), reduce_mean(cs)};
}

}  // namespace

ad::Tensor ms_ssim_g(const ad::Tensor& x, const ad::Tensor& y) {
    using namespace ad;
    if (x.shape() != y.shape())
        throw MetricError("ms_ssim: inputs differ in shape");
    int scales = ms_ssim_scales(x.shape()[1], x.shape()[2]);
    double wsum = 0;
    for (int s = 0; s < scales; ++s) wsum += kMsWeights[s];
    Tensor cur_x = x, cur_y = y;
    Tensor acc = Tensor::scalar(1.0);
    for (int s = 0; s < scales; ++s) {
        auto [lcs, cs] = ssim_terms_g(cur_x, cur_y);
        double w = kMsWeights[s] / wsum;
        Tensor term = (s == scales - 1) ? lcs : cs;
        acc = mul(acc, pow_scalar(clamp(term, 1e-6, 1.0), w));
        if (s != scales - 1) {
            // even-crop before pooling if needed
            int h = cur_x.shape()[1], w2 = cur_x.shape()[2];
            if (h % 2 || w2 % 2) {
                cur_x = crop(cur_x, 0, 0, h - h % 2, w2 - w2 % 2);
                cur_y = crop(cur_y, 0, 0, h - h % 2, w2 - w2 % 2);
            }
            cur_x = downsample2x(cur_x);
            cur_y = downsample2x(cur_y);
        }
    }
    return acc;
}

double ms_ssim(const Image& a, const Image& b) {
    check_pair(a, b);
    return ms_ssim_g(a.to_tensor(), b.to_tensor()).item();
}

double ssim(const Image& a, const Image& b) {
    check_pair(a, b);
    auto [lcs, cs] = ssim_terms_g(a.to_tensor(), b.to_tensor());
    (void)cs;
    return lcs.item();
}

double evaluate(MetricId id, const Image& a, const Image& b,
                const std::string& external_cmd) {
    switch (id) {
        case MetricId::Psnr: return psnr(a, b);
        case MetricId::Mse: return mse(a, b);
        case MetricId::MsSsim: return ms_ssim(a, b);
        case MetricId::Ssim: return ssim(a, b);
        case MetricId::Linf: return linf_norm(a, b);
        case MetricId::External:
            if (external_cmd.empty())
                throw MetricError("external metric requires a command");
            return external_score(external_cmd, a, b);
    }
    throw MetricError("bad metric id");
}

double delta_score(MetricId id, const CodecFn& codec, const Image& x,
                   const Image& x_adv, const std::string& external_cmd) {
    double clean = evaluate(id, x, codec(x), external_cmd);
    double attacked = evaluate(id, x_adv, codec(x_adv), external_cmd);
    return clean - attacked;
}

double transfer_score(MetricId id, const CodecFn& target, const CodecFn& other,
                      const Image& x, const Image& x_adv,
                      const std::string& external_cmd) {
    double on_target = evaluate(id, target(x), target(x_adv), external_cmd);
    double on_other = evaluate(id, other(x), other(x_adv), external_cmd);
    return on_target - on_other;
}

// ---------------- artifacts ----------------

double color_artifact(const Image& x_ref, const Image& x_test) {
    check_pair(x_ref, x_test);
    Image lab_ref = color::rgb_to_lab(x_ref);
    Image lab_test = color::rgb_to_lab(x_test);
    const int h = x_ref.height, w = x_ref.width;
    const int hw = h * w;
    std::vector<double> de(static_cast<std::size_t>(hw));
    for (int i = 0; i < hw; ++i) {
        de[i] = color::ciede2000(
            {lab_ref.data[i], lab_ref.data[hw + i], lab_ref.data[2 * hw + i]},
            {lab_test.data[i], lab_test.data[hw + i],
             lab_test.data[2 * hw + i]});
    }
    // 8x8 average pooling (stride 8, partial windows at the edges), then mean
    double total = 0;
    int windows = 0;
    for (int by = 0; by < h; by += 8) {
        for (int bx = 0; bx < w; bx += 8) {
            double s = 0;
            int n = 0;
            for (int y = by; y < std::min(by + 8, h); ++y)
                for (int x = bx; x < std::min(bx + 8, w); ++x) {
                    s += de[static_cast<std::size_t>(y) * w + x];
                    ++n;
                }
            total += s / n;
            ++windows;
        }
    }
    return total / windows;
}

// ---------------- block DCT baseline ----------------

namespace {

const int kLumaQ[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,
                        58, 60, 55, 14, 13,  16,  24,  40,  57, 69, 56, 14, 17,
                        22, 29, 51, 87, 80,  62,  18,  22,  37, 56, 68, 109, 103,
                        77, 24, 35, 55, 64,  81,  104, 113, 92, 49, 64, 78, 87,
                        103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
const int kChromaQ[64] = {17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66,
                          99, 99, 99, 99, 24, 26, 56, 99, 99, 99, 99, 99,
                          47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                          99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                          99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

void scaled_table(const int* base, int quality, double* out) {
    quality = std::clamp(quality, 1, 100);
    double scale = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
    for (int i = 0; i < 64; ++i)
        out[i] = std::clamp(std::round(base[i] * scale / 100.0), 1.0, 255.0);
}

void dct8(const double* in, double* out, bool inverse) {
    // direct 2-D DCT-II / DCT-III on an 8x8 block
    static double cosv[8][8];
    static bool init = false;
    if (!init) {
        for (int k = 0; k < 8; ++k)
            for (int n = 0; n < 8; ++n)
                cosv[k][n] = std::cos((2 * n + 1) * k * 3.14159265358979323846 /
                                      16.0);
        init = true;
    }
    auto alpha = [](int k) { return k == 0 ? std::sqrt(1.0 / 8.0)
                                           : std::sqrt(2.0 / 8.0); };
    double tmp[64];
    if (!inverse) {
        for (int u = 0; u < 8; ++u)
            for (int x = 0; x < 8; ++x) {
                double s = 0;
                for (int y = 0; y < 8; ++y) s += in[y * 8 + x] * cosv[u][y];
                tmp[u * 8 + x] = alpha(u) * s;
            }
        for (int u = 0; u < 8; ++u)
            for (int v = 0; v < 8; ++v) {
                double s = 0;
                for (int x = 0; x < 8; ++x) s += tmp[u * 8 + x] * cosv[v][x];
                out[u * 8 + v] = alpha(v) * s;
            }
    } else {
        for (int u = 0; u < 8; ++u)
            for (int x = 0; x < 8; ++x) {
                double s = 0;
                for (int v = 0; v < 8; ++v)
                    s += alpha(v) * in[u * 8 + v] * cosv[v][x];
                tmp[u * 8 + x] = s;
            }
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                double s = 0;
                for (int u = 0; u < 8; ++u)
                    s += alpha(u) * tmp[u * 8 + x] * cosv[u][y];
                out[y * 8 + x] = s;
            }
    }
}

// quantized-coefficient entropy proxy (bits/pixel) plus the reconstruction
double block_dct_run(const Image& x, int quality, Image* out) {
    Image ycc = color::rgb_to_ycbcr(x);
    Image rec(3, x.height, x.width);
    double tables[2][64];
    scaled_table(kLumaQ, quality, tables[0]);
    scaled_table(kChromaQ, quality, tables[1]);
    double bits = 0;
    std::array<std::vector<double>, 3> chan;
    const int h = x.height, w = x.width;
    for (int c = 0; c < 3; ++c) {
        const double* q = tables[c == 0 ? 0 : 1];
        for (int by = 0; by < h; by += 8) {
            for (int bx = 0; bx < w; bx += 8) {
                double block[64], coef[64];
                for (int y = 0; y < 8; ++y)
                    for (int xx = 0; xx < 8; ++xx) {
                        int sy = std::min(by + y, h - 1);
                        int sx = std::min(bx + xx, w - 1);
                        block[y * 8 + xx] = ycc.at(c, sy, sx) * 255.0 - 128.0;
                    }
                dct8(block, coef, false);
                for (int i = 0; i < 64; ++i) {
                    double qc = std::round(coef[i] / q[i]);
                    bits += std::log2(1.0 + std::abs(qc));  // entropy proxy
                    coef[i] = qc * q[i];
                }
                dct8(coef, block, true);
                for (int y = 0; y < 8 && by + y < h; ++y)
                    for (int xx = 0; xx < 8 && bx + xx < w; ++xx)
                        rec.at(c, by + y, bx + xx) =
                            (block[y * 8 + xx] + 128.0) / 255.0;
            }
        }
    }
    if (out) {
        Image rgb = color::ycbcr_to_rgb(rec);
        for (auto& v : rgb.data) v = std::min(1.0, std::max(0.0, v));
        *out = std::move(rgb);
    }
    return bits / (static_cast<double>(h) * w);
}

}  // namespace

Image block_dct_baseline(const Image& x, int quality) {
    Image out;
    block_dct_run(x, quality, &out);
    return out;
}

int block_dct_quality_for_bpp(const Image& x, double target_bpp) {
    int best_q = 50;
    double best_err = 1e300;
    for (int q = 5; q <= 95; q += 5) {
        double bpp = block_dct_run(x, q, nullptr);
        double err = std::abs(bpp - target_bpp);
        if (err < best_err) {
            best_err = err;
            best_q = q;
        }
    }
    return best_q;
}

double texture_artifact(const Image& x_ref, const Image& x_test, int quality) {
    check_pair(x_ref, x_test);
    Image baseline = block_dct_baseline(x_ref, quality);
    const int tile = 64;
    const int h = x_ref.height, w = x_ref.width;
    auto extract = [&](const Image& im, int ty, int tx, int th, int tw) {
        Image t(im.channels, th, tw);
        for (int c = 0; c < im.channels; ++c)
            for (int y = 0; y < th; ++y)
                for (int x = 0; x < tw; ++x)
                    t.at(c, y, x) = im.at(c, ty + y, tx + x);
        return t;
    };
    double total = 0;
    int count = 0;
    // single-tile fallback for small images
    int step_y = h < tile ? h : tile;
    int step_x = w < tile ? w : tile;
    for (int ty = 0; ty + step_y <= h; ty += step_y) {
        for (int tx = 0; tx + step_x <= w; tx += step_x) {
            Image rt = extract(x_ref, ty, tx, step_y, step_x);
            Image tt = extract(x_test, ty, tx, step_y, step_x);
            Image bt = extract(baseline, ty, tx, step_y, step_x);
            total += ms_ssim(rt, bt) - ms_ssim(rt, tt);
            ++count;
        }
    }
    return total / count;
}

// ---------------- BSQ-rate ----------------

double bsq_rate(std::vector<RDPoint> reference,
                std::vector<RDPoint> candidate) {
    if (reference.size() < 2 || candidate.size() < 2)
        throw MetricError("bsq_rate: each curve needs at least 2 points");
    auto by_quality = [](const RDPoint& a, const RDPoint& b) {
        return a.quality < b.quality;
    };
    std::sort(reference.begin(), reference.end(), by_quality);
    std::sort(candidate.begin(), candidate.end(), by_quality);
    for (const auto* curve : {&reference, &candidate})
        for (const auto& p : *curve)
            if (p.bpp <= 0) throw MetricError("bsq_rate: non-positive bitrate");

    const double q0 = std::max(reference.front().quality,
                               candidate.front().quality);
    const double q1 = std::min(reference.back().quality,
                               candidate.back().quality);
    if (q1 < q0) throw MetricError("bsq_rate: quality ranges do not overlap");

    auto log_rate = [](const std::vector<RDPoint>& curve, double q) {
        if (q <= curve.front().quality) return std::log(curve.front().bpp);
        if (q >= curve.back().quality) return std::log(curve.back().bpp);
        for (std::size_t i = 1; i < curve.size(); ++i) {
            if (q <= curve[i].quality) {
                double dq = curve[i].quality - curve[i - 1].quality;
                double t = dq == 0 ? 0.0 : (q - curve[i - 1].quality) / dq;
                return (1 - t) * std::log(curve[i - 1].bpp) +
                       t * std::log(curve[i].bpp);
            }
        }
        return std::log(curve.back().bpp);
    };

    if (q1 - q0 < 1e-12)
        return std::exp(log_rate(candidate, q0) - log_rate(reference, q0));

    // integrate exp(linear) exactly on each breakpoint segment
    std::vector<double> qs{q0, q1};
    for (const auto* curve : {&reference, &candidate})
        for (const auto& p : *curve)
            if (p.quality > q0 && p.quality < q1) qs.push_back(p.quality);
    std::sort(qs.begin(), qs.end());
    qs.erase(std::unique(qs.begin(), qs.end()), qs.end());

    double integral = 0;
    for (std::size_t i = 1; i < qs.size(); ++i) {
        double a = qs[i - 1], b = qs[i];
        double da = log_rate(candidate, a) - log_rate(reference, a);
        double db = log_rate(candidate, b) - log_rate(reference, b);
        double slope = (db - da) / (b - a);
        if (std::abs(slope) < 1e-12) {
            integral += std::exp(0.5 * (da + db)) * (b - a);
        } else {
            integral += (std::exp(db) - std::exp(da)) / slope;
        }
    }
    return integral / (q1 - q0);
}

// ---------------- correlation ----------------

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        double mean_rank = 0.5 * (i + j) + 1.0;  // average rank for ties
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = mean_rank;
        i = j + 1;
    }
    return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa < 1e-300 || sbb < 1e-300)
        return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

std::vector<std::vector<double>> correlation_matrix(
    const std::vector<std::vector<double>>& columns, bool spearman) {
    std::vector<std::vector<double>> cols = columns;
    if (spearman)
        for (auto& c : cols) c = ranks(c);
    const std::size_t m = cols.size();
    std::vector<std::vector<double>> out(m, std::vector<double>(m, 1.0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i; j < m; ++j) {
            double r = pearson(cols[i], cols[j]);
            out[i][j] = out[j][i] = r;  // constant column -> NaN, diagonal too
        }
    return out;
}

double external_score(const std::string& cmd, const Image& a, const Image& b) {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path();
    static std::atomic<unsigned> counter{0};
    unsigned id = counter++;
    fs::path pa = dir / ("nicrb_ref_" + std::to_string(id) + ".png");
    fs::path pb = dir / ("nicrb_test_" + std::to_string(id) + ".png");
    save_png16(a, pa.string());
    save_png16(b, pb.string());
    std::string full = cmd + " " + pa.string() + " " + pb.string();
    std::FILE* pipe = popen(full.c_str(), "r");
    if (!pipe) {
        fs::remove(pa);
        fs::remove(pb);
        throw MetricError("failed to run external scorer: " + full);
    }
    char buf[256];
    std::string output;
    while (std::fgets(buf, sizeof buf, pipe)) output += buf;
    int rc = pclose(pipe);
    fs::remove(pa);
    fs::remove(pb);
    if (rc != 0)
        throw MetricError("external scorer failed (" + std::to_string(rc) +
                          "): " + full);
    try {
        return std::stod(output);
    } catch (...) {
        throw MetricError("external scorer output not a number: " + output);
    }
}

}  // namespace nicrb::metrics
