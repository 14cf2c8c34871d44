#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nicrb/image.hpp"
#include "nicrb/tensor.hpp"

namespace nicrb::metrics {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Full-reference metric ids. "external" shells out via the two-PNG protocol.
enum class MetricId { Psnr, Mse, MsSsim, Ssim, Linf, External };

const char* metric_name(MetricId id);
MetricId metric_from_name(const std::string& name);
bool higher_is_better(MetricId id);

double mse(const Image& a, const Image& b);
// 10*log10(1/mse), capped at 100 dB when mse < 1e-10
double psnr(const Image& a, const Image& b);
double ssim(const Image& a, const Image& b);     // single scale, 11x11 s=1.5
double ms_ssim(const Image& a, const Image& b);  // up to 5 scales

// differentiable MS-SSIM on the compute graph (same math as ms_ssim)
ad::Tensor ms_ssim_g(const ad::Tensor& x, const ad::Tensor& y);

// scale count used for a given image size (weights renormalized below 5)
int ms_ssim_scales(int height, int width);

using CodecFn = std::function<Image(const Image&)>;

double evaluate(MetricId id, const Image& a, const Image& b,
                const std::string& external_cmd = "");

// Delta robustness score: FR(x, C(x)) - FR(x', C(x'))
double delta_score(MetricId id, const CodecFn& codec, const Image& x,
                   const Image& x_adv, const std::string& external_cmd = "");

// Transfer score: FR(C(x), C(x')) - FR(C'(x), C'(x'))
double transfer_score(MetricId id, const CodecFn& target, const CodecFn& other,
                      const Image& x, const Image& x_adv,
                      const std::string& external_cmd = "");

// ---- artifact detectors ----

// per-pixel CIEDE2000 in Lab, 8x8 average pooling stride 8, mean of pooled map
double color_artifact(const Image& x_ref, const Image& x_test);

// 8x8 block-DCT quantize/dequantize baseline (JPEG-style tables, quality 1-100)
Image block_dct_baseline(const Image& x, int quality);
// pick the quality whose coefficient-entropy proxy is nearest target_bpp
int block_dct_quality_for_bpp(const Image& x, double target_bpp);

// mean over 64x64 tiles of (MS-SSIM(ref, blockdct(ref)) - MS-SSIM(ref, test))
double texture_artifact(const Image& x_ref, const Image& x_test,
                        int quality = 50);

// ---- RD curves ----

struct RDPoint {
    double bpp = 0.0;
    double quality = 0.0;
};

// mean bitrate ratio candidate/reference over the common quality interval,
// log-bitrate piecewise linear in quality. 1.0 = parity, < 1 = savings.
double bsq_rate(std::vector<RDPoint> reference, std::vector<RDPoint> candidate);

// ---- correlation ----

// Pearson (or Spearman) correlation matrix over columns; constant columns
// yield NaN entries.
std::vector<std::vector<double>> correlation_matrix(
    const std::vector<std::vector<double>>& columns, bool spearman = false);

// external scorer protocol: writes both images as PNG to temp files, runs
// `cmd <ref> <test>`, parses a single float from stdout
double external_score(const std::string& cmd, const Image& a, const Image& b);

}  // namespace nicrb::metrics
