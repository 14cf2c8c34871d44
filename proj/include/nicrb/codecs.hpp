#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nicrb/image.hpp"
#include "nicrb/metrics.hpp"
#include "nicrb/tensor.hpp"

namespace nicrb::codec {

struct CodecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Arch { FactorizedPrior, HyperpriorLite };
enum class QuantMode { Ste, Noise };

const char* arch_name(Arch a);
Arch arch_from_name(const std::string& name);

// latent symbols live in [-kSymbolBound, kSymbolBound]
inline constexpr double kSymbolBound = 16.0;
inline constexpr int kCdfSegments = 32;  // 33 knots
inline constexpr int kDownsampleFactor = 16;

struct CodecModel {
    std::string id;
    Arch arch = Arch::FactorizedPrior;
    QuantMode qmode = QuantMode::Ste;
    double lambda = 0.01;
    std::uint64_t seed = 0;
    std::string bitrate_label;
    // insertion-ordered parameter map; every tensor is a grad-enabled leaf
    std::vector<std::pair<std::string, ad::Tensor>> params;

    const ad::Tensor& param(const std::string& name) const;
};

CodecModel make_codec(Arch arch, const std::string& id, double lambda,
                      std::uint64_t seed, QuantMode qmode = QuantMode::Ste);

// Differentiable forward pass; the entry point for attacks.
struct CodecGraph {
    ad::Tensor recon;      // [3,H,W], clamped to [0,1]
    ad::Tensor recon_raw;  // pre-clamp, used as the training distortion target
    ad::Tensor bpp;        // scalar, latent rate of Eq-style proxy
};
// relax=true replaces rounding by additive uniform noise (training);
// otherwise the model's qmode applies. noise_seed feeds all noise draws.
CodecGraph run(const CodecModel& model, const ad::Tensor& x,
               std::uint64_t noise_seed = 0, bool relax = false);

Image reconstruct(const CodecModel& model, const Image& x,
                  std::uint64_t noise_seed = 0);
double bpp(const CodecModel& model, const Image& x,
           std::uint64_t noise_seed = 0);

struct TrainOptions {
    int steps = 800;
    int crop = 32;          // training crop size (multiple of 16)
    int batch = 2;          // crops per step
    double lr = 1e-3;
    std::uint64_t seed = 1;
};

struct TrainReport {
    std::vector<double> losses;
    double initial_loss = 0;
    double final_loss = 0;
    bool diverged = false;
    int steps_run = 0;
};

TrainReport train(CodecModel& model, const std::vector<Image>& corpus,
                  double lambda, const TrainOptions& opts);

void save_checkpoint(const CodecModel& model, const std::string& path);
CodecModel load_checkpoint(const std::string& path);

struct RDCurve {
    std::vector<metrics::RDPoint> points;  // sorted by bpp
    bool flat = false;                     // degenerate (constant) quality
};
RDCurve rd_curve(const std::vector<const CodecModel*>& models,
                 const std::vector<Image>& corpus, metrics::MetricId metric);

}  // namespace nicrb::codec
