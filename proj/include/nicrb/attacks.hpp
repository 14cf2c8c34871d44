#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nicrb/codecs.hpp"
#include "nicrb/image.hpp"
#include "nicrb/tensor.hpp"

namespace nicrb::attack {

struct AttackError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LossId {
    FtdaDefault,          // || C(x) - C(x') ||2
    AddedNoises,          // || C(x') - C(x) - (x' - x) ||2
    Reconstruction,       // || C(x') - x' ||2
    FtdaMsssim,           // 1 - MS-SSIM(C(x), C(x'))
    ReconstructionMsssim, // 1 - MS-SSIM(x', C(x'))
    BppIncrease,          // latent-rate bpp (maximised)
};

const char* loss_name(LossId id);
LossId loss_from_name(const std::string& name);

struct LossTarget {
    LossId id = LossId::FtdaDefault;
    bool y_only = false;  // luma projection before the distance
    // printed-form direction for the bpp target: maximise 1 - bpp instead
    bool bpp_printed_form = false;
};

enum class Algorithm { Ftda, Ifgsm, Pgd, Madc, Ssah, Cadv, RandomNoise };

const char* algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

struct AttackSpec {
    Algorithm algorithm = Algorithm::Ifgsm;
    LossTarget loss;
    double epsilon = 8.0 / 255.0;  // L-inf bound, pixel scale
    double step_size = 1.0 / 255.0;
    int iterations = 20;
    std::uint64_t seed = 0;
    // MADC per-pixel MSE proxy budget; <=0 means epsilon^2 / 3
    double madc_budget = -1.0;
    // cadv: max curve deviation from identity, Lab a/b units
    double cadv_max_shift = 20.0;
    double cadv_lr = 4.0;
    int cadv_knots = 8;
};

struct AdversarialExample {
    Image original;
    Image perturbed;
    std::vector<double> loss_trace;  // loss at each evaluated iterate
    double achieved_loss = 0.0;      // best over the trace
    double final_linf = 0.0;
    double final_l2 = 0.0;
};

// codec forward abstraction; defended codecs slot in via DefendedCodec::run_g
using GraphCodec =
    std::function<codec::CodecGraph(const ad::Tensor&, std::uint64_t)>;

GraphCodec wrap_codec(const codec::CodecModel& model);

// differentiable loss in canonical maximise form
ad::Tensor eval_loss(const LossTarget& target, const GraphCodec& codec,
                     const ad::Tensor& x, const ad::Tensor& x_adv,
                     std::uint64_t noise_seed = 0);

AdversarialExample run_attack(const AttackSpec& spec, const GraphCodec& codec,
                              const Image& x);
AdversarialExample run_attack(const AttackSpec& spec,
                              const codec::CodecModel& model, const Image& x);

// g <- g - (<g,p>/<p,p>) p; skipped (returns g) when <p,p> < 1e-12
std::vector<double> project_orthogonal(const std::vector<double>& g,
                                       const std::vector<double>& p);

}  // namespace nicrb::attack
