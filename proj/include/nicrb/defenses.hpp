#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nicrb/codecs.hpp"
#include "nicrb/image.hpp"
#include "nicrb/tensor.hpp"

namespace nicrb::defense {

struct DefenseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DefenseKind {
    Identity,
    Flip,
    RandomRoll,
    RandomRotate,
    ColorReorder,
    RandomEnsemble,
    GeometricSelfEnsemble,
    ExternalPurifier,
};

const char* defense_name(DefenseKind k);
DefenseKind defense_from_name(const std::string& name);

// one reversible primitive with its sampled parameters
struct Action {
    enum class Type { Flip, Roll, Rotate, ColorReorder, External } type;
    bool flip_h = true, flip_v = true;
    int roll_dim = 2;   // 2 = height, 3 = width (paper's tensor axes)
    int roll_size = 0;
    double angle = 0.0;  // degrees
    std::array<int, 3> perm{0, 1, 2};
    std::string command;  // external purifier
};

// Paired preprocess T / postprocess T^-1 with recorded parameters.
// Composites with a rotate pad once to the circumscribing square before any
// action (so content is never cut) and crop after inversion.
struct DefenseTransform {
    DefenseKind kind = DefenseKind::Identity;
    std::vector<Action> actions;
    std::uint64_t sample_id = 0;
    // original geometry, recorded by preprocess when rotation pads the canvas
    mutable int rec_h = -1, rec_w = -1;

    bool needs_pad() const;
    ad::Tensor preprocess_g(const ad::Tensor& x) const;
    ad::Tensor postprocess_g(const ad::Tensor& y) const;
    Image preprocess(const Image& x) const;
    Image postprocess(const Image& y) const;
};

struct DefenseSpec {
    DefenseKind kind = DefenseKind::Identity;
    bool flip_h = true, flip_v = true;  // Table-style default: both axes
    std::string external_command;
    bool external_abort_on_fail = true;
    int external_timeout_sec = 60;

    // samples fresh parameters; deterministic in `seed`
    DefenseTransform sample(std::uint64_t seed) const;
};

DefenseTransform random_ensemble(std::uint64_t seed);

// counts action types drawn by random_ensemble; used for the sampling test
std::array<int, 3> ensemble_action_histogram(std::uint64_t seed, int ensembles);

// evaluates all 8 dihedral candidates, returns the argmin-MSE output
struct SelfEnsembleResult {
    int chosen = 0;  // dihedral index 0..7
    Image output;
    double mse = 0.0;
};
SelfEnsembleResult geometric_self_ensemble(
    const std::function<Image(const Image&)>& codec, const Image& x);

// g(x) = T^-1(C(T(x))); randomized defenses resample per invocation
class DefendedCodec {
public:
    DefendedCodec(const codec::CodecModel* model, DefenseSpec spec,
                  std::uint64_t root_seed)
        : model_(model), spec_(std::move(spec)), root_seed_(root_seed) {}

    Image reconstruct(const Image& x);
    // graph pass for adaptive attacks; defense params sampled per call
    codec::CodecGraph run_g(const ad::Tensor& x, std::uint64_t noise_seed);
    const std::vector<DefenseTransform>& realized() const { return realized_; }

private:
    const codec::CodecModel* model_;
    DefenseSpec spec_;
    std::uint64_t root_seed_;
    std::uint64_t invocation_ = 0;
    std::vector<DefenseTransform> realized_;
};

// external purifier protocol: PNG in, `cmd <in> <out>`, PNG out
Image run_external_purifier(const std::string& cmd, const Image& x);

}  // namespace nicrb::defense
