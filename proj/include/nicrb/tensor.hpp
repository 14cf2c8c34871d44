#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

// Reverse-mode autodiff over the fixed op set used by the toy codecs,
// attack losses and differentiable defenses. Double precision throughout.

namespace nicrb::ad {

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::string op = "leaf";
    std::vector<NodePtr> parents;
    // Accumulates vector-Jacobian products into parents' grad buffers.
    std::function<void(Node&)> backward_fn;

    std::size_t numel() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor leaf(std::vector<int> shape, std::vector<double> data,
                       bool requires_grad = false);
    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value,
                       bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool valid() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    const std::vector<double>& data() const { return node_->data; }
    std::vector<double>& mutable_data() { return node_->data; }
    const std::vector<double>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    std::size_t numel() const { return node_->numel(); }
    double item() const;
    NodePtr node() const { return node_; }

    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

private:
    NodePtr node_;
};

// Populates grad on every reachable requires_grad leaf. `loss` must be scalar.
void backward(const Tensor& loss);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor pow_scalar(const Tensor& a, double exponent);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
// grad 1 inside [lo, hi], 0 outside (subgradient 0 at the boundary)
Tensor clamp(const Tensor& a, double lo, double hi);
// forward = round, backward = identity (straight-through)
Tensor round_ste(const Tensor& a);
// x + u, u ~ U[-0.5, 0.5] elementwise from `seed`; gradient passes through
Tensor add_uniform_noise(const Tensor& a, std::uint64_t seed);

// ---- reductions ----
Tensor reduce_sum(const Tensor& a);
Tensor reduce_mean(const Tensor& a);

// ---- image ops; image tensors are [C, H, W] ----
// zero padding, square kernel; weight [Cout, Cin, K, K], bias [Cout]
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int pad);
// out = (in - 1) * stride - 2 * pad + K + out_pad
Tensor conv2d_transpose(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, int stride, int pad, int out_pad);
// separable per-channel blur, reflect boundary
Tensor gaussian_blur(const Tensor& x, int ksize, double sigma);
Tensor downsample2x(const Tensor& x);  // 2x2 average pooling
Tensor upsample2x(const Tensor& x);    // nearest neighbour
Tensor channel_select(const Tensor& x, int channel);
// out_c = sum_k M[c][k] * x_k + b[c]; M is rows-out by channels-in
Tensor channel_affine(const Tensor& x,
                      const std::vector<std::vector<double>>& m,
                      const std::vector<double>& b);
Tensor reflect_pad(const Tensor& x, int top, int bottom, int left, int right);
Tensor crop(const Tensor& x, int top, int left, int height, int width);
Tensor concat_channels(const Tensor& a, const Tensor& b);

// one-level Haar split; each band is [C, H/2, W/2] (H, W must be even)
struct HaarBands {
    Tensor ll, lh, hl, hh;
};
HaarBands haar_split(const Tensor& x);
Tensor haar_merge(const HaarBands& bands);

// gather permutation: out[i] = x[index[i]]; exact adjoint scatter.
// Covers flips, rolls and channel reorders.
Tensor index_permute(const Tensor& x, std::vector<int> out_shape,
                     std::vector<std::int64_t> index);
// bilinear rotation about the image centre, reflect-padded source reads
Tensor rotate_bilinear(const Tensor& x, double degrees);

// ---- colour primitives (piecewise transfer curves with exact VJPs) ----
Tensor srgb_to_linear(const Tensor& x);
Tensor linear_to_srgb(const Tensor& x);
Tensor lab_f(const Tensor& x);      // cbrt above (6/29)^3, linear tail below
Tensor lab_f_inv(const Tensor& x);

// ---- entropy coding rate (piecewise-linear CDF) ----
// theta: [C, segments] increment logits over knots -L..L spaced 1 apart.
// Returns per-element -log2 p(v) where p(v) = CDF(v+0.5) - CDF(v-0.5),
// floored at prob_floor. Differentiable in both v and theta.
Tensor pwl_rate(const Tensor& v, const Tensor& theta, double symbol_bound,
                double prob_floor = 1e-9);

// ---- monotone per-channel tone curve (cadv) ----
// params: [2 + knots] = {lo_logit-ish base, increments...}; see curve.cpp.
// Applies a monotone piecewise-linear curve over [lo, hi] to every element.
Tensor monotone_curve(const Tensor& x, const Tensor& knot_values, double lo,
                      double hi);
// knot ordinates from free parameters: cumulative softplus, affinely mapped
// so curve(lo) = lo, curve(hi) = hi.
Tensor curve_knots_from_params(const Tensor& raw, double lo, double hi);

// deterministic RNG helpers shared across the library
std::uint64_t splitmix64(std::uint64_t& state);
double uniform01(std::uint64_t& state);
double normal01(std::uint64_t& state);
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v);
std::uint64_t hash_string(const std::string& s);

}  // namespace nicrb::ad
