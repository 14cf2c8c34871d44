#include "nicrb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace nicrb::ad {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw TensorError("non-positive dim in shape");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw TensorError(std::string(op) + ": shape mismatch " +
                          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

NodePtr make_node(std::string op, std::vector<int> shape,
                  std::vector<NodePtr> parents) {
    auto n = std::make_shared<Node>();
    n->op = std::move(op);
    n->shape = std::move(shape);
    n->parents = std::move(parents);
    n->data.resize(shape_numel(n->shape));
    for (const auto& p : n->parents) n->requires_grad |= p->requires_grad;
    return n;
}

// reflect index with edge repeat: ...2 1 0 | 0 1 2 ... n-1 | n-1 n-2...
int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

void require_chw(const char* op, const Tensor& x) {
    if (x.shape().size() != 3)
        throw TensorError(std::string(op) + ": expected [C,H,W], got " +
                          shape_str(x.shape()));
}

}  // namespace

Tensor Tensor::leaf(std::vector<int> shape, std::vector<double> data,
                    bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    if (data.size() != shape_numel(n->shape))
        throw TensorError("leaf: data length does not match shape");
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    std::vector<double> d(shape_numel(shape), value);
    return leaf(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return leaf({1}, {value}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) throw TensorError("item: tensor is not scalar");
    return node_->data[0];
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw TensorError("backward: loss must be scalar");
    // topological order by DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // iterative post-order
    struct Frame {
        Node* n;
        std::size_t next = 0;
    };
    std::vector<Frame> frames{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!frames.empty()) {
        Frame& f = frames.back();
        if (f.next < f.n->parents.size()) {
            Node* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                frames.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            frames.pop_back();
        }
    }
    for (Node* n : order) n->ensure_grad();
    loss.node()->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            for (auto& p : n->parents)
                if (p->requires_grad) p->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

// ---------------- elementwise ----------------

namespace {

Tensor binary_op(const char* name, const Tensor& a, const Tensor& b,
                 double (*fwd)(double, double),
                 void (*bwd)(double, double, double, double&, double&)) {
    check_same_shape(name, a, b);
    auto n = make_node(name, a.shape(), {a.node(), b.node()});
    const auto& ad_ = a.data();
    const auto& bd = b.data();
    for (std::size_t i = 0; i < n->data.size(); ++i)
        n->data[i] = fwd(ad_[i], bd[i]);
    if (n->requires_grad) {
        n->backward_fn = [fwd, bwd](Node& self) {
            Node* pa = self.parents[0].get();
            Node* pb = self.parents[1].get();
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                double ga = 0, gb = 0;
                bwd(pa->data[i], pb->data[i], self.grad[i], ga, gb);
                if (pa->requires_grad) pa->grad[i] += ga;
                if (pb->requires_grad) pb->grad[i] += gb;
            }
        };
    }
    return Tensor(n);
}

template <class F, class B>
Tensor unary_op(const char* name, const Tensor& a, F fwd, B bwd) {
    auto n = make_node(name, a.shape(), {a.node()});
    const auto& ad_ = a.data();
    for (std::size_t i = 0; i < n->data.size(); ++i) n->data[i] = fwd(ad_[i]);
    if (n->requires_grad) {
        n->backward_fn = [fwd, bwd](Node& self) {
            Node* p = self.parents[0].get();
            for (std::size_t i = 0; i < self.data.size(); ++i)
                p->grad[i] += bwd(p->data[i], self.data[i]) * self.grad[i];
        };
    }
    return Tensor(n);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double g, double& ga, double& gb) {
            ga = g;
            gb = g;
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double g, double& ga, double& gb) {
            ga = g;
            gb = -g;
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& ga, double& gb) {
            ga = g * y;
            gb = g * x;
        });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double g, double& ga, double& gb) {
            ga = g / y;
            gb = -g * x / (y * y);
        });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(
        "add_scalar", a, [s](double x) { return x + s; },
        [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
    return unary_op(
        "mul_scalar", a, [s](double x) { return x * s; },
        [s](double, double) { return s; });
}

Tensor pow_scalar(const Tensor& a, double e) {
    return unary_op(
        "pow", a, [e](double x) { return std::pow(x, e); },
        [e](double x, double y) {
            if (x == 0.0) return e > 1.0 ? 0.0 : 0.0;  // subgradient 0 at kink
            return e * y / x;
        });
}

Tensor log(const Tensor& a) {
    return unary_op(
        "log", a, [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        "exp", a, [](double x) { return std::exp(x); },
        [](double, double y) { return y; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(
        "sqrt", a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Tensor abs(const Tensor& a) {
    return unary_op(
        "abs", a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        "sigmoid", a,
        [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
    return unary_op(
        "softplus", a,
        [](double x) {
            return x > 30.0 ? x : std::log1p(std::exp(x));
        },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    return unary_op(
        "leaky_relu", a,
        [slope](double x) { return x >= 0 ? x : slope * x; },
        [slope](double x, double) { return x >= 0 ? 1.0 : slope; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    return unary_op(
        "clamp", a,
        [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
        [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor round_ste(const Tensor& a) {
    return unary_op(
        "round_ste", a, [](double x) { return std::nearbyint(x); },
        [](double, double) { return 1.0; });
}

Tensor add_uniform_noise(const Tensor& a, std::uint64_t seed) {
    auto n = make_node("uniform_noise", a.shape(), {a.node()});
    std::uint64_t state = seed;
    const auto& ad_ = a.data();
    for (std::size_t i = 0; i < n->data.size(); ++i)
        n->data[i] = ad_[i] + (uniform01(state) - 0.5);
    if (n->requires_grad) {
        n->backward_fn = [](Node& self) {
            Node* p = self.parents[0].get();
            for (std::size_t i = 0; i < self.data.size(); ++i)
                p->grad[i] += self.grad[i];
        };
    }
    return Tensor(n);
}

// ---------------- reductions ----------------

Tensor reduce_sum(const Tensor& a) {
    auto n = make_node("reduce_sum", {1}, {a.node()});
    double s = 0;
    for (double v : a.data()) s += v;
    n->data[0] = s;
    if (n->requires_grad) {
        n->backward_fn = [](Node& self) {
            Node* p = self.parents[0].get();
            double g = self.grad[0];
            for (auto& v : p->grad) v += g;
        };
    }
    return Tensor(n);
}

Tensor reduce_mean(const Tensor& a) {
    auto n = make_node("reduce_mean", {1}, {a.node()});
    double s = 0;
    for (double v : a.data()) s += v;
    n->data[0] = s / static_cast<double>(a.numel());
    if (n->requires_grad) {
        double inv = 1.0 / static_cast<double>(a.numel());
        n->backward_fn = [inv](Node& self) {
            Node* p = self.parents[0].get();
            double g = self.grad[0] * inv;
            for (auto& v : p->grad) v += g;
        };
    }
    return Tensor(n);
}

// ---------------- conv ----------------

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int pad) {
    require_chw("conv2d", x);
    if (weight.shape().size() != 4)
        throw TensorError("conv2d: weight must be [Cout,Cin,K,K]");
    const int cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const int cout = weight.shape()[0], k = weight.shape()[2];
    if (weight.shape()[1] != cin)
        throw TensorError("conv2d: weight Cin " +
                          std::to_string(weight.shape()[1]) +
                          " does not match input channels " +
                          std::to_string(cin));
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (w + 2 * pad - k) / stride + 1;
    if (oh <= 0 || ow <= 0) throw TensorError("conv2d: output would be empty");
    auto n = make_node("conv2d", {cout, oh, ow},
                       {x.node(), weight.node(), bias.node()});
    const double* xd = x.data().data();
    const double* wd = weight.data().data();
    const double* bd = bias.data().data();
    for (int oc = 0; oc < cout; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bd[oc];
                for (int ic = 0; ic < cin; ++ic) {
                    for (int ky = 0; ky < k; ++ky) {
                        int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= w) continue;
                            acc += xd[(ic * h + iy) * w + ix] *
                                   wd[((oc * cin + ic) * k + ky) * k + kx];
                        }
                    }
                }
                n->data[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    if (n->requires_grad) {
        n->backward_fn = [stride, pad, cin, h, w, cout, k, oh, ow](Node& self) {
            Node* px = self.parents[0].get();
            Node* pw = self.parents[1].get();
            Node* pb = self.parents[2].get();
            for (int oc = 0; oc < cout; ++oc) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        double g = self.grad[(oc * oh + oy) * ow + ox];
                        if (g == 0.0) continue;
                        if (pb->requires_grad) pb->grad[oc] += g;
                        for (int ic = 0; ic < cin; ++ic) {
                            for (int ky = 0; ky < k; ++ky) {
                                int iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= h) continue;
                                for (int kx = 0; kx < k; ++kx) {
                                    int ix = ox * stride - pad + kx;
                                    if (ix < 0 || ix >= w) continue;
                                    std::size_t xi = (ic * h + iy) * w + ix;
                                    std::size_t wi =
                                        ((oc * cin + ic) * k + ky) * k + kx;
                                    if (px->requires_grad)
                                        px->grad[xi] += g * pw->data[wi];
                                    if (pw->requires_grad)
                                        pw->grad[wi] += g * px->data[xi];
                                }
                            }
                        }
                    }
                }
            }
        };
    }
    return Tensor(n);
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, int stride, int pad, int out_pad) {
    require_chw("conv2d_transpose", x);
    if (weight.shape().size() != 4)
        throw TensorError("conv2d_transpose: weight must be [Cin,Cout,K,K]");
    const int cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    if (weight.shape()[0] != cin)
        throw TensorError("conv2d_transpose: weight Cin mismatch");
    const int cout = weight.shape()[1], k = weight.shape()[2];
    const int oh = (h - 1) * stride - 2 * pad + k + out_pad;
    const int ow = (w - 1) * stride - 2 * pad + k + out_pad;
    if (oh <= 0 || ow <= 0)
        throw TensorError("conv2d_transpose: output would be empty");
    auto n = make_node("conv2d_transpose", {cout, oh, ow},
                       {x.node(), weight.node(), bias.node()});
    const double* xd = x.data().data();
    const double* wd = weight.data().data();
    const double* bd = bias.data().data();
    for (int oc = 0; oc < cout; ++oc)
        for (int i = 0; i < oh * ow; ++i) n->data[oc * oh * ow + i] = bd[oc];
    for (int ic = 0; ic < cin; ++ic) {
        for (int iy = 0; iy < h; ++iy) {
            for (int ix = 0; ix < w; ++ix) {
                double v = xd[(ic * h + iy) * w + ix];
                for (int oc = 0; oc < cout; ++oc) {
                    for (int ky = 0; ky < k; ++ky) {
                        int oy = iy * stride - pad + ky;
                        if (oy < 0 || oy >= oh) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            int ox = ix * stride - pad + kx;
                            if (ox < 0 || ox >= ow) continue;
                            n->data[(oc * oh + oy) * ow + ox] +=
                                v * wd[((ic * cout + oc) * k + ky) * k + kx];
                        }
                    }
                }
            }
        }
    }
    if (n->requires_grad) {
        n->backward_fn = [stride, pad, cin, h, w, cout, k, oh, ow](Node& self) {
            Node* px = self.parents[0].get();
            Node* pw = self.parents[1].get();
            Node* pb = self.parents[2].get();
            if (pb->requires_grad) {
                for (int oc = 0; oc < cout; ++oc)
                    for (int i = 0; i < oh * ow; ++i)
                        pb->grad[oc] += self.grad[oc * oh * ow + i];
            }
            for (int ic = 0; ic < cin; ++ic) {
                for (int iy = 0; iy < h; ++iy) {
                    for (int ix = 0; ix < w; ++ix) {
                        std::size_t xi = (ic * h + iy) * w + ix;
                        for (int oc = 0; oc < cout; ++oc) {
                            for (int ky = 0; ky < k; ++ky) {
                                int oy = iy * stride - pad + ky;
                                if (oy < 0 || oy >= oh) continue;
                                for (int kx = 0; kx < k; ++kx) {
                                    int ox = ix * stride - pad + kx;
                                    if (ox < 0 || ox >= ow) continue;
                                    double g =
                                        self.grad[(oc * oh + oy) * ow + ox];
                                    std::size_t wi =
                                        ((ic * cout + oc) * k + ky) * k + kx;
                                    if (px->requires_grad)
                                        px->grad[xi] += g * pw->data[wi];
                                    if (pw->requires_grad)
                                        pw->grad[wi] += g * px->data[xi];
                                }
                            }
                        }
                    }
                }
            }
        };
    }
    return Tensor(n);
}

// ---------------- blur / resampling ----------------

namespace {

std::vector<double> gaussian_kernel(int ksize, double sigma) {
    std::vector<double> k(ksize);
    double c = (ksize - 1) / 2.0, s = 0;
    for (int i = 0; i < ksize; ++i) {
        k[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
        s += k[i];
    }
    for (auto& v : k) v /= s;
    return k;
}

}  // namespace

Tensor gaussian_blur(const Tensor& x, int ksize, double sigma) {
    require_chw("gaussian_blur", x);
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    auto kern = gaussian_kernel(ksize, sigma);
    const int r = ksize / 2;
    auto n = make_node("gaussian_blur", x.shape(), {x.node()});
    // horizontal then vertical, reflect boundary
    std::vector<double> tmp(x.numel());
    const double* xd = x.data().data();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                double acc = 0;
                for (int t = 0; t < ksize; ++t)
                    acc += kern[t] *
                           xd[(ch * h + y) * w + reflect_index(xx + t - r, w)];
                tmp[(ch * h + y) * w + xx] = acc;
            }
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                double acc = 0;
                for (int t = 0; t < ksize; ++t)
                    acc += kern[t] *
                           tmp[(ch * h + reflect_index(y + t - r, h)) * w + xx];
                n->data[(ch * h + y) * w + xx] = acc;
            }
    if (n->requires_grad) {
        n->backward_fn = [c, h, w, kern, r, ksize](Node& self) {
            Node* p = self.parents[0].get();
            std::vector<double> tmp2(self.data.size(), 0.0);
            // adjoint of vertical pass
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx) {
                        double g = self.grad[(ch * h + y) * w + xx];
                        if (g == 0) continue;
                        for (int t = 0; t < ksize; ++t)
                            tmp2[(ch * h + reflect_index(y + t - r, h)) * w +
                                 xx] += kern[t] * g;
                    }
            // adjoint of horizontal pass
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx) {
                        double g = tmp2[(ch * h + y) * w + xx];
                        if (g == 0) continue;
                        for (int t = 0; t < ksize; ++t)
                            p->grad[(ch * h + y) * w +
                                    reflect_index(xx + t - r, w)] +=
                                kern[t] * g;
                    }
        };
    }
    return Tensor(n);
}

Tensor downsample2x(const Tensor& x) {
    require_chw("downsample2x", x);
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    if (h % 2 || w % 2) throw TensorError("downsample2x: dims must be even");
    const int oh = h / 2, ow = w / 2;
    auto n = make_node("downsample2x", {c, oh, ow}, {x.node()});
    const double* xd = x.data().data();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                const double* base = xd + (ch * h + 2 * y) * w + 2 * xx;
                n->data[(ch * oh + y) * ow + xx] =
                    0.25 * (base[0] + base[1] + base[w] + base[w + 1]);
            }
    if (n->requires_grad) {
        n->backward_fn = [c, h, w, oh, ow](Node& self) {
            Node* p = self.parents[0].get();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx) {
                        double g =
                            0.25 * self.grad[(ch * oh + y) * ow + xx];
                        double* base =
                            p->grad.data() + (ch * h + 2 * y) * w + 2 * xx;
                        base[0] += g;
                        base[1] += g;
                        base[w] += g;
                        base[w + 1] += g;
                    }
        };
    }
    return Tensor(n);
}

Tensor upsample2x(const Tensor& x) {
    require_chw("upsample2x", x);
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const int oh = h * 2, ow = w * 2;
    auto n = make_node("upsample2x", {c, oh, ow}, {x.node()});
    const double* xd = x.data().data();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx)
                n->data[(ch * oh + y) * ow + xx] =
                    xd[(ch * h + y / 2) * w + xx / 2];
    if (n->requires_grad) {
        n->backward_fn = [c, h, w, oh, ow](Node& self) {
            Node* p = self.parents[0].get();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx)
                        p->grad[(ch * h + y / 2) * w + xx / 2] +=
                            self.grad[(ch * oh + y) * ow + xx];
        };
    }
    return Tensor(n);
}

Tensor channel_select(const Tensor& x, int channel) {
    require_chw("channel_select", x);
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    if (channel < 0 || channel >= c)
        throw TensorError("channel_select: channel out of range");
    auto n = make_node("channel_select", {1, h, w}, {x.node()});
    std::copy(x.data().begin() + static_cast<std::size_t>(channel) * h * w,
              x.data().begin() + static_cast<std::size_t>(channel + 1) * h * w,
              n->data.begin());
    if (n->requires_grad) {
        n->backward_fn = [channel, h, w](Node& self) {
            Node* p = self.parents[0].get();
            std::size_t off = static_cast<std::size_t>(channel) * h * w;
            for (std::size_t i = 0; i < self.data.size(); ++i)
                p->grad[off + i] += self.grad[i];
        };
    }
    return Tensor(n);
}

Tensor channel_affine(const Tensor& x,
                      const std::vector<std::vector<double>>& m,
                      const std::vector<double>& b) {
    require_chw("channel_affine", x);
    const int cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const int cout = static_cast<int>(m.size());
    if (static_cast<int>(b.size()) != cout)
        throw TensorError("channel_affine: bias size mismatch");
    for (const auto& row : m)
        if (static_cast<int>(row.size()) != cin)
            throw TensorError("channel_affine: matrix column count mismatch");
    auto n = make_node("channel_affine", {cout, h, w}, {x.node()});
    const double* xd = x.data().data();
    const int hw = h * w;
    for (int oc = 0; oc < cout; ++oc)
        for (int i = 0; i < hw; ++i) {
            double acc = b[oc];
            for (int ic = 0; ic < cin; ++ic)
                acc += m[oc][ic] * xd[ic * hw + i];
            n->data[oc * hw + i] = acc;
        }
    if (n->requires_grad) {
        n->backward_fn = [m, cin, cout, hw](Node& self) {
            Node* p = self.parents[0].get();
            for (int oc = 0; oc < cout; ++oc)
                for (int i = 0; i < hw; ++i) {
                    double g = self.grad[oc * hw + i];
                    for (int ic = 0; ic < cin; ++ic)
                        p->grad[ic * hw + i] += g * m[oc][ic];
                }
        };
    }
    return Tensor(n);
}

Tensor reflect_pad(const Tensor& x, int top, int bottom, int left, int right) {
    require_chw("reflect_pad", x);
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const int oh = h + top + bottom, ow = w + left + right;
    auto n = make_node("reflect_pad", {c, oh, ow}, {x.node()});
    const double* xd = x.data().data();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx)
                n->data[(ch * oh + y) * ow + xx] =
                    xd[(ch * h + reflect_index(y - top, h)) * w +
                       reflect_index(xx - left, w)];
    if (n->requires_grad) {
        n->backward_fn = [c, h, w, oh, ow, top, left](Node& self) {
            Node* p = self.parents[0].get();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx)
                        p->grad[(ch * h + reflect_index(y - top, h)) * w +
                                reflect_index(xx - left, w)] +=
                            self.grad[(ch * oh + y) * ow + xx];
        };
    }
    return Tensor(n);
}

Tensor crop(const Tensor& x, int top, int left, int height, int width) {
    require_chw("crop", x);
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    if (top < 0 || left < 0 || top + height > h || left + width > w)
        throw TensorError("crop: window out of bounds");
    auto n = make_node("crop", {c, height, width}, {x.node()});
    const double* xd = x.data().data();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < height; ++y)
            for (int xx = 0; xx < width; ++xx)
                n->data[(ch * height + y) * width + xx] =
                    xd[(ch * h + top + y) * w + left + xx];
    if (n->requires_grad) {
        n->backward_fn = [c, h, w, top, left, height, width](Node& self) {
            Node* p = self.parents[0].get();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < height; ++y)
                    for (int xx = 0; xx < width; ++xx)
                        p->grad[(ch * h + top + y) * w + left + xx] +=
                            self.grad[(ch * height + y) * width + xx];
        };
    }
    return Tensor(n);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_chw("concat_channels", a);
    require_chw("concat_channels", b);
    if (a.shape()[1] != b.shape()[1] || a.shape()[2] != b.shape()[2])
        throw TensorError("concat_channels: spatial dims differ");
    const int ca = a.shape()[0], cb = b.shape()[0];
    const int h = a.shape()[1], w = a.shape()[2];
    auto n = make_node("concat_channels", {ca + cb, h, w},
                       {a.node(), b.node()});
    std::copy(a.data().begin(), a.data().end(), n->data.begin());
    std::copy(b.data().begin(), b.data().end(), n->data.begin() + a.numel());
    if (n->requires_grad) {
        std::size_t na = a.numel();
        n->backward_fn = [na](Node& self) {
            Node* pa = self.parents[0].get();
            Node* pb = self.parents[1].get();
            if (pa->requires_grad)
                for (std::size_t i = 0; i < na; ++i) pa->grad[i] += self.grad[i];
            if (pb->requires_grad)
                for (std::size_t i = na; i < self.data.size(); ++i)
                    pb->grad[i - na] += self.grad[i];
        };
    }
    return Tensor(n);
}

// ---------------- Haar ----------------

namespace {

// per 2x2 block [a b; c d]: ll=(a+b+c+d)/2, lh=(a-b+c-d)/2,
// hl=(a+b-c-d)/2, hh=(a-b-c+d)/2  (orthonormal, self-inverse up to layout)
Tensor haar_band(const Tensor& x, double sb, double sc, double sd) {
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const int oh = h / 2, ow = w / 2;
    auto n = make_node("haar", {c, oh, ow}, {x.node()});
    const double* xd = x.data().data();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                const double* base = xd + (ch * h + 2 * y) * w + 2 * xx;
                n->data[(ch * oh + y) * ow + xx] =
                    0.5 * (base[0] + sb * base[1] + sc * base[w] +
                           sd * base[w + 1]);
            }
    if (n->requires_grad) {
        n->backward_fn = [c, h, w, oh, ow, sb, sc, sd](Node& self) {
            Node* p = self.parents[0].get();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx) {
                        double g = 0.5 * self.grad[(ch * oh + y) * ow + xx];
                        double* base =
                            p->grad.data() + (ch * h + 2 * y) * w + 2 * xx;
                        base[0] += g;
                        base[1] += sb * g;
                        base[w] += sc * g;
                        base[w + 1] += sd * g;
                    }
        };
    }
    return Tensor(n);
}

}  // namespace

HaarBands haar_split(const Tensor& x) {
    require_chw("haar_split", x);
    if (x.shape()[1] % 2 || x.shape()[2] % 2)
        throw TensorError("haar_split: dims must be even");
    return HaarBands{haar_band(x, 1, 1, 1), haar_band(x, -1, 1, -1),
                     haar_band(x, 1, -1, -1), haar_band(x, -1, -1, 1)};
}

Tensor haar_merge(const HaarBands& bands) {
    const auto& s = bands.ll.shape();
    check_same_shape("haar_merge", bands.ll, bands.lh);
    check_same_shape("haar_merge", bands.ll, bands.hl);
    check_same_shape("haar_merge", bands.ll, bands.hh);
    const int c = s[0], oh = s[1], ow = s[2];
    const int h = oh * 2, w = ow * 2;
    auto n = make_node("haar_merge", {c, h, w},
                       {bands.ll.node(), bands.lh.node(), bands.hl.node(),
                        bands.hh.node()});
    const double* ll = bands.ll.data().data();
    const double* lh = bands.lh.data().data();
    const double* hl = bands.hl.data().data();
    const double* hh = bands.hh.data().data();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                std::size_t bi = (ch * oh + y) * ow + xx;
                double a = ll[bi], bq = lh[bi], cq = hl[bi], d = hh[bi];
                double* base = n->data.data() + (ch * h + 2 * y) * w + 2 * xx;
                base[0] = 0.5 * (a + bq + cq + d);
                base[1] = 0.5 * (a - bq + cq - d);
                base[w] = 0.5 * (a + bq - cq - d);
                base[w + 1] = 0.5 * (a - bq - cq + d);
            }
    if (n->requires_grad) {
        n->backward_fn = [c, h, w, oh, ow](Node& self) {
            const double sgn[4][4] = {{1, 1, 1, 1},
                                      {1, -1, 1, -1},
                                      {1, 1, -1, -1},
                                      {1, -1, -1, 1}};
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx) {
                        std::size_t bi = (ch * oh + y) * ow + xx;
                        const double* gb =
                            self.grad.data() + (ch * h + 2 * y) * w + 2 * xx;
                        double g[4] = {gb[0], gb[1], gb[w], gb[w + 1]};
                        for (int band = 0; band < 4; ++band) {
                            Node* p = self.parents[band].get();
                            if (!p->requires_grad) continue;
                            double acc = 0;
                            for (int q = 0; q < 4; ++q)
                                acc += sgn[q][band] * g[q];
                            p->grad[bi] += 0.5 * acc;
                        }
                    }
        };
    }
    return Tensor(n);
}

// ---------------- permutation / rotation ----------------

Tensor index_permute(const Tensor& x, std::vector<int> out_shape,
                     std::vector<std::int64_t> index) {
    if (index.size() != shape_numel(out_shape))
        throw TensorError("index_permute: index size mismatch");
    auto n = make_node("index_permute", std::move(out_shape), {x.node()});
    const auto& xd = x.data();
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= static_cast<std::int64_t>(xd.size()))
            throw TensorError("index_permute: index out of range");
        n->data[i] = xd[index[i]];
    }
    if (n->requires_grad) {
        auto idx = std::make_shared<std::vector<std::int64_t>>(
            std::move(index));
        n->backward_fn = [idx](Node& self) {
            Node* p = self.parents[0].get();
            for (std::size_t i = 0; i < self.data.size(); ++i)
                p->grad[(*idx)[i]] += self.grad[i];
        };
    }
    return Tensor(n);
}

Tensor rotate_bilinear(const Tensor& x, double degrees) {
    require_chw("rotate_bilinear", x);
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    // snap to exact lattice rotation so 90-degree multiples round-trip
    double norm = std::fmod(degrees, 360.0);
    if (norm < 0) norm += 360.0;
    if (std::abs(norm - std::nearbyint(norm)) < 1e-12 &&
        std::fmod(std::nearbyint(norm), 90.0) == 0.0 && h == w) {
        int quarter = static_cast<int>(std::nearbyint(norm)) / 90 % 4;
        if (quarter == 0) return mul_scalar(x, 1.0);  // graph identity
        std::vector<std::int64_t> index(x.numel());
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    // source coordinate for a CCW rotation by `quarter`
                    int sy = y, sx = xx;
                    for (int q = 0; q < quarter; ++q) {
                        int ny = sx;
                        int nx = h - 1 - sy;
                        sy = ny;
                        sx = nx;
                    }
                    index[(static_cast<std::size_t>(ch) * h + y) * w + xx] =
                        (static_cast<std::int64_t>(ch) * h + sy) * w + sx;
                }
        return index_permute(x, x.shape(), std::move(index));
    }
    const double rad = norm * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    auto n = make_node("rotate_bilinear", x.shape(), {x.node()});
    // per output pixel: 4 source indices + weights
    struct Tap {
        std::int32_t i00, i01, i10, i11;
        double w00, w01, w10, w11;
    };
    auto taps = std::make_shared<std::vector<Tap>>(
        static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
            // inverse map: rotate output coord by -theta
            double dy = y - cy, dx = xx - cx;
            double sy = cs * dy + sn * dx + cy;
            double sx = -sn * dy + cs * dx + cx;
            int y0 = static_cast<int>(std::floor(sy));
            int x0 = static_cast<int>(std::floor(sx));
            double fy = sy - y0, fx = sx - x0;
            Tap t;
            int ry0 = reflect_index(y0, h), ry1 = reflect_index(y0 + 1, h);
            int rx0 = reflect_index(x0, w), rx1 = reflect_index(x0 + 1, w);
            t.i00 = ry0 * w + rx0;
            t.i01 = ry0 * w + rx1;
            t.i10 = ry1 * w + rx0;
            t.i11 = ry1 * w + rx1;
            t.w00 = (1 - fy) * (1 - fx);
            t.w01 = (1 - fy) * fx;
            t.w10 = fy * (1 - fx);
            t.w11 = fy * fx;
            (*taps)[static_cast<std::size_t>(y) * w + xx] = t;
        }
    const double* xd = x.data().data();
    const int hw = h * w;
    for (int ch = 0; ch < c; ++ch) {
        const double* src = xd + static_cast<std::size_t>(ch) * hw;
        double* dst = n->data.data() + static_cast<std::size_t>(ch) * hw;
        for (int i = 0; i < hw; ++i) {
            const Tap& t = (*taps)[i];
            dst[i] = t.w00 * src[t.i00] + t.w01 * src[t.i01] +
                     t.w10 * src[t.i10] + t.w11 * src[t.i11];
        }
    }
    if (n->requires_grad) {
        n->backward_fn = [taps, c, hw](Node& self) {
            Node* p = self.parents[0].get();
            for (int ch = 0; ch < c; ++ch) {
                double* g = p->grad.data() + static_cast<std::size_t>(ch) * hw;
                const double* og =
                    self.grad.data() + static_cast<std::size_t>(ch) * hw;
                for (int i = 0; i < hw; ++i) {
                    const Tap& t = (*taps)[i];
                    g[t.i00] += t.w00 * og[i];
                    g[t.i01] += t.w01 * og[i];
                    g[t.i10] += t.w10 * og[i];
                    g[t.i11] += t.w11 * og[i];
                }
            }
        };
    }
    return Tensor(n);
}

// ---------------- colour primitives ----------------

Tensor srgb_to_linear(const Tensor& x) {
    return unary_op(
        "srgb_to_linear", x,
        [](double v) {
            return v <= 0.04045 ? v / 12.92
                                : std::pow((v + 0.055) / 1.055, 2.4);
        },
        [](double v, double) {
            return v <= 0.04045
                       ? 1.0 / 12.92
                       : (2.4 / 1.055) * std::pow((v + 0.055) / 1.055, 1.4);
        });
}

Tensor linear_to_srgb(const Tensor& x) {
    return unary_op(
        "linear_to_srgb", x,
        [](double v) {
            return v <= 0.0031308 ? 12.92 * v
                                  : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
        },
        [](double v, double) {
            if (v <= 0.0031308) return 12.92;
            double vv = std::max(v, 1e-12);
            return (1.055 / 2.4) * std::pow(vv, 1.0 / 2.4 - 1.0);
        });
}

Tensor lab_f(const Tensor& x) {
    constexpr double d = 6.0 / 29.0;
    constexpr double d3 = d * d * d;
    return unary_op(
        "lab_f", x,
        [](double t) {
            return t > d3 ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
        },
        [](double t, double y) {
            return t > d3 ? 1.0 / (3.0 * y * y) : 1.0 / (3 * d * d);
        });
}

Tensor lab_f_inv(const Tensor& x) {
    constexpr double d = 6.0 / 29.0;
    return unary_op(
        "lab_f_inv", x,
        [](double t) {
            return t > d ? t * t * t : 3 * d * d * (t - 4.0 / 29.0);
        },
        [](double t, double) { return t > d ? 3 * t * t : 3 * d * d; });
}

// ---------------- piecewise-linear CDF rate ----------------

namespace {

struct PwlCdf {
    // increments w_j = softplus(theta_j) + eps, knots at -L + j*dt
    const double* theta;
    int segments;
    double bound, dt, total;
    std::vector<double> w, prefix;

    PwlCdf(const double* th, int seg, double b) : theta(th), segments(seg),
                                                  bound(b) {
        dt = 2 * b / seg;
        w.resize(seg);
        prefix.resize(seg + 1, 0.0);
        total = 0;
        for (int j = 0; j < seg; ++j) {
            double t = th[j];
            w[j] = (t > 30 ? t : std::log1p(std::exp(t))) + 1e-6;
            total += w[j];
            prefix[j + 1] = total;
        }
    }

    // CDF(t) and, via out params, d/dt plus segment info for dtheta
    double cdf(double t, double& ddt, int& seg, double& frac) const {
        if (t <= -bound) {
            ddt = 0;
            seg = -1;
            frac = 0;
            return 0.0;
        }
        if (t >= bound) {
            ddt = 0;
            seg = segments;
            frac = 0;
            return 1.0;
        }
        double pos = (t + bound) / dt;
        seg = std::min(segments - 1, static_cast<int>(pos));
        frac = pos - seg;
        ddt = w[seg] / (total * dt);
        return (prefix[seg] + frac * w[seg]) / total;
    }

    // dCDF/dw_j at (seg, frac): (ind - CDF) / total, ind = [j<seg] + frac[j==seg]
    double dcdf_dw(int seg, double frac, double cdf_val, int j) const {
        if (seg < 0) return 0.0;
        if (seg >= segments) return 0.0;
        double ind = (j < seg ? 1.0 : (j == seg ? frac : 0.0));
        return (ind - cdf_val) / total;
    }
};

}  // namespace

Tensor pwl_rate(const Tensor& v, const Tensor& theta, double symbol_bound,
                double prob_floor) {
    require_chw("pwl_rate", v);
    if (theta.shape().size() != 2 || theta.shape()[0] != v.shape()[0])
        throw TensorError("pwl_rate: theta must be [C, segments]");
    const int c = v.shape()[0], h = v.shape()[1], w = v.shape()[2];
    const int seg = theta.shape()[1];
    auto n = make_node("pwl_rate", v.shape(), {v.node(), theta.node()});
    const double ln2 = std::log(2.0);
    const int hw = h * w;
    const double vmax = symbol_bound - 0.5 - 1e-9;
    for (int ch = 0; ch < c; ++ch) {
        PwlCdf cdf(theta.data().data() + static_cast<std::size_t>(ch) * seg,
                   seg, symbol_bound);
        for (int i = 0; i < hw; ++i) {
            double val = v.data()[ch * hw + i];
            val = std::min(vmax, std::max(-vmax, val));
            double d1, d0, f1, f0;
            int s1, s0;
            double p = cdf.cdf(val + 0.5, d1, s1, f1) -
                       cdf.cdf(val - 0.5, d0, s0, f0);
            p = std::max(p, prob_floor);
            n->data[ch * hw + i] = -std::log(p) / ln2;
        }
    }
    if (n->requires_grad) {
        n->backward_fn = [c, hw, seg, symbol_bound, prob_floor, ln2,
                          vmax](Node& self) {
            Node* pv = self.parents[0].get();
            Node* pt = self.parents[1].get();
            for (int ch = 0; ch < c; ++ch) {
                PwlCdf cdf(pt->data.data() + static_cast<std::size_t>(ch) * seg,
                           seg, symbol_bound);
                for (int i = 0; i < hw; ++i) {
                    double g = self.grad[ch * hw + i];
                    if (g == 0) continue;
                    double raw = pv->data[ch * hw + i];
                    double val = std::min(vmax, std::max(-vmax, raw));
                    bool clamped = (raw != val);
                    double d1, d0, f1, f0;
                    int s1, s0;
                    double c1 = cdf.cdf(val + 0.5, d1, s1, f1);
                    double c0 = cdf.cdf(val - 0.5, d0, s0, f0);
                    double p = c1 - c0;
                    if (p <= prob_floor) continue;  // floored: zero grad
                    double dldp = -1.0 / (p * ln2);
                    if (pv->requires_grad && !clamped)
                        pv->grad[ch * hw + i] += g * dldp * (d1 - d0);
                    if (pt->requires_grad) {
                        for (int j = 0; j < seg; ++j) {
                            double dpdw = cdf.dcdf_dw(s1, f1, c1, j) -
                                          cdf.dcdf_dw(s0, f0, c0, j);
                            if (dpdw == 0.0) continue;
                            double th = cdf.theta[j];
                            double sp = 1.0 / (1.0 + std::exp(-th));
                            pt->grad[ch * seg + j] += g * dldp * dpdw * sp;
                        }
                    }
                }
            }
        };
    }
    return Tensor(n);
}

// ---------------- monotone curve ----------------

Tensor curve_knots_from_params(const Tensor& raw, double lo, double hi) {
    if (raw.shape().size() != 1)
        throw TensorError("curve_knots_from_params: raw must be 1-D");
    const int seg = static_cast<int>(raw.numel());
    auto n = make_node("curve_knots", {seg + 1}, {raw.node()});
    std::vector<double> w(seg);
    double total = 0;
    for (int j = 0; j < seg; ++j) {
        double t = raw.data()[j];
        w[j] = (t > 30 ? t : std::log1p(std::exp(t))) + 1e-9;
        total += w[j];
    }
    double acc = 0;
    n->data[0] = lo;
    for (int j = 0; j < seg; ++j) {
        acc += w[j];
        n->data[j + 1] = lo + (hi - lo) * acc / total;
    }
    if (n->requires_grad) {
        n->backward_fn = [seg, lo, hi](Node& self) {
            Node* p = self.parents[0].get();
            std::vector<double> w(seg);
            double total = 0;
            for (int j = 0; j < seg; ++j) {
                double t = p->data[j];
                w[j] = (t > 30 ? t : std::log1p(std::exp(t))) + 1e-9;
                total += w[j];
            }
            std::vector<double> prefix(seg + 1, 0.0);
            for (int j = 0; j < seg; ++j) prefix[j + 1] = prefix[j] + w[j];
            for (int j = 0; j < seg; ++j) {
                double sp = 1.0 / (1.0 + std::exp(-p->data[j]));
                double acc = 0;
                for (int k = 1; k <= seg; ++k) {
                    // d knot_k / d w_j = (hi-lo) * ([j<k] total - prefix_k)/total^2
                    double ind = j < k ? 1.0 : 0.0;
                    double d = (hi - lo) * (ind * total - prefix[k]) /
                               (total * total);
                    acc += self.grad[k] * d;
                }
                p->grad[j] += acc * sp;
            }
        };
    }
    return Tensor(n);
}

Tensor monotone_curve(const Tensor& x, const Tensor& knot_values, double lo,
                      double hi) {
    if (knot_values.shape().size() != 1 || knot_values.numel() < 2)
        throw TensorError("monotone_curve: need at least 2 knot values");
    const int seg = static_cast<int>(knot_values.numel()) - 1;
    const double dt = (hi - lo) / seg;
    auto n = make_node("monotone_curve", x.shape(),
                       {x.node(), knot_values.node()});
    const auto& kv = knot_values.data();
    auto locate = [lo, hi, dt, seg](double v, int& s, double& f) {
        double pos = (std::min(hi, std::max(lo, v)) - lo) / dt;
        s = std::min(seg - 1, std::max(0, static_cast<int>(pos)));
        f = pos - s;
    };
    for (std::size_t i = 0; i < x.numel(); ++i) {
        int s;
        double f;
        locate(x.data()[i], s, f);
        n->data[i] = kv[s] + f * (kv[s + 1] - kv[s]);
    }
    if (n->requires_grad) {
        n->backward_fn = [seg, dt, lo, hi, locate](Node& self) {
            Node* px = self.parents[0].get();
            Node* pk = self.parents[1].get();
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                double g = self.grad[i];
                if (g == 0) continue;
                int s;
                double f;
                locate(px->data[i], s, f);
                if (px->requires_grad) {
                    bool inside = px->data[i] > lo && px->data[i] < hi;
                    if (inside)
                        px->grad[i] +=
                            g * (pk->data[s + 1] - pk->data[s]) / dt;
                }
                if (pk->requires_grad) {
                    pk->grad[s] += g * (1 - f);
                    pk->grad[s + 1] += g * f;
                }
            }
        };
    }
    return Tensor(n);
}

// ---------------- RNG ----------------

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double uniform01(std::uint64_t& state) {
    return (splitmix64(state) >> 11) * (1.0 / 9007199254740992.0);
}

double normal01(std::uint64_t& state) {
    // Box-Muller; one sample per call keeps streams deterministic
    double u1 = uniform01(state);
    double u2 = uniform01(state);
    u1 = std::max(u1, 1e-300);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    std::uint64_t s = seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) +
                              (seed >> 2));
    return splitmix64(s);
}

std::uint64_t hash_string(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace nicrb::ad
