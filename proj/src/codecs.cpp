#include "nicrb/codecs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace nicrb::codec {

namespace {

constexpr int kHidden = 32;   // conv width
constexpr int kLatent = 12;   // y channels
constexpr int kHyperLatent = 8;

// encoder output squash keeps symbols strictly inside the CDF support
constexpr double kSquash = 15.0;

ad::Tensor squash(const ad::Tensor& raw) {
    using namespace ad;
    // kSquash * tanh(raw / kSquash)
    Tensor s = sigmoid(mul_scalar(raw, 2.0 / kSquash));
    return mul_scalar(add_scalar(mul_scalar(s, 2.0), -1.0), kSquash);
}

ad::Tensor make_conv_weight(int cout, int cin, int k, std::uint64_t& rng,
                            double gain = 1.0) {
    std::vector<double> w(static_cast<std::size_t>(cout) * cin * k * k);
    double bound = gain * std::sqrt(1.0 / (cin * k * k));
    for (auto& v : w) v = (2.0 * ad::uniform01(rng) - 1.0) * bound;
    return ad::Tensor::leaf({cout, cin, k, k}, std::move(w), true);
}

int pad_multiple(Arch arch) {
    // hyperprior halves the latent grid once more
    return arch == Arch::HyperpriorLite ? 2 * kDownsampleFactor
                                        : kDownsampleFactor;
}

}  // namespace

const char* arch_name(Arch a) {
    return a == Arch::FactorizedPrior ? "factorized-prior" : "hyperprior-lite";
}

Arch arch_from_name(const std::string& name) {
    if (name == "factorized-prior") return Arch::FactorizedPrior;
    if (name == "hyperprior-lite") return Arch::HyperpriorLite;
    throw CodecError("unknown codec architecture: " + name);
}

const ad::Tensor& CodecModel::param(const std::string& name) const {
    for (const auto& [n, t] : params)
        if (n == name) return t;
    throw CodecError("codec " + id + " has no parameter " + name);
}

CodecModel make_codec(Arch arch, const std::string& id, double lambda,
                      std::uint64_t seed, QuantMode qmode) {
    CodecModel m;
    m.id = id;
    m.arch = arch;
    m.qmode = qmode;
    m.lambda = lambda;
    m.seed = seed;
    std::uint64_t rng = ad::hash_combine(seed, ad::hash_string(id));

    auto add = [&](const std::string& name, ad::Tensor t) {
        m.params.emplace_back(name, std::move(t));
    };
    auto add_conv = [&](const std::string& name, int cout, int cin,
                        double gain = 1.0) {
        add(name + ".w", make_conv_weight(cout, cin, 3, rng, gain));
        add(name + ".b", ad::Tensor::zeros({cout}, true));
    };

    add_conv("enc0", kHidden, 3);
    add_conv("enc1", kHidden, kHidden);
    add_conv("enc2", kHidden, kHidden);
    add_conv("enc3", kLatent, kHidden);
    // transposed conv weights are [Cin, Cout, K, K]
    add("dec0.w", make_conv_weight(kLatent, kHidden, 3, rng));
    add("dec0.b", ad::Tensor::zeros({kHidden}, true));
    add("dec1.w", make_conv_weight(kHidden, kHidden, 3, rng));
    add("dec1.b", ad::Tensor::zeros({kHidden}, true));
    add("dec2.w", make_conv_weight(kHidden, kHidden, 3, rng));
    add("dec2.b", ad::Tensor::zeros({kHidden}, true));
    add("dec3.w", make_conv_weight(kHidden, 3, 3, rng));
    add("dec3.b", ad::Tensor::zeros({3}, true));
    // factorized CDF over y (or over z for the hyperprior)
    add("cdf_y", ad::Tensor::zeros({kLatent, kCdfSegments}, true));

    if (arch == Arch::HyperpriorLite) {
        add_conv("henc0", kHidden, kLatent);
        add_conv("henc1", kHyperLatent, kHidden);
        add("hdec0.w", make_conv_weight(kHyperLatent, kHidden, 3, rng));
        add("hdec0.b", ad::Tensor::zeros({kHidden}, true));
        add_conv("hdec1", kLatent, kHidden);
        add("cdf_z", ad::Tensor::zeros({kHyperLatent, kCdfSegments}, true));
    }
    return m;
}

namespace {

ad::Tensor encode(const CodecModel& m, const ad::Tensor& x) {
    using namespace ad;
    Tensor h = leaky_relu(conv2d(x, m.param("enc0.w"), m.param("enc0.b"), 2, 1));
    h = leaky_relu(conv2d(h, m.param("enc1.w"), m.param("enc1.b"), 2, 1));
    h = leaky_relu(conv2d(h, m.param("enc2.w"), m.param("enc2.b"), 2, 1));
    h = conv2d(h, m.param("enc3.w"), m.param("enc3.b"), 2, 1);
    return squash(h);
}

ad::Tensor decode(const CodecModel& m, const ad::Tensor& y) {
    using namespace ad;
    Tensor h = leaky_relu(
        conv2d_transpose(y, m.param("dec0.w"), m.param("dec0.b"), 2, 1, 1));
    h = leaky_relu(
        conv2d_transpose(h, m.param("dec1.w"), m.param("dec1.b"), 2, 1, 1));
    h = leaky_relu(
        conv2d_transpose(h, m.param("dec2.w"), m.param("dec2.b"), 2, 1, 1));
    return conv2d_transpose(h, m.param("dec3.w"), m.param("dec3.b"), 2, 1, 1);
}

ad::Tensor quantize(const ad::Tensor& y, bool relax, QuantMode qmode,
                    std::uint64_t seed) {
    if (relax || qmode == QuantMode::Noise)
        return ad::add_uniform_noise(y, seed);
    return ad::round_ste(y);
}

// -log2 p under a logistic conditional with per-element scale sigma
ad::Tensor logistic_rate(const ad::Tensor& v, const ad::Tensor& sigma) {
    using namespace ad;
    Tensor hi = sigmoid(div(add_scalar(v, 0.5), sigma));
    Tensor lo = sigmoid(div(add_scalar(v, -0.5), sigma));
    Tensor p = clamp(sub(hi, lo), 1e-9, 1.0);
    return mul_scalar(log(p), -1.0 / std::log(2.0));
}

}  // namespace

CodecGraph run(const CodecModel& m, const ad::Tensor& x,
               std::uint64_t noise_seed, bool relax) {
    using namespace ad;
    if (x.shape().size() != 3 || x.shape()[0] != 3)
        throw CodecError("codec input must be [3,H,W]");
    for (double v : x.data())
        if (!std::isfinite(v)) throw CodecError("non-finite codec input");
    const int h = x.shape()[1], w = x.shape()[2];
    const int mult = pad_multiple(m.arch);
    const int ph = (mult - h % mult) % mult;
    const int pw = (mult - w % mult) % mult;
    Tensor xp = (ph || pw) ? reflect_pad(x, 0, ph, 0, pw) : x;

    Tensor y = encode(m, xp);
    Tensor y_hat = quantize(y, relax, m.qmode, ad::hash_combine(noise_seed, 1));

    Tensor bits;
    if (m.arch == Arch::FactorizedPrior) {
        bits = reduce_sum(pwl_rate(y_hat, m.param("cdf_y"), kSymbolBound));
    } else {
        Tensor zh = leaky_relu(
            conv2d(y, m.param("henc0.w"), m.param("henc0.b"), 1, 1));
        Tensor z = squash(
            conv2d(zh, m.param("henc1.w"), m.param("henc1.b"), 2, 1));
        Tensor z_hat =
            quantize(z, relax, m.qmode, ad::hash_combine(noise_seed, 2));
        Tensor sh = leaky_relu(conv2d_transpose(z_hat, m.param("hdec0.w"),
                                                m.param("hdec0.b"), 2, 1, 1));
        Tensor sigma = add_scalar(
            softplus(conv2d(sh, m.param("hdec1.w"), m.param("hdec1.b"), 1, 1)),
            0.05);
        bits = add(reduce_sum(logistic_rate(y_hat, sigma)),
                   reduce_sum(pwl_rate(z_hat, m.param("cdf_z"), kSymbolBound)));
    }
    Tensor bpp_t = mul_scalar(bits, 1.0 / (static_cast<double>(h) * w));

    Tensor rec = decode(m, y_hat);
    if (ph || pw) rec = ad::crop(rec, 0, 0, h, w);
    CodecGraph g;
    g.recon_raw = rec;
    g.recon = ad::clamp(rec, 0.0, 1.0);
    g.bpp = bpp_t;
    return g;
}

Image reconstruct(const CodecModel& m, const Image& x,
                  std::uint64_t noise_seed) {
    auto g = run(m, x.to_tensor(), noise_seed);
    return Image::from_tensor(g.recon);
}

double bpp(const CodecModel& m, const Image& x, std::uint64_t noise_seed) {
    return run(m, x.to_tensor(), noise_seed).bpp.item();
}

// ---------------- training ----------------

namespace {

struct AdamState {
    std::vector<std::vector<double>> m, v;
    int t = 0;
};

Image random_crop(const Image& im, int size, std::uint64_t& rng) {
    int maxy = std::max(0, im.height - size);
    int maxx = std::max(0, im.width - size);
    int oy = maxy ? static_cast<int>(ad::splitmix64(rng) % (maxy + 1)) : 0;
    int ox = maxx ? static_cast<int>(ad::splitmix64(rng) % (maxx + 1)) : 0;
    int sy = std::min(size, im.height), sx = std::min(size, im.width);
    // crop sizes must stay a multiple of the pad unit; reflect_pad in run()
    // handles leftovers, so odd-size corpora still train
    Image out(im.channels, sy, sx);
    for (int c = 0; c < im.channels; ++c)
        for (int y = 0; y < sy; ++y)
            for (int x = 0; x < sx; ++x)
                out.at(c, y, x) = im.at(c, oy + y, ox + x);
    return out;
}

}  // namespace

TrainReport train(CodecModel& model, const std::vector<Image>& corpus,
                  double lambda, const TrainOptions& opts) {
    if (corpus.empty()) throw CodecError("train: empty corpus");
    if (opts.steps <= 0) throw CodecError("train: steps must be positive");
    model.lambda = lambda;

    TrainReport report;
    AdamState adam;
    adam.m.resize(model.params.size());
    adam.v.resize(model.params.size());
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        adam.m[i].assign(model.params[i].second.numel(), 0.0);
        adam.v[i].assign(model.params[i].second.numel(), 0.0);
    }
    std::uint64_t rng = ad::hash_combine(opts.seed, 0xAD4Au);

    // snapshot for divergence recovery
    std::vector<std::vector<double>> last_good;
    auto snapshot = [&] {
        last_good.clear();
        for (auto& [n, t] : model.params) last_good.push_back(t.data());
    };
    auto restore = [&] {
        for (std::size_t i = 0; i < model.params.size(); ++i)
            model.params[i].second.mutable_data() = last_good[i];
    };
    snapshot();

    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int step = 0; step < opts.steps; ++step) {
        for (auto& [n, t] : model.params) t.zero_grad();
        double step_loss = 0;
        bool finite = true;
        for (int b = 0; b < opts.batch; ++b) {
            const Image& src =
                corpus[ad::splitmix64(rng) % corpus.size()];
            Image patch = random_crop(src, opts.crop, rng);
            ad::Tensor x = patch.to_tensor();
            auto g = run(model, x, ad::splitmix64(rng), /*relax=*/true);
            ad::Tensor dist =
                ad::reduce_mean(ad::pow_scalar(ad::sub(x, g.recon_raw), 2.0));
            ad::Tensor loss = ad::add(ad::mul_scalar(g.bpp, lambda), dist);
            double lv = loss.item();
            if (!std::isfinite(lv)) {
                finite = false;
                break;
            }
            step_loss += lv / opts.batch;
            ad::backward(loss);
        }
        if (!finite) {
            restore();
            report.diverged = true;
            break;
        }
        report.losses.push_back(step_loss);
        if (step == 0) report.initial_loss = step_loss;
        report.steps_run = step + 1;

        adam.t += 1;
        double lr_t = opts.lr * std::sqrt(1.0 - std::pow(b2, adam.t)) /
                      (1.0 - std::pow(b1, adam.t));
        for (std::size_t i = 0; i < model.params.size(); ++i) {
            ad::Tensor& t = model.params[i].second;
            if (t.grad().empty()) continue;
            auto& data = t.mutable_data();
            for (std::size_t j = 0; j < data.size(); ++j) {
                double g = t.grad()[j] / opts.batch;
                adam.m[i][j] = b1 * adam.m[i][j] + (1 - b1) * g;
                adam.v[i][j] = b2 * adam.v[i][j] + (1 - b2) * g * g;
                data[j] -= lr_t * adam.m[i][j] /
                           (std::sqrt(adam.v[i][j]) + eps);
            }
        }
        if (step % 50 == 49) snapshot();
    }
    report.final_loss =
        report.losses.empty() ? report.initial_loss : report.losses.back();
    return report;
}

// ---------------- checkpoint ----------------

namespace {

constexpr char kMagic[6] = {'N', 'I', 'C', 'R', 'B', '1'};

template <class T>
void write_pod(std::ofstream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
void read_pod(std::ifstream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof v);
}
void write_str(std::ofstream& os, const std::string& s) {
    auto n = static_cast<std::uint32_t>(s.size());
    write_pod(os, n);
    os.write(s.data(), n);
}
std::string read_str(std::ifstream& is) {
    std::uint32_t n = 0;
    read_pod(is, n);
    if (n > (1u << 20)) throw CodecError("checkpoint: absurd string length");
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

}  // namespace

void save_checkpoint(const CodecModel& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CodecError("cannot write checkpoint " + path);
    os.write(kMagic, sizeof kMagic);
    write_pod(os, std::uint32_t{1});  // format version
    write_str(os, m.id);
    write_str(os, arch_name(m.arch));
    write_pod(os, static_cast<std::uint8_t>(m.qmode));
    write_pod(os, m.lambda);
    write_pod(os, m.seed);
    write_str(os, m.bitrate_label);
    write_pod(os, static_cast<std::uint32_t>(m.params.size()));
    for (const auto& [name, t] : m.params) {
        write_str(os, name);
        write_pod(os, static_cast<std::uint32_t>(t.shape().size()));
        for (int d : t.shape()) write_pod(os, static_cast<std::int32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data().data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!os) throw CodecError("failed writing checkpoint " + path);
}

CodecModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CodecError("cannot open checkpoint " + path);
    char magic[6];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw CodecError("bad checkpoint magic in " + path);
    std::uint32_t version = 0;
    read_pod(is, version);
    if (version != 1)
        throw CodecError("unsupported checkpoint version in " + path);
    CodecModel m;
    m.id = read_str(is);
    m.arch = arch_from_name(read_str(is));
    std::uint8_t q = 0;
    read_pod(is, q);
    m.qmode = static_cast<QuantMode>(q);
    read_pod(is, m.lambda);
    read_pod(is, m.seed);
    m.bitrate_label = read_str(is);
    std::uint32_t count = 0;
    read_pod(is, count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = read_str(is);
        std::uint32_t nd = 0;
        read_pod(is, nd);
        std::vector<int> shape(nd);
        std::size_t numel = 1;
        for (auto& d : shape) {
            std::int32_t v = 0;
            read_pod(is, v);
            d = v;
            numel *= static_cast<std::size_t>(v);
        }
        std::vector<double> data(numel);
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(numel * sizeof(double)));
        m.params.emplace_back(
            name, ad::Tensor::leaf(shape, std::move(data), true));
    }
    if (!is) throw CodecError("truncated checkpoint " + path);
    return m;
}

RDCurve rd_curve(const std::vector<const CodecModel*>& models,
                 const std::vector<Image>& corpus, metrics::MetricId metric) {
    if (models.size() < 2)
        throw CodecError("rd_curve: need at least 2 models per family");
    if (corpus.empty()) throw CodecError("rd_curve: empty corpus");
    RDCurve curve;
    for (const CodecModel* m : models) {
        double mean_bpp = 0, mean_q = 0;
        for (const Image& im : corpus) {
            auto g = run(*m, im.to_tensor());
            mean_bpp += g.bpp.item();
            mean_q += metrics::evaluate(metric, im,
                                        Image::from_tensor(g.recon));
        }
        curve.points.push_back({mean_bpp / corpus.size(),
                                mean_q / corpus.size()});
    }
    std::sort(curve.points.begin(), curve.points.end(),
              [](const auto& a, const auto& b) { return a.bpp < b.bpp; });
    double qmin = curve.points.front().quality, qmax = qmin;
    for (const auto& p : curve.points) {
        qmin = std::min(qmin, p.quality);
        qmax = std::max(qmax, p.quality);
    }
    curve.flat = (qmax - qmin) < 1e-9;
    return curve;
}

}  // namespace nicrb::codec
