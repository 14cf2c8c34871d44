#include "nicrb/defenses.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>

#include "nicrb/metrics.hpp"

namespace nicrb::defense {

namespace {

using ad::Tensor;

// rotate CCW by `quarter` 90-degree steps; exact, handles non-square images
Tensor rot90_g(const Tensor& x, int quarter) {
    quarter = ((quarter % 4) + 4) % 4;
    if (quarter == 0) return x;
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    int oh = (quarter % 2) ? w : h;
    int ow = (quarter % 2) ? h : w;
    std::vector<std::int64_t> index(x.numel());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                int sy = 0, sx = 0;
                switch (quarter) {
                    case 1:  // out(y,x) = in(x, w-1-y) with out shape (w,h)
                        sy = xx;
                        sx = w - 1 - y;
                        break;
                    case 2:
                        sy = h - 1 - y;
                        sx = w - 1 - xx;
                        break;
                    case 3:
                        sy = h - 1 - xx;
                        sx = y;
                        break;
                }
                index[(static_cast<std::size_t>(ch) * oh + y) * ow + xx] =
                    (static_cast<std::int64_t>(ch) * h + sy) * w + sx;
            }
    return ad::index_permute(x, {c, oh, ow}, std::move(index));
}

Tensor flip_g(const Tensor& x, bool flip_h, bool flip_v) {
    if (!flip_h && !flip_v) return x;
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    std::vector<std::int64_t> index(x.numel());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                int sy = flip_v ? h - 1 - y : y;
                int sx = flip_h ? w - 1 - xx : xx;
                index[(static_cast<std::size_t>(ch) * h + y) * w + xx] =
                    (static_cast<std::int64_t>(ch) * h + sy) * w + sx;
            }
    return ad::index_permute(x, x.shape(), std::move(index));
}

Tensor roll_g(const Tensor& x, int size, int dim) {
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    int n = dim == 2 ? h : w;
    int s = ((size % n) + n) % n;
    if (s == 0) return x;
    std::vector<std::int64_t> index(x.numel());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                int sy = y, sx = xx;
                if (dim == 2)
                    sy = (y - s + h) % h;
                else
                    sx = (xx - s + w) % w;
                index[(static_cast<std::size_t>(ch) * h + y) * w + xx] =
                    (static_cast<std::int64_t>(ch) * h + sy) * w + sx;
            }
    return ad::index_permute(x, x.shape(), std::move(index));
}

Tensor reorder_g(const Tensor& x, const std::array<int, 3>& perm) {
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    if (c != 3) throw DefenseError("color reorder expects 3 channels");
    std::vector<std::int64_t> index(x.numel());
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (int ch = 0; ch < 3; ++ch)
        for (std::int64_t i = 0; i < hw; ++i)
            index[ch * hw + i] = perm[ch] * hw + i;
    return ad::index_permute(x, x.shape(), std::move(index));
}

std::array<int, 3> invert_perm(const std::array<int, 3>& p) {
    std::array<int, 3> inv{};
    for (int i = 0; i < 3; ++i) inv[p[i]] = i;
    return inv;
}

struct RotatePad {
    int top, bottom, left, right, side;
};

RotatePad rotate_pad_amounts(int h, int w) {
    int side = static_cast<int>(std::ceil(std::hypot(h, w)));
    RotatePad p;
    p.side = side;
    p.top = (side - h) / 2;
    p.bottom = side - h - p.top;
    p.left = (side - w) / 2;
    p.right = side - w - p.left;
    return p;
}

Tensor apply_action_g(const Action& a, const Tensor& x, bool inverse) {
    switch (a.type) {
        case Action::Type::Flip:
            return flip_g(x, a.flip_h, a.flip_v);  // self-inverse
        case Action::Type::Roll:
            return roll_g(x, inverse ? -a.roll_size : a.roll_size, a.roll_dim);
        case Action::Type::ColorReorder:
            return reorder_g(x, inverse ? invert_perm(a.perm) : a.perm);
        case Action::Type::Rotate:
            // canvas was padded to the circumscribing square up front, so the
            // rotation itself never cuts content
            return ad::rotate_bilinear(x, inverse ? -a.angle : a.angle);
        case Action::Type::External: {
            if (inverse) return x;  // identity postprocess
            Image purified = run_external_purifier(
                a.command, Image::from_tensor(ad::clamp(x, 0.0, 1.0)));
            // straight-through gradient: forward purified, backward identity
            Tensor diff = Tensor::leaf(x.shape(), [&] {
                std::vector<double> d(x.numel());
                for (std::size_t i = 0; i < d.size(); ++i)
                    d[i] = purified.data[i] - x.data()[i];
                return d;
            }());
            return ad::add(x, diff);
        }
    }
    throw DefenseError("unknown action type");
}

}  // namespace

const char* defense_name(DefenseKind k) {
    switch (k) {
        case DefenseKind::Identity: return "identity";
        case DefenseKind::Flip: return "flip";
        case DefenseKind::RandomRoll: return "random-roll";
        case DefenseKind::RandomRotate: return "random-rotate";
        case DefenseKind::ColorReorder: return "color-reorder";
        case DefenseKind::RandomEnsemble: return "random-ensemble";
        case DefenseKind::GeometricSelfEnsemble:
            return "geometric-self-ensemble";
        case DefenseKind::ExternalPurifier: return "external-purifier";
    }
    return "?";
}

DefenseKind defense_from_name(const std::string& name) {
    for (DefenseKind k :
         {DefenseKind::Identity, DefenseKind::Flip, DefenseKind::RandomRoll,
          DefenseKind::RandomRotate, DefenseKind::ColorReorder,
          DefenseKind::RandomEnsemble, DefenseKind::GeometricSelfEnsemble,
          DefenseKind::ExternalPurifier})
        if (name == defense_name(k)) return k;
    throw DefenseError("unknown defense: " + name);
}

bool DefenseTransform::needs_pad() const {
    for (const auto& a : actions)
        if (a.type == Action::Type::Rotate) return true;
    return false;
}

ad::Tensor DefenseTransform::preprocess_g(const ad::Tensor& x) const {
    Tensor out = x;
    if (needs_pad()) {
        rec_h = x.shape()[1];
        rec_w = x.shape()[2];
        auto p = rotate_pad_amounts(rec_h, rec_w);
        out = ad::reflect_pad(out, p.top, p.bottom, p.left, p.right);
    }
    for (const auto& a : actions) out = apply_action_g(a, out, false);
    return out;
}

ad::Tensor DefenseTransform::postprocess_g(const ad::Tensor& y) const {
    Tensor out = y;
    for (auto it = actions.rbegin(); it != actions.rend(); ++it)
        out = apply_action_g(*it, out, true);
    if (needs_pad()) {
        if (rec_h < 0)
            throw DefenseError(
                "postprocess without matching preprocess (rotate geometry "
                "unrecorded)");
        auto p = rotate_pad_amounts(rec_h, rec_w);
        out = ad::crop(out, p.top, p.left, rec_h, rec_w);
    }
    return out;
}

Image DefenseTransform::preprocess(const Image& x) const {
    return Image::from_tensor(preprocess_g(x.to_tensor()));
}

Image DefenseTransform::postprocess(const Image& y) const {
    return Image::from_tensor(postprocess_g(y.to_tensor()));
}

DefenseTransform DefenseSpec::sample(std::uint64_t seed) const {
    std::uint64_t rng = ad::hash_combine(seed, ad::hash_string("defense"));
    DefenseTransform t;
    t.kind = kind;
    t.sample_id = seed;
    switch (kind) {
        case DefenseKind::Identity:
        case DefenseKind::GeometricSelfEnsemble:
            break;  // no sampled parameters (self-ensemble handled elsewhere)
        case DefenseKind::Flip: {
            Action a;
            a.type = Action::Type::Flip;
            a.flip_h = flip_h;
            a.flip_v = flip_v;
            t.actions.push_back(a);
            break;
        }
        case DefenseKind::RandomRoll: {
            Action a;
            a.type = Action::Type::Roll;
            a.roll_dim = (ad::splitmix64(rng) % 2) ? 3 : 2;
            a.roll_size = static_cast<int>(ad::splitmix64(rng) % 10000);
            t.actions.push_back(a);
            break;
        }
        case DefenseKind::RandomRotate: {
            Action a;
            a.type = Action::Type::Rotate;
            a.angle = static_cast<double>(ad::splitmix64(rng) % 360);
            t.actions.push_back(a);
            break;
        }
        case DefenseKind::ColorReorder: {
            Action a;
            a.type = Action::Type::ColorReorder;
            a.perm = {0, 1, 2};
            for (int i = 2; i > 0; --i)
                std::swap(a.perm[i],
                          a.perm[ad::splitmix64(rng) % (i + 1)]);
            t.actions.push_back(a);
            break;
        }
        case DefenseKind::RandomEnsemble:
            return random_ensemble(seed);
        case DefenseKind::ExternalPurifier: {
            Action a;
            a.type = Action::Type::External;
            a.command = external_command;
            t.actions.push_back(a);
            break;
        }
    }
    return t;
}

DefenseTransform random_ensemble(std::uint64_t seed) {
    std::uint64_t rng = ad::hash_combine(seed, ad::hash_string("ensemble"));
    DefenseTransform t;
    t.kind = DefenseKind::RandomEnsemble;
    t.sample_id = seed;
    for (int i = 0; i < 10; ++i) {
        // weights 4 : 4 : 1 over {roll, rotate, color reorder}
        std::uint64_t pick = ad::splitmix64(rng) % 9;
        Action a;
        if (pick < 4) {
            a.type = Action::Type::Roll;
            a.roll_dim = (ad::splitmix64(rng) % 2) ? 3 : 2;
            a.roll_size = static_cast<int>(ad::splitmix64(rng) % 10000);
        } else if (pick < 8) {
            a.type = Action::Type::Rotate;
            a.angle = static_cast<double>(ad::splitmix64(rng) % 360);
        } else {
            a.type = Action::Type::ColorReorder;
            a.perm = {0, 1, 2};
            for (int j = 2; j > 0; --j)
                std::swap(a.perm[j], a.perm[ad::splitmix64(rng) % (j + 1)]);
        }
        t.actions.push_back(a);
    }
    return t;
}

std::array<int, 3> ensemble_action_histogram(std::uint64_t seed,
                                             int ensembles) {
    std::array<int, 3> hist{0, 0, 0};
    for (int i = 0; i < ensembles; ++i) {
        auto t = random_ensemble(ad::hash_combine(seed, i));
        for (const auto& a : t.actions) {
            if (a.type == Action::Type::Roll) ++hist[0];
            if (a.type == Action::Type::Rotate) ++hist[1];
            if (a.type == Action::Type::ColorReorder) ++hist[2];
        }
    }
    return hist;
}

SelfEnsembleResult geometric_self_ensemble(
    const std::function<Image(const Image&)>& codec, const Image& x) {
    SelfEnsembleResult best;
    best.mse = std::numeric_limits<double>::infinity();
    Tensor xt = x.to_tensor();
    for (int k = 0; k < 8; ++k) {
        int quarter = k % 4;
        bool flip = k >= 4;
        Tensor pre = rot90_g(flip ? flip_g(xt, true, false) : xt, quarter);
        Image compressed = codec(Image::from_tensor(pre));
        Tensor post = rot90_g(compressed.to_tensor(), -quarter);
        if (flip) post = flip_g(post, true, false);
        Image candidate = Image::from_tensor(post);
        double m = metrics::mse(x, candidate);
        if (m < best.mse) {  // strict: ties keep the lowest index
            best.mse = m;
            best.chosen = k;
            best.output = std::move(candidate);
        }
    }
    return best;
}

Image DefendedCodec::reconstruct(const Image& x) {
    if (spec_.kind == DefenseKind::GeometricSelfEnsemble) {
        auto res = geometric_self_ensemble(
            [&](const Image& im) { return codec::reconstruct(*model_, im); },
            x);
        DefenseTransform t;
        t.kind = spec_.kind;
        t.sample_id = static_cast<std::uint64_t>(res.chosen);
        realized_.push_back(t);
        return res.output;
    }
    auto g = run_g(x.to_tensor(), 0);
    return Image::from_tensor(g.recon);
}

codec::CodecGraph DefendedCodec::run_g(const ad::Tensor& x,
                                       std::uint64_t noise_seed) {
    std::uint64_t sample_seed = ad::hash_combine(root_seed_, invocation_++);
    if (spec_.kind == DefenseKind::GeometricSelfEnsemble) {
        // pick the dihedral candidate on current values, then differentiate
        // through the chosen branch
        auto res = geometric_self_ensemble(
            [&](const Image& im) { return codec::reconstruct(*model_, im); },
            Image::from_tensor(x));
        int quarter = res.chosen % 4;
        bool flip = res.chosen >= 4;
        Tensor pre = rot90_g(flip ? flip_g(x, true, false) : x, quarter);
        auto g = codec::run(*model_, pre, noise_seed);
        Tensor post = rot90_g(g.recon, -quarter);
        if (flip) post = flip_g(post, true, false);
        Tensor post_raw = rot90_g(g.recon_raw, -quarter);
        if (flip) post_raw = flip_g(post_raw, true, false);
        DefenseTransform t;
        t.kind = spec_.kind;
        t.sample_id = static_cast<std::uint64_t>(res.chosen);
        realized_.push_back(t);
        return {post, post_raw, g.bpp};
    }
    DefenseTransform t = spec_.sample(sample_seed);
    Tensor pre = t.preprocess_g(x);
    auto g = codec::run(*model_, pre, noise_seed);
    Tensor post = t.postprocess_g(g.recon);
    Tensor post_raw = t.postprocess_g(g.recon_raw);
    realized_.push_back(t);
    return {post, post_raw, g.bpp};
}

Image run_external_purifier(const std::string& cmd, const Image& x) {
    namespace fs = std::filesystem;
    if (cmd.empty()) throw DefenseError("external purifier: empty command");
    static std::atomic<unsigned> counter{0};
    unsigned id = counter++;
    fs::path in = fs::temp_directory_path() /
                  ("nicrb_purify_in_" + std::to_string(id) + ".png");
    fs::path out = fs::temp_directory_path() /
                   ("nicrb_purify_out_" + std::to_string(id) + ".png");
    save_png16(x, in.string());
    std::string full = cmd + " " + in.string() + " " + out.string();
    int rc = std::system(full.c_str());
    Image result;
    std::string error;
    if (rc != 0) {
        error = "external purifier failed (exit " + std::to_string(rc) +
                "): " + full;
    } else {
        try {
            result = load_image(out.string());
        } catch (const std::exception& e) {
            error = std::string("external purifier produced no output: ") +
                    e.what() + " (" + full + ")";
        }
    }
    fs::remove(in);
    fs::remove(out);
    if (!error.empty()) throw DefenseError(error);
    if (!result.same_shape(x))
        throw DefenseError("external purifier changed image shape: " + full);
    return result;
}

}  // namespace nicrb::defense
