#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "nicrb/codecs.hpp"

using namespace nicrb;
using testutil::random_image;

namespace {

std::vector<Image> tiny_corpus(int n, int size, std::uint64_t seed) {
    std::vector<Image> out;
    for (int i = 0; i < n; ++i) {
        Image im(3, size, size);
        std::uint64_t s = ad::hash_combine(seed, static_cast<std::uint64_t>(i));
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double base = 0.5 + 0.3 * std::sin(0.3 * x + 0.2 * y + i);
                for (int c = 0; c < 3; ++c)
                    im.at(c, y, x) = std::min(
                        1.0, std::max(0.0, base + 0.05 * (ad::uniform01(s) - 0.5) +
                                               0.1 * c * 0.3));
            }
        out.push_back(std::move(im));
    }
    return out;
}

}  // namespace

TEST_CASE("untrained codec contract") {
    auto m = codec::make_codec(codec::Arch::FactorizedPrior, "fp", 0.01, 3);
    Image x = random_image(3, 32, 32, 1);
    Image r = reconstruct(m, x);
    CHECK(r.channels == 3);
    CHECK(r.height == 32);
    CHECK(r.width == 32);
    for (double v : r.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(codec::bpp(m, x) >= 0.0);
}

TEST_CASE("rounding path is deterministic, noise path is seeded") {
    auto m = codec::make_codec(codec::Arch::FactorizedPrior, "fp", 0.01, 3);
    Image x = random_image(3, 32, 32, 2);
    Image r1 = reconstruct(m, x, 11);
    Image r2 = reconstruct(m, x, 99);
    for (std::size_t i = 0; i < r1.numel(); ++i)
        CHECK(r1.data[i] == r2.data[i]);  // STE ignores the noise seed

    auto g1 = codec::run(m, x.to_tensor(), 11, true);
    auto g2 = codec::run(m, x.to_tensor(), 11, true);
    auto g3 = codec::run(m, x.to_tensor(), 12, true);
    CHECK(g1.bpp.item() == g2.bpp.item());
    bool differs = g1.bpp.item() != g3.bpp.item();
    for (std::size_t i = 0; i < r1.numel() && !differs; ++i)
        differs = g1.recon.data()[i] != g3.recon.data()[i];
    CHECK(differs);
}

TEST_CASE("same seed gives identical fresh models") {
    auto a = codec::make_codec(codec::Arch::HyperpriorLite, "h", 0.02, 7);
    auto b = codec::make_codec(codec::Arch::HyperpriorLite, "h", 0.02, 7);
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        CHECK(a.params[i].first == b.params[i].first);
        const auto& ta = a.params[i].second;
        const auto& tb = b.params[i].second;
        REQUIRE(ta.numel() == tb.numel());
        for (std::size_t j = 0; j < ta.numel(); ++j)
            CHECK(ta.data()[j] == tb.data()[j]);
    }
}

TEST_CASE("non-multiple-of-16 sizes are padded and cropped back") {
    auto m = codec::make_codec(codec::Arch::FactorizedPrior, "fp", 0.01, 4);
    Image x = random_image(3, 37, 45, 5);
    Image r = reconstruct(m, x);
    CHECK(r.height == 37);
    CHECK(r.width == 45);
    CHECK(codec::bpp(m, x) >= 0.0);
}

TEST_CASE("training reduces the objective") {
    auto corpus = tiny_corpus(3, 32, 77);
    auto m = codec::make_codec(codec::Arch::FactorizedPrior, "fp", 0.005, 5);
    codec::TrainOptions opt;
    opt.steps = 120;
    opt.crop = 32;
    opt.seed = 5;
    auto rep = codec::train(m, corpus, 0.005, opt);
    CHECK(rep.steps_run == 120);
    CHECK_FALSE(rep.diverged);
    CHECK(rep.final_loss < rep.initial_loss);

    // training is reproducible from the same seed
    auto m2 = codec::make_codec(codec::Arch::FactorizedPrior, "fp", 0.005, 5);
    auto rep2 = codec::train(m2, corpus, 0.005, opt);
    CHECK(rep2.final_loss == rep.final_loss);
}

TEST_CASE("checkpoint round-trip") {
    auto corpus = tiny_corpus(2, 32, 78);
    auto m = codec::make_codec(codec::Arch::HyperpriorLite, "hp", 0.02, 6);
    m.bitrate_label = "mid";
    codec::TrainOptions opt;
    opt.steps = 30;
    opt.seed = 6;
    codec::train(m, corpus, 0.02, opt);

    std::string path = "/tmp/nicrb_test_ckpt.nicrb";
    codec::save_checkpoint(m, path);
    auto loaded = codec::load_checkpoint(path);
    CHECK(loaded.id == m.id);
    CHECK(loaded.arch == m.arch);
    CHECK(loaded.lambda == m.lambda);
    CHECK(loaded.bitrate_label == "mid");
    REQUIRE(loaded.params.size() == m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i)
        for (std::size_t j = 0; j < m.params[i].second.numel(); ++j)
            CHECK(loaded.params[i].second.data()[j] ==
                  m.params[i].second.data()[j]);  // bit exact

    Image x = random_image(3, 32, 32, 7);
    Image r1 = reconstruct(m, x), r2 = reconstruct(loaded, x);
    for (std::size_t i = 0; i < r1.numel(); ++i) CHECK(r1.data[i] == r2.data[i]);

    // magic check: corrupting the header is rejected
    {
        std::fstream f(path,
                       std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put('X');
    }
    CHECK_THROWS_AS(codec::load_checkpoint(path), codec::CodecError);
    CHECK_THROWS_AS(codec::load_checkpoint("/nonexistent/ckpt"),
                    codec::CodecError);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint file starts with the NICRB1 magic") {
    auto m = codec::make_codec(codec::Arch::FactorizedPrior, "fp", 0.01, 1);
    std::string path = "/tmp/nicrb_test_magic.nicrb";
    codec::save_checkpoint(m, path);
    std::ifstream f(path, std::ios::binary);
    char magic[6];
    f.read(magic, 6);
    CHECK(std::string(magic, 6) == "NICRB1");
    std::remove(path.c_str());
}

TEST_CASE("lambda steers the rate-distortion trade-off") {
    auto corpus = tiny_corpus(3, 32, 79);
    codec::TrainOptions opt;
    opt.steps = 250;
    opt.seed = 9;
    auto lo = codec::make_codec(codec::Arch::FactorizedPrior, "lo", 0.001, 9);
    auto hi = codec::make_codec(codec::Arch::FactorizedPrior, "hi", 0.2, 9);
    codec::train(lo, corpus, 0.001, opt);
    codec::train(hi, corpus, 0.2, opt);
    double bpp_lo = 0, bpp_hi = 0;
    for (const auto& im : corpus) {
        bpp_lo += codec::bpp(lo, im) / corpus.size();
        bpp_hi += codec::bpp(hi, im) / corpus.size();
    }
    // high lambda penalizes rate more, so it should compress harder
    CHECK(bpp_hi < bpp_lo);
}

TEST_CASE("rd_curve shape and error handling") {
    auto corpus = tiny_corpus(2, 32, 80);
    codec::TrainOptions opt;
    opt.steps = 60;
    opt.seed = 10;
    std::vector<codec::CodecModel> models;
    for (double lam : {0.001, 0.01, 0.1}) {
        models.push_back(codec::make_codec(codec::Arch::FactorizedPrior,
                                           "m" + std::to_string(lam), lam, 10));
        codec::train(models.back(), corpus, lam, opt);
    }
    std::vector<const codec::CodecModel*> ptrs;
    for (auto& m : models) ptrs.push_back(&m);
    auto curve = codec::rd_curve(ptrs, corpus, metrics::MetricId::Psnr);
    REQUIRE(curve.points.size() == 3);
    for (std::size_t i = 1; i < curve.points.size(); ++i)
        CHECK(curve.points[i].bpp >= curve.points[i - 1].bpp);  // sorted

    CHECK_THROWS_AS(codec::rd_curve({}, corpus, metrics::MetricId::Psnr),
                    codec::CodecError);
    CHECK_THROWS_AS(codec::rd_curve(ptrs, {}, metrics::MetricId::Psnr),
                    codec::CodecError);
}

TEST_CASE("architectures are distinct") {
    auto fp = codec::make_codec(codec::Arch::FactorizedPrior, "fp", 0.01, 11);
    auto hp = codec::make_codec(codec::Arch::HyperpriorLite, "hp", 0.01, 11);
    CHECK(fp.params.size() != hp.params.size());
    CHECK(std::string(codec::arch_name(fp.arch)) == "factorized-prior");
    CHECK(std::string(codec::arch_name(hp.arch)) == "hyperprior-lite");
    CHECK(codec::arch_from_name("hyperprior-lite") ==
          codec::Arch::HyperpriorLite);
    CHECK_THROWS(codec::arch_from_name("vae9000"));
}
