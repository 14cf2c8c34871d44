#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nicrb/attacks.hpp"
#include "nicrb/codecs.hpp"
#include "nicrb/color.hpp"
#include "nicrb/defenses.hpp"
#include "nicrb/harness.hpp"
#include "nicrb/image.hpp"
#include "nicrb/metrics.hpp"

namespace py = pybind11;
using namespace nicrb;

namespace {

Image image_from_array(py::array_t<double, py::array::c_style |
                                               py::array::forcecast> arr) {
    if (arr.ndim() != 3)
        throw std::invalid_argument("expected a (C,H,W) array");
    Image im(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
             static_cast<int>(arr.shape(2)));
    std::copy(arr.data(), arr.data() + arr.size(), im.data.begin());
    return im;
}

py::array_t<double> image_to_array(const Image& im) {
    py::array_t<double> arr({im.channels, im.height, im.width});
    std::copy(im.data.begin(), im.data.end(), arr.mutable_data());
    return arr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "neural image compression robustness toolkit";

    py::class_<Image>(m, "Image")
        .def(py::init(&image_from_array), py::arg("array"))
        .def_property_readonly("channels", [](const Image& i) { return i.channels; })
        .def_property_readonly("height", [](const Image& i) { return i.height; })
        .def_property_readonly("width", [](const Image& i) { return i.width; })
        .def("to_numpy", &image_to_array);

    m.def("load_image", &load_image, py::arg("path"));
    m.def("save_png16", &save_png16, py::arg("image"), py::arg("path"));

    // metrics
    m.def("psnr", &metrics::psnr);
    m.def("mse", &metrics::mse);
    m.def("ssim", &metrics::ssim);
    m.def("ms_ssim", &metrics::ms_ssim);
    m.def("color_artifact", &metrics::color_artifact);
    m.def("texture_artifact", &metrics::texture_artifact,
          py::arg("x_ref"), py::arg("x_test"), py::arg("quality") = 50);
    m.def("ciede2000", &color::ciede2000);

    // codecs
    py::class_<codec::CodecModel>(m, "CodecModel")
        .def_readonly("id", &codec::CodecModel::id)
        .def_readonly("lambda_", &codec::CodecModel::lambda);
    m.def(
        "make_codec",
        [](const std::string& arch, const std::string& id, double lam,
           std::uint64_t seed) {
            return codec::make_codec(codec::arch_from_name(arch), id, lam,
                                     seed);
        },
        py::arg("arch"), py::arg("id"), py::arg("lambda_"), py::arg("seed"));
    m.def(
        "train_codec",
        [](codec::CodecModel& model, const std::vector<Image>& corpus,
           int steps, std::uint64_t seed) {
            codec::TrainOptions opt;
            opt.steps = steps;
            opt.seed = seed;
            auto rep = codec::train(model, corpus, model.lambda, opt);
            return py::make_tuple(rep.initial_loss, rep.final_loss,
                                  rep.diverged);
        },
        py::arg("model"), py::arg("corpus"), py::arg("steps") = 800,
        py::arg("seed") = 1);
    m.def("save_checkpoint", &codec::save_checkpoint);
    m.def("load_checkpoint", &codec::load_checkpoint);
    m.def("reconstruct", &codec::reconstruct, py::arg("model"), py::arg("x"),
          py::arg("noise_seed") = 0);
    m.def("bpp", &codec::bpp, py::arg("model"), py::arg("x"),
          py::arg("noise_seed") = 0);

    // attacks
    py::class_<attack::AdversarialExample>(m, "AdversarialExample")
        .def_readonly("loss_trace", &attack::AdversarialExample::loss_trace)
        .def_readonly("achieved_loss",
                      &attack::AdversarialExample::achieved_loss)
        .def_readonly("final_linf", &attack::AdversarialExample::final_linf)
        .def_readonly("final_l2", &attack::AdversarialExample::final_l2)
        .def_property_readonly("perturbed",
                               [](const attack::AdversarialExample& e) {
                                   return image_to_array(e.perturbed);
                               });
    m.def(
        "run_attack",
        [](const codec::CodecModel& model, const Image& x,
           const std::string& algorithm, const std::string& loss, bool y_only,
           double epsilon, double step_size, int iterations,
           std::uint64_t seed) {
            attack::AttackSpec spec;
            spec.algorithm = attack::algorithm_from_name(algorithm);
            spec.loss.id = attack::loss_from_name(loss);
            spec.loss.y_only = y_only;
            spec.epsilon = epsilon;
            spec.step_size = step_size;
            spec.iterations = iterations;
            spec.seed = seed;
            return attack::run_attack(spec, model, x);
        },
        py::arg("model"), py::arg("x"), py::arg("algorithm") = "ifgsm",
        py::arg("loss") = "ftda-default", py::arg("y_only") = false,
        py::arg("epsilon") = 8.0 / 255.0, py::arg("step_size") = 1.0 / 255.0,
        py::arg("iterations") = 20, py::arg("seed") = 0);

    // delta score through an optional defense
    m.def(
        "delta_score",
        [](const codec::CodecModel& model, const Image& x, const Image& adv,
           const std::string& metric, const std::string& defense,
           std::uint64_t seed) {
            defense::DefenseSpec dspec;
            dspec.kind = defense::defense_from_name(defense);
            defense::DefendedCodec dc(&model, dspec, seed);
            metrics::CodecFn fn = [&](const Image& im) {
                return dc.reconstruct(im);
            };
            return metrics::delta_score(metrics::metric_from_name(metric), fn,
                                        x, adv);
        },
        py::arg("model"), py::arg("x"), py::arg("adv"),
        py::arg("metric") = "psnr", py::arg("defense") = "identity",
        py::arg("seed") = 0);

    // harness
    m.def("synthetic_corpus",
          [](int count, int size, std::uint64_t seed) {
              auto c = harness::synthetic_corpus(count, size, seed);
              return py::make_tuple(c.ids, c.images);
          },
          py::arg("count") = 24, py::arg("size") = 64, py::arg("seed") = 0);
    m.def("run_grid_config", [](const std::string& config_path) {
        harness::RunConfig cfg = harness::load_config(config_path);
        harness::GridResult res = harness::run_grid(cfg);
        harness::emit_reports(res, cfg, cfg.output_dir);
        return static_cast<int>(res.records.size());
    });
}
