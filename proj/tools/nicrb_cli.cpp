#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nicrb/attacks.hpp"
#include "nicrb/codecs.hpp"
#include "nicrb/defenses.hpp"
#include "nicrb/harness.hpp"
#include "nicrb/image.hpp"
#include "nicrb/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nicrb;

namespace {

harness::Corpus load_corpus(const std::string& dir, int count, int size,
                            std::uint64_t seed) {
    return dir.empty() ? harness::synthetic_corpus(count, size, seed)
                       : harness::ingest_corpus(dir);
}

int cmd_train(const std::string& id, const std::string& arch, double lambda,
              int steps, std::uint64_t seed, const std::string& corpus_dir,
              int syn_count, int syn_size, const std::string& out) {
    harness::Corpus corpus = load_corpus(corpus_dir, syn_count, syn_size, seed);
    codec::CodecModel m =
        codec::make_codec(codec::arch_from_name(arch), id, lambda, seed);
    codec::TrainOptions opt;
    opt.steps = steps;
    opt.seed = seed;
    codec::TrainReport rep = codec::train(m, corpus.images, lambda, opt);
    codec::save_checkpoint(m, out);
    json j = {{"id", id},
              {"initial_loss", rep.initial_loss},
              {"final_loss", rep.final_loss},
              {"steps", rep.steps_run},
              {"diverged", rep.diverged},
              {"checkpoint", out}};
    std::cout << j.dump(2) << "\n";
    return rep.diverged ? 1 : 0;
}

int cmd_attack(const std::string& ckpt, const std::string& image_path,
               const std::string& algorithm, const std::string& loss,
               bool y_only, double eps, double step, int iters,
               std::uint64_t seed, const std::string& out,
               const std::string& sidecar) {
    codec::CodecModel m = codec::load_checkpoint(ckpt);
    Image x = load_image(image_path);
    attack::AttackSpec spec;
    spec.algorithm = attack::algorithm_from_name(algorithm);
    spec.loss.id = attack::loss_from_name(loss);
    spec.loss.y_only = y_only;
    spec.epsilon = eps;
    spec.step_size = step;
    spec.iterations = iters;
    spec.seed = seed;
    attack::AdversarialExample ex = attack::run_attack(spec, m, x);
    save_png16(ex.perturbed, out);
    json j = {{"algorithm", algorithm},
              {"loss", loss},
              {"y_only", y_only},
              {"epsilon", eps},
              {"step_size", step},
              {"iterations", iters},
              {"seed", seed},
              {"achieved_loss", ex.achieved_loss},
              {"linf", ex.final_linf},
              {"l2", ex.final_l2},
              {"loss_trace", ex.loss_trace}};
    if (!sidecar.empty()) {
        std::ofstream f(sidecar);
        f << j.dump(2) << "\n";
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_defend_eval(const std::string& ckpt, const std::string& image_path,
                    const std::string& adv_path, const std::string& defense,
                    std::uint64_t seed) {
    codec::CodecModel m = codec::load_checkpoint(ckpt);
    Image x = load_image(image_path);
    Image adv = adv_path.empty() ? x : load_image(adv_path);
    defense::DefenseSpec dspec;
    auto colon = defense.find(':');
    dspec.kind = defense::defense_from_name(
        colon == std::string::npos ? defense : defense.substr(0, colon));
    if (colon != std::string::npos)
        dspec.external_command = defense.substr(colon + 1);
    defense::DefendedCodec dc(&m, dspec, seed);
    metrics::CodecFn fn = [&](const Image& im) { return dc.reconstruct(im); };
    json j = {{"defense", defense},
              {"psnr_clean", metrics::psnr(x, fn(x))},
              {"psnr_adv", metrics::psnr(x, fn(adv))}};
    for (auto id : {metrics::MetricId::Psnr, metrics::MetricId::Mse,
                    metrics::MetricId::MsSsim})
        j["delta"][metrics::metric_name(id)] =
            metrics::delta_score(id, fn, x, adv);
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_metrics(const std::string& metric, const std::string& ref,
                const std::string& test, const std::string& external_cmd) {
    Image a = load_image(ref), b = load_image(test);
    double v = metrics::evaluate(metrics::metric_from_name(metric), a, b,
                                 external_cmd);
    std::printf("%.9g\n", v);
    return 0;
}

int cmd_grid(const std::string& config_path, harness::RunConfig overrides,
             bool seed_given) {
    harness::RunConfig cfg;
    if (!config_path.empty()) cfg = harness::load_config(config_path);
    // flags fill gaps the config leaves open; the config file wins otherwise
    if (!cfg.seed_set && seed_given) {
        cfg.root_seed = overrides.root_seed;
        cfg.seed_set = true;
    }
    if (cfg.corpus_dir.empty()) cfg.corpus_dir = overrides.corpus_dir;
    if (cfg.output_dir == "out" && overrides.output_dir != "out")
        cfg.output_dir = overrides.output_dir;
    if (cfg.workers == 1) cfg.workers = overrides.workers;
    if (cfg.codecs.empty()) cfg.codecs = overrides.codecs;
    if (cfg.attacks.empty()) cfg.attacks = overrides.attacks;
    harness::GridResult res = harness::run_grid(cfg);
    harness::emit_reports(res, cfg, cfg.output_dir);
    int failed = 0;
    for (const auto& r : res.records)
        if (!r.ok()) ++failed;
    std::printf("grid: %zu records (%d failed, %d ledger hits) -> %s\n",
                res.records.size(), failed, res.ledger_hits,
                cfg.output_dir.c_str());
    return 0;
}

int cmd_report(const std::string& out_dir) {
    fs::path ledger = fs::path(out_dir) / "ledger.jsonl";
    if (!fs::exists(ledger))
        throw harness::HarnessError("no ledger at " + ledger.string());
    harness::RunConfig cfg;
    cfg.output_dir = out_dir;
    harness::GridResult res;
    std::ifstream in(ledger);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        harness::EvaluationRecord r;
        r.image_id = j.at("image_id");
        r.codec_id = j.at("codec_id");
        r.bitrate_label = j.value("bitrate_label", "");
        r.attack_id = j.at("attack_id");
        r.loss_id = j.at("loss_id");
        r.preset_index = j.at("preset_index");
        r.defense_id = j.at("defense_id");
        if (j.contains("delta"))
            r.delta = j["delta"].get<std::map<std::string, double>>();
        r.bpp_before = j.value("bpp_before", 0.0);
        r.bpp_after = j.value("bpp_after", 0.0);
        r.psnr_clean = j.value("psnr_clean", 0.0);
        r.psnr_adv = j.value("psnr_adv", 0.0);
        r.color_score = j.value("color_score", 0.0);
        r.texture_score = j.value("texture_score", 0.0);
        r.linf = j.value("linf", 0.0);
        r.l2 = j.value("l2", 0.0);
        r.error = j.value("error", "");
        res.records.push_back(std::move(r));
    }
    res.aggregates = harness::aggregate(res.records);
    harness::emit_reports(res, cfg, out_dir);
    std::printf("report: %zu records -> %s\n", res.records.size(),
                out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural image compression robustness harness"};
    app.require_subcommand(1);

    // train-codec
    auto* train = app.add_subcommand("train-codec", "train a toy codec");
    std::string t_id = "codec", t_arch = "factorized-prior", t_corpus, t_out;
    double t_lambda = 0.01;
    int t_steps = 800, t_syn_count = 24, t_syn_size = 64;
    std::uint64_t t_seed = 1;
    train->add_option("--id", t_id);
    train->add_option("--arch", t_arch);
    train->add_option("--lambda", t_lambda);
    train->add_option("--steps", t_steps);
    train->add_option("--seed", t_seed);
    train->add_option("--corpus", t_corpus);
    train->add_option("--synthetic-count", t_syn_count);
    train->add_option("--synthetic-size", t_syn_size);
    train->add_option("--out", t_out)->required();

    // attack
    auto* atk = app.add_subcommand("attack", "run one attack on one image");
    std::string a_ckpt, a_image, a_alg = "ifgsm", a_loss = "ftda-default",
                a_out = "adv.png", a_sidecar;
    bool a_yonly = false;
    double a_eps = 8.0 / 255.0, a_step = 1.0 / 255.0;
    int a_iters = 20;
    std::uint64_t a_seed = 0;
    atk->add_option("--checkpoint", a_ckpt)->required();
    atk->add_option("--image", a_image)->required();
    atk->add_option("--algorithm", a_alg);
    atk->add_option("--loss", a_loss);
    atk->add_flag("--y-only", a_yonly);
    atk->add_option("--eps", a_eps);
    atk->add_option("--step", a_step);
    atk->add_option("--iters", a_iters);
    atk->add_option("--seed", a_seed);
    atk->add_option("--out", a_out);
    atk->add_option("--json", a_sidecar);

    // defend-eval
    auto* de = app.add_subcommand("defend-eval",
                                  "evaluate a defended codec on an image");
    std::string d_ckpt, d_image, d_adv, d_defense = "identity";
    std::uint64_t d_seed = 0;
    de->add_option("--checkpoint", d_ckpt)->required();
    de->add_option("--image", d_image)->required();
    de->add_option("--adv", d_adv);
    de->add_option("--defense", d_defense);
    de->add_option("--seed", d_seed);

    // metrics
    auto* met = app.add_subcommand("metrics", "full-reference metric value");
    std::string m_metric = "psnr", m_ref, m_test, m_cmd;
    met->add_option("--metric", m_metric);
    met->add_option("--ref", m_ref)->required();
    met->add_option("--test", m_test)->required();
    met->add_option("--external-cmd", m_cmd);

    // grid
    auto* grid = app.add_subcommand("grid", "run the full evaluation grid");
    std::string g_config, g_corpus, g_output = "out";
    std::uint64_t g_seed = 0;
    int g_workers = 1;
    bool g_seed_given = false;
    grid->add_option("--config", g_config);
    grid->add_option("--corpus", g_corpus);
    grid->add_option("--output", g_output);
    grid->add_option("--seed", g_seed)->each([&](const std::string&) {
        g_seed_given = true;
    });
    grid->add_option("--workers", g_workers);

    // report
    auto* rep = app.add_subcommand("report", "re-emit reports from a ledger");
    std::string r_dir = "out";
    rep->add_option("--dir", r_dir);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed())
            return cmd_train(t_id, t_arch, t_lambda, t_steps, t_seed, t_corpus,
                             t_syn_count, t_syn_size, t_out);
        if (atk->parsed())
            return cmd_attack(a_ckpt, a_image, a_alg, a_loss, a_yonly, a_eps,
                              a_step, a_iters, a_seed, a_out, a_sidecar);
        if (de->parsed())
            return cmd_defend_eval(d_ckpt, d_image, d_adv, d_defense, d_seed);
        if (met->parsed()) return cmd_metrics(m_metric, m_ref, m_test, m_cmd);
        if (grid->parsed()) {
            harness::RunConfig overrides;
            overrides.corpus_dir = g_corpus;
            overrides.output_dir = g_output;
            overrides.root_seed = g_seed;
            overrides.workers = g_workers;
            return cmd_grid(g_config, overrides, g_seed_given);
        }
        if (rep->parsed()) return cmd_report(r_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
