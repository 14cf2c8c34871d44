#include "nicrb/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "nicrb/color.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace nicrb::harness {

std::vector<Preset> default_presets() {
    return {{4.0 / 255.0, 1.0 / 255.0, 10},
            {8.0 / 255.0, 1.0 / 255.0, 20},
            {8.0 / 255.0, 2.0 / 255.0, 40},
            {16.0 / 255.0, 2.0 / 255.0, 40}};
}

// ---- config ----

namespace {

CodecSpec codec_spec_from_json(const json& j) {
    CodecSpec s;
    s.id = j.at("id").get<std::string>();
    if (j.contains("checkpoint")) s.checkpoint = j["checkpoint"];
    if (j.contains("arch"))
        s.arch = codec::arch_from_name(j["arch"].get<std::string>());
    if (j.contains("lambda")) s.lambda = j["lambda"];
    s.bitrate_label = j.value("bitrate_label", s.id);
    if (j.contains("train_steps")) s.train_steps = j["train_steps"];
    return s;
}

AttackGridSpec attack_spec_from_json(const json& j) {
    AttackGridSpec s;
    s.algorithm =
        attack::algorithm_from_name(j.at("algorithm").get<std::string>());
    if (j.contains("loss"))
        s.loss.id = attack::loss_from_name(j["loss"].get<std::string>());
    s.loss.y_only = j.value("y_only", false);
    s.loss.bpp_printed_form = j.value("bpp_printed_form", false);
    return s;
}

}  // namespace

RunConfig config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw HarnessError(std::string("config parse error: ") + e.what());
    }
    RunConfig cfg;
    cfg.corpus_dir = j.value("corpus", "");
    cfg.synthetic_count = j.value("synthetic_count", cfg.synthetic_count);
    cfg.synthetic_size = j.value("synthetic_size", cfg.synthetic_size);
    cfg.resize = j.value("resize", 0);
    if (j.contains("codecs"))
        for (const auto& c : j["codecs"])
            cfg.codecs.push_back(codec_spec_from_json(c));
    if (j.contains("attacks")) {
        cfg.attacks.clear();
        for (const auto& a : j["attacks"])
            cfg.attacks.push_back(attack_spec_from_json(a));
    }
    if (j.contains("defenses"))
        cfg.defenses = j["defenses"].get<std::vector<std::string>>();
    if (j.contains("metrics")) {
        cfg.metric_ids.clear();
        for (const auto& m : j["metrics"])
            cfg.metric_ids.push_back(
                metrics::metric_from_name(m.get<std::string>()));
    }
    if (j.contains("presets")) {
        cfg.presets.clear();
        for (const auto& p : j["presets"])
            cfg.presets.push_back({p.at("epsilon").get<double>(),
                                   p.at("step").get<double>(),
                                   p.at("iterations").get<int>()});
    }
    if (j.contains("seed")) {
        cfg.root_seed = j["seed"].get<std::uint64_t>();
        cfg.seed_set = true;
    }
    cfg.output_dir = j.value("output", cfg.output_dir);
    cfg.workers = j.value("workers", 1);
    cfg.defense_aware_attacks = j.value("defense_aware_attacks", false);
    cfg.external_metric_cmd = j.value("external_metric_cmd", "");
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw HarnessError("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

std::string config_to_json(const RunConfig& cfg) {
    json j;
    j["corpus"] = cfg.corpus_dir;
    j["synthetic_count"] = cfg.synthetic_count;
    j["synthetic_size"] = cfg.synthetic_size;
    j["resize"] = cfg.resize;
    j["codecs"] = json::array();
    for (const auto& c : cfg.codecs)
        j["codecs"].push_back({{"id", c.id},
                               {"checkpoint", c.checkpoint},
                               {"arch", codec::arch_name(c.arch)},
                               {"lambda", c.lambda},
                               {"bitrate_label", c.bitrate_label},
                               {"train_steps", c.train_steps}});
    j["attacks"] = json::array();
    for (const auto& a : cfg.attacks)
        j["attacks"].push_back(
            {{"algorithm", attack::algorithm_name(a.algorithm)},
             {"loss", attack::loss_name(a.loss.id)},
             {"y_only", a.loss.y_only},
             {"bpp_printed_form", a.loss.bpp_printed_form}});
    j["defenses"] = cfg.defenses;
    j["metrics"] = json::array();
    for (auto m : cfg.metric_ids) j["metrics"].push_back(metrics::metric_name(m));
    j["presets"] = json::array();
    for (const auto& p : cfg.presets)
        j["presets"].push_back({{"epsilon", p.epsilon},
                                {"step", p.step_size},
                                {"iterations", p.iterations}});
    if (cfg.seed_set) j["seed"] = cfg.root_seed;
    j["output"] = cfg.output_dir;
    j["workers"] = cfg.workers;
    j["defense_aware_attacks"] = cfg.defense_aware_attacks;
    if (!cfg.external_metric_cmd.empty())
        j["external_metric_cmd"] = cfg.external_metric_cmd;
    return j.dump(2);
}

// ---- corpus ----

Corpus ingest_corpus(const std::string& dir, int resize) {
    if (!fs::is_directory(dir))
        throw HarnessError("corpus path is not a directory: " + dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    Corpus c;
    for (const auto& name : names) {
        Image im;
        try {
            im = load_image((fs::path(dir) / name).string());
        } catch (const std::exception& e) {
            std::fprintf(stderr, "warning: skipping %s: %s\n", name.c_str(),
                         e.what());
            ++c.skipped;
            continue;
        }
        if (resize > 0) {
            if (im.height < resize || im.width < resize) {
                std::fprintf(stderr,
                             "warning: skipping %s: smaller than %dx%d\n",
                             name.c_str(), resize, resize);
                ++c.skipped;
                continue;
            }
            Image out(im.channels, resize, resize);
            int oy = (im.height - resize) / 2, ox = (im.width - resize) / 2;
            for (int ch = 0; ch < im.channels; ++ch)
                for (int y = 0; y < resize; ++y)
                    for (int x = 0; x < resize; ++x)
                        out.at(ch, y, x) = im.at(ch, y + oy, x + ox);
            im = std::move(out);
        }
        c.ids.push_back(fs::path(name).stem().string());
        c.images.push_back(std::move(im));
    }
    if (c.images.empty()) throw HarnessError("empty corpus: " + dir);
    return c;
}

Corpus synthetic_corpus(int count, int size, std::uint64_t seed) {
    if (count <= 0 || size <= 0)
        throw HarnessError("synthetic corpus needs positive count and size");
    Corpus c;
    for (int i = 0; i < count; ++i) {
        std::uint64_t rng = ad::hash_combine(seed, 7777 + i);
        double fx = 1.0 + ad::uniform01(rng) * 7.0;
        double fy = 1.0 + ad::uniform01(rng) * 7.0;
        double phase = ad::uniform01(rng) * 6.28318530717958647692;
        double gx = ad::uniform01(rng), gy = ad::uniform01(rng);
        double cx = ad::uniform01(rng) * size, cy = ad::uniform01(rng) * size;
        double rad = size * (0.1 + 0.2 * ad::uniform01(rng));
        double base[3] = {0.2 + 0.6 * ad::uniform01(rng),
                          0.2 + 0.6 * ad::uniform01(rng),
                          0.2 + 0.6 * ad::uniform01(rng)};
        Image im(3, size, size);
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    double u = static_cast<double>(x) / size;
                    double v = static_cast<double>(y) / size;
                    double tex = 0.15 * std::sin(6.28318 * (fx * u + fy * v) +
                                                 phase + 0.7 * ch);
                    double grad = 0.25 * (gx * u + gy * v);
                    double d = std::hypot(x - cx, y - cy);
                    double blob = d < rad ? 0.2 * (1.0 - d / rad) : 0.0;
                    im.at(ch, y, x) = std::clamp(
                        base[ch] + tex + grad + blob, 0.0, 1.0);
                }
        char name[32];
        std::snprintf(name, sizeof name, "synthetic_%03d", i);
        c.ids.push_back(name);
        c.images.push_back(std::move(im));
    }
    return c;
}

// ---- grid ----

std::uint64_t cell_seed(std::uint64_t root, const std::string& image_id,
                        const std::string& codec_id,
                        const std::string& attack_id,
                        const std::string& loss_id, int preset_index,
                        const std::string& defense_id) {
    std::uint64_t s = ad::hash_combine(root, ad::hash_string(image_id));
    s = ad::hash_combine(s, ad::hash_string(codec_id));
    s = ad::hash_combine(s, ad::hash_string(attack_id));
    s = ad::hash_combine(s, ad::hash_string(loss_id));
    s = ad::hash_combine(s, static_cast<std::uint64_t>(preset_index));
    return ad::hash_combine(s, ad::hash_string(defense_id));
}

std::string EvaluationRecord::cell_key() const {
    return image_id + "|" + codec_id + "|" + attack_id + "|" + loss_id + "|" +
           std::to_string(preset_index) + "|" + defense_id;
}

namespace {

json record_to_json(const EvaluationRecord& r) {
    json j;
    j["image_id"] = r.image_id;
    j["codec_id"] = r.codec_id;
    j["bitrate_label"] = r.bitrate_label;
    j["attack_id"] = r.attack_id;
    j["loss_id"] = r.loss_id;
    j["preset_index"] = r.preset_index;
    j["defense_id"] = r.defense_id;
    j["cell_seed"] = r.cell_seed;
    j["delta"] = r.delta;
    j["bpp_before"] = r.bpp_before;
    j["bpp_after"] = r.bpp_after;
    j["psnr_clean"] = r.psnr_clean;
    j["psnr_adv"] = r.psnr_adv;
    j["color_score"] = r.color_score;
    j["texture_score"] = r.texture_score;
    j["linf"] = r.linf;
    j["l2"] = r.l2;
    j["wall_time_s"] = r.wall_time_s;
    j["error"] = r.error;
    return j;
}

EvaluationRecord record_from_json(const json& j) {
    EvaluationRecord r;
    r.image_id = j.at("image_id");
    r.codec_id = j.at("codec_id");
    r.bitrate_label = j.value("bitrate_label", "");
    r.attack_id = j.at("attack_id");
    r.loss_id = j.at("loss_id");
    r.preset_index = j.at("preset_index");
    r.defense_id = j.at("defense_id");
    r.cell_seed = j.value("cell_seed", std::uint64_t{0});
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
    r.wall_time_s = j.value("wall_time_s", 0.0);
    r.error = j.value("error", "");
    return r;
}

// "external-purifier:<command>" carries the command after the colon
defense::DefenseSpec defense_spec_from_id(const std::string& id) {
    defense::DefenseSpec spec;
    auto colon = id.find(':');
    std::string name = colon == std::string::npos ? id : id.substr(0, colon);
    spec.kind = defense::defense_from_name(name);
    if (spec.kind == defense::DefenseKind::ExternalPurifier) {
        if (colon == std::string::npos)
            throw HarnessError(
                "external-purifier defense needs a command: \"" + id + "\"");
        spec.external_command = id.substr(colon + 1);
    }
    return spec;
}

struct Cell {
    int image = 0, codec = 0, attack = 0, preset = 0, defense = 0;
};

EvaluationRecord evaluate_cell(const RunConfig& cfg, const Corpus& corpus,
                               const std::vector<codec::CodecModel>& models,
                               const Cell& cell) {
    const auto t0 = std::chrono::steady_clock::now();
    const Image& x = corpus.images[cell.image];
    const codec::CodecModel& model = models[cell.codec];
    const AttackGridSpec& ag = cfg.attacks[cell.attack];
    const Preset& preset = cfg.presets[cell.preset];
    const std::string& defense_id = cfg.defenses[cell.defense];

    EvaluationRecord r;
    r.image_id = corpus.ids[cell.image];
    r.codec_id = model.id;
    r.bitrate_label = model.bitrate_label;
    r.attack_id = attack::algorithm_name(ag.algorithm);
    r.loss_id = attack::loss_name(ag.loss.id);
    r.preset_index = cell.preset;
    r.defense_id = defense_id;
    r.cell_seed = cell_seed(cfg.root_seed, r.image_id, r.codec_id, r.attack_id,
                            r.loss_id, cell.preset, defense_id);
    try {
        defense::DefenseSpec dspec = defense_spec_from_id(defense_id);

        attack::AttackSpec aspec;
        aspec.algorithm = ag.algorithm;
        aspec.loss = ag.loss;
        aspec.epsilon = preset.epsilon;
        aspec.step_size = preset.step_size;
        aspec.iterations = preset.iterations;
        aspec.seed = r.cell_seed;

        attack::AdversarialExample ex;
        if (cfg.defense_aware_attacks &&
            dspec.kind != defense::DefenseKind::Identity) {
            defense::DefendedCodec attacked(&model, dspec,
                                            ad::hash_combine(r.cell_seed, 1));
            ex = attack::run_attack(
                aspec,
                [&](const ad::Tensor& t, std::uint64_t s) {
                    return attacked.run_g(t, s);
                },
                x);
        } else {
            ex = attack::run_attack(aspec, model, x);
        }
        r.linf = ex.final_linf;
        r.l2 = ex.final_l2;

        // evaluation always goes through the defended codec (Eq.-4 wrapper)
        defense::DefendedCodec defended(&model, dspec,
                                        ad::hash_combine(r.cell_seed, 2));
        metrics::CodecFn codec_fn = [&](const Image& im) {
            return defended.reconstruct(im);
        };
        for (auto m : cfg.metric_ids)
            r.delta[metrics::metric_name(m)] = metrics::delta_score(
                m, codec_fn, x, ex.perturbed, cfg.external_metric_cmd);

        // latent rate of the inner codec; the defense wraps outside of it
        r.bpp_before = codec::bpp(model, x, ad::hash_combine(r.cell_seed, 3));
        r.bpp_after =
            codec::bpp(model, ex.perturbed, ad::hash_combine(r.cell_seed, 3));

        Image recon_clean = codec_fn(x);
        Image recon_adv = codec_fn(ex.perturbed);
        r.psnr_clean = metrics::psnr(x, recon_clean);
        r.psnr_adv = metrics::psnr(x, recon_adv);
        r.color_score = metrics::color_artifact(x, recon_adv);
        r.texture_score = metrics::texture_artifact(x, recon_adv);
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    r.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return r;
}

}  // namespace

std::vector<EvaluationRecord> aggregate(
    const std::vector<EvaluationRecord>& records) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const EvaluationRecord*>> groups;
    for (const auto& r : records) {
        if (!r.ok()) continue;
        std::string key =
            r.codec_id + "|" + r.attack_id + "|" + r.loss_id + "|" +
            r.defense_id;
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(&r);
    }
    std::vector<EvaluationRecord> out;
    for (const auto& key : order) {
        const auto& g = groups[key];
        EvaluationRecord a;
        a.image_id = "(mean)";
        a.codec_id = g[0]->codec_id;
        a.bitrate_label = g[0]->bitrate_label;
        a.attack_id = g[0]->attack_id;
        a.loss_id = g[0]->loss_id;
        a.preset_index = -1;
        a.defense_id = g[0]->defense_id;
        double n = static_cast<double>(g.size());
        for (const auto* r : g) {
            for (const auto& [k, v] : r->delta) a.delta[k] += v / n;
            a.bpp_before += r->bpp_before / n;
            a.bpp_after += r->bpp_after / n;
            a.psnr_clean += r->psnr_clean / n;
            a.psnr_adv += r->psnr_adv / n;
            a.color_score += r->color_score / n;
            a.texture_score += r->texture_score / n;
            a.linf += r->linf / n;
            a.l2 += r->l2 / n;
            a.wall_time_s += r->wall_time_s;
        }
        out.push_back(std::move(a));
    }
    return out;
}

GridResult run_grid(const RunConfig& cfg) {
    if (!cfg.seed_set)
        throw HarnessError("root seed is mandatory; set \"seed\" in config");
    if (cfg.codecs.empty()) throw HarnessError("no codecs configured");
    if (cfg.attacks.empty()) throw HarnessError("no attacks configured");
    if (cfg.presets.empty()) throw HarnessError("no presets configured");
    if (cfg.defenses.empty()) throw HarnessError("no defenses configured");

    Corpus corpus = cfg.corpus_dir.empty()
                        ? synthetic_corpus(cfg.synthetic_count,
                                           cfg.synthetic_size, cfg.root_seed)
                        : ingest_corpus(cfg.corpus_dir, cfg.resize);

    fs::create_directories(cfg.output_dir);
    fs::create_directories(fs::path(cfg.output_dir) / "checkpoints");

    // load or train each codec up front; workers share them read-only
    std::vector<codec::CodecModel> models;
    for (const auto& spec : cfg.codecs) {
        std::string ckpt =
            spec.checkpoint.empty()
                ? (fs::path(cfg.output_dir) / "checkpoints" /
                   (spec.id + ".nicrb"))
                      .string()
                : spec.checkpoint;
        if (fs::exists(ckpt)) {
            models.push_back(codec::load_checkpoint(ckpt));
            continue;
        }
        codec::CodecModel m = codec::make_codec(
            spec.arch, spec.id, spec.lambda,
            ad::hash_combine(cfg.root_seed, ad::hash_string(spec.id)));
        m.bitrate_label = spec.bitrate_label;
        codec::TrainOptions topt;
        topt.steps = spec.train_steps;
        topt.seed = ad::hash_combine(cfg.root_seed, ad::hash_string(spec.id));
        codec::train(m, corpus.images, spec.lambda, topt);
        codec::save_checkpoint(m, ckpt);
        models.push_back(std::move(m));
    }

    // on-disk ledger; completed cells are reused as-is
    std::map<std::string, EvaluationRecord> done;
    fs::path ledger_path = fs::path(cfg.output_dir) / "ledger.jsonl";
    if (fs::exists(ledger_path)) {
        std::ifstream in(ledger_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            EvaluationRecord r = record_from_json(json::parse(line));
            done[r.cell_key()] = std::move(r);
        }
    }

    std::vector<Cell> cells;
    for (int i = 0; i < static_cast<int>(corpus.images.size()); ++i)
        for (int c = 0; c < static_cast<int>(models.size()); ++c)
            for (int a = 0; a < static_cast<int>(cfg.attacks.size()); ++a)
                for (int p = 0; p < static_cast<int>(cfg.presets.size()); ++p)
                    for (int d = 0; d < static_cast<int>(cfg.defenses.size());
                         ++d)
                        cells.push_back({i, c, a, p, d});

    GridResult result;
    result.records.resize(cells.size());
    std::ofstream ledger(ledger_path, std::ios::app);
    std::mutex ledger_mu;
    std::atomic<std::size_t> next{0};
    std::atomic<int> hits{0};

    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& cell = cells[i];
            // build the key without running the cell
            EvaluationRecord probe;
            probe.image_id = corpus.ids[cell.image];
            probe.codec_id = models[cell.codec].id;
            probe.attack_id =
                attack::algorithm_name(cfg.attacks[cell.attack].algorithm);
            probe.loss_id = attack::loss_name(cfg.attacks[cell.attack].loss.id);
            probe.preset_index = cell.preset;
            probe.defense_id = cfg.defenses[cell.defense];
            auto it = done.find(probe.cell_key());
            if (it != done.end()) {
                result.records[i] = it->second;
                ++hits;
                continue;
            }
            EvaluationRecord r = evaluate_cell(cfg, corpus, models, cell);
            {
                std::lock_guard<std::mutex> lk(ledger_mu);
                ledger << record_to_json(r).dump() << "\n";
                ledger.flush();
            }
            result.records[i] = std::move(r);
        }
    };

    int nworkers = std::max(1, cfg.workers);
    std::vector<std::thread> pool;
    for (int i = 1; i < nworkers; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    result.ledger_hits = hits.load();
    result.aggregates = aggregate(result.records);
    return result;
}

// ---- reports ----

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

namespace {

std::vector<std::string> metric_columns(
    const std::vector<EvaluationRecord>& records) {
    std::set<std::string> s;
    for (const auto& r : records)
        for (const auto& [k, v] : r.delta) s.insert(k);
    return {s.begin(), s.end()};
}

void write_records_csv(const std::string& path,
                       const std::vector<EvaluationRecord>& records,
                       const std::vector<std::string>& metric_cols) {
    std::ofstream out(path);
    out << "image_id,codec_id,bitrate_label,attack,loss,preset,defense";
    for (const auto& m : metric_cols) out << ",delta_" << m;
    out << ",bpp_before,bpp_after,psnr_clean,psnr_adv,color_score,"
           "texture_score,linf,l2,error\r\n";
    for (const auto& r : records) {
        out << csv_escape(r.image_id) << ',' << csv_escape(r.codec_id) << ','
            << csv_escape(r.bitrate_label) << ',' << csv_escape(r.attack_id)
            << ',' << csv_escape(r.loss_id) << ',' << r.preset_index << ','
            << csv_escape(r.defense_id);
        for (const auto& m : metric_cols) {
            auto it = r.delta.find(m);
            out << ',' << (it == r.delta.end() ? ""
                                               : format_number(it->second));
        }
        out << ',' << format_number(r.bpp_before) << ','
            << format_number(r.bpp_after) << ',' << format_number(r.psnr_clean)
            << ',' << format_number(r.psnr_adv) << ','
            << format_number(r.color_score) << ','
            << format_number(r.texture_score) << ',' << format_number(r.linf)
            << ',' << format_number(r.l2) << ',' << csv_escape(r.error)
            << "\r\n";
    }
}

// grouped means of one numeric accessor over ok records
template <class Key, class Val>
void write_grouped_csv(const std::string& path, const std::string& header,
                       const std::vector<EvaluationRecord>& records, Key key,
                       Val val) {
    std::vector<std::string> order;
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& r : records) {
        if (!r.ok()) continue;
        std::string k = key(r);
        if (!acc.count(k)) order.push_back(k);
        auto& [s, n] = acc[k];
        s += val(r);
        ++n;
    }
    std::ofstream out(path);
    out << header << "\r\n";
    for (const auto& k : order) {
        auto& [s, n] = acc[k];
        out << k << ',' << format_number(s / n) << "\r\n";
    }
}

const char* kSchemaJson = R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "nicrb-report/1",
  "type": "object",
  "required": ["schema", "root_seed", "corpus_size", "record_count",
               "failed_count", "aggregates"],
  "properties": {
    "schema": {"const": "nicrb-report/1"},
    "root_seed": {"type": "integer"},
    "corpus_size": {"type": "integer"},
    "record_count": {"type": "integer"},
    "failed_count": {"type": "integer"},
    "files": {"type": "array", "items": {"type": "string"}},
    "aggregates": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["codec_id", "attack", "loss", "defense", "delta"],
        "properties": {
          "codec_id": {"type": "string"},
          "attack": {"type": "string"},
          "loss": {"type": "string"},
          "defense": {"type": "string"},
          "delta": {"type": "object"},
          "bpp_before": {"type": "number"},
          "bpp_after": {"type": "number"}
        }
      }
    }
  }
})";

}  // namespace

void emit_reports(const GridResult& result, const RunConfig& cfg,
                  const std::string& out_dir) {
    if (result.records.empty()) throw HarnessError("no records to report");
    fs::create_directories(out_dir);
    auto p = [&](const char* name) {
        return (fs::path(out_dir) / name).string();
    };
    auto metric_cols = metric_columns(result.records);

    write_records_csv(p("records.csv"), result.records, metric_cols);
    write_records_csv(p("aggregates.csv"), result.aggregates, metric_cols);

    auto delta_psnr = [](const EvaluationRecord& r) {
        auto it = r.delta.find("psnr");
        return it == r.delta.end() ? 0.0 : it->second;
    };
    // per-loss mean delta for every metric (figure: loss comparison bars)
    {
        std::ofstream out(p("per_loss_delta.csv"));
        out << "loss,metric,mean_delta\r\n";
        for (const auto& m : metric_cols) {
            std::vector<std::string> order;
            std::map<std::string, std::pair<double, int>> acc;
            for (const auto& r : result.records) {
                if (!r.ok() || !r.delta.count(m)) continue;
                if (!acc.count(r.loss_id)) order.push_back(r.loss_id);
                auto& [s, n] = acc[r.loss_id];
                s += r.delta.at(m);
                ++n;
            }
            for (const auto& k : order) {
                auto& [s, n] = acc[k];
                out << csv_escape(k) << ',' << csv_escape(m) << ','
                    << format_number(s / n) << "\r\n";
            }
        }
    }
    // codec x attack robustness heatmap data (higher delta = less robust)
    write_grouped_csv(
        p("codec_attack_heatmap.csv"), "codec_id,attack,mean_delta_psnr",
        result.records,
        [](const EvaluationRecord& r) {
            return csv_escape(r.codec_id) + "," + csv_escape(r.attack_id);
        },
        delta_psnr);
    // relative bpp change per attack
    {
        std::vector<std::string> order;
        std::map<std::string, std::array<double, 3>> acc;  // before, after, n
        for (const auto& r : result.records) {
            if (!r.ok()) continue;
            std::string k = csv_escape(r.codec_id) + "," +
                            csv_escape(r.attack_id) + "," +
                            csv_escape(r.loss_id);
            if (!acc.count(k)) order.push_back(k);
            auto& a = acc[k];
            a[0] += r.bpp_before;
            a[1] += r.bpp_after;
            a[2] += 1.0;
        }
        std::ofstream out(p("bpp_change.csv"));
        out << "codec_id,attack,loss,mean_bpp_before,mean_bpp_after,"
               "relative_change\r\n";
        for (const auto& k : order) {
            auto& a = acc[k];
            double before = a[0] / a[2], after = a[1] / a[2];
            double rel = before > 1e-12 ? (after - before) / before : 0.0;
            out << k << ',' << format_number(before) << ','
                << format_number(after) << ',' << format_number(rel) << "\r\n";
        }
    }
    // correlations across delta metrics and artifact scores, filtered to
    // records where at least one artifact detector fired
    {
        std::vector<std::string> cols;
        for (const auto& m : metric_cols) cols.push_back("delta_" + m);
        cols.push_back("color_score");
        cols.push_back("texture_score");
        std::vector<std::vector<double>> data(cols.size());
        for (const auto& r : result.records) {
            if (!r.ok()) continue;
            if (!(r.color_score > 0.0 || r.texture_score > 0.0)) continue;
            std::size_t i = 0;
            for (const auto& m : metric_cols)
                data[i++].push_back(r.delta.count(m) ? r.delta.at(m) : 0.0);
            data[i++].push_back(r.color_score);
            data[i++].push_back(r.texture_score);
        }
        std::ofstream out(p("correlation.csv"));
        out << "column";
        for (const auto& c : cols) out << ',' << csv_escape(c);
        out << "\r\n";
        if (!data.empty() && !data[0].empty()) {
            auto m = metrics::correlation_matrix(data);
            for (std::size_t i = 0; i < cols.size(); ++i) {
                out << csv_escape(cols[i]);
                for (std::size_t j = 0; j < cols.size(); ++j)
                    out << ',' << format_number(m[i][j]);
                out << "\r\n";
            }
        }
    }
    // mean delta psnr per defense (figure: defense effect bars)
    write_grouped_csv(
        p("defense_effect.csv"), "defense,attack,mean_delta_psnr",
        result.records,
        [](const EvaluationRecord& r) {
            return csv_escape(r.defense_id) + "," + csv_escape(r.attack_id);
        },
        delta_psnr);
    // BSQ-rate of attacked vs clean RD curves per codec family; needs >= 2
    // bitrates per arch prefix (codec ids share "<family>-" prefixes)
    {
        std::ofstream out(p("bsq_rate.csv"));
        out << "family,attack,loss,defense,bsq_rate\r\n";
        std::map<std::string,
                 std::map<std::string, std::pair<metrics::RDPoint,
                                                 metrics::RDPoint>>>
            fam;  // family|attack|loss|defense -> codec -> (clean, attacked)
        for (const auto& a : result.aggregates) {
            std::string family = a.codec_id.substr(0, a.codec_id.find('-'));
            std::string key = csv_escape(family) + "," +
                              csv_escape(a.attack_id) + "," +
                              csv_escape(a.loss_id) + "," +
                              csv_escape(a.defense_id);
            fam[key][a.codec_id] = {{a.bpp_before, a.psnr_clean},
                                    {a.bpp_after, a.psnr_adv}};
        }
        for (const auto& [key, per_codec] : fam) {
            if (per_codec.size() < 2) continue;
            std::vector<metrics::RDPoint> ref, cand;
            for (const auto& [id, pts] : per_codec) {
                ref.push_back(pts.first);
                cand.push_back(pts.second);
            }
            try {
                out << key << ','
                    << format_number(metrics::bsq_rate(ref, cand)) << "\r\n";
            } catch (const std::exception&) {
                out << key << ",nan\r\n";
            }
        }
    }

    // machine-readable summary + its schema
    {
        std::ofstream schema(p("nicrb-report-1.schema.json"));
        schema << kSchemaJson << "\n";
        json j;
        j["schema"] = "nicrb-report/1";
        j["root_seed"] = cfg.root_seed;
        j["corpus_size"] =
            cfg.corpus_dir.empty() ? cfg.synthetic_count : -1;
        int failed = 0;
        for (const auto& r : result.records)
            if (!r.ok()) ++failed;
        j["record_count"] = static_cast<int>(result.records.size());
        j["failed_count"] = failed;
        j["files"] = {"records.csv",       "aggregates.csv",
                      "per_loss_delta.csv", "codec_attack_heatmap.csv",
                      "bpp_change.csv",     "correlation.csv",
                      "defense_effect.csv", "bsq_rate.csv"};
        j["aggregates"] = json::array();
        for (const auto& a : result.aggregates)
            j["aggregates"].push_back({{"codec_id", a.codec_id},
                                       {"attack", a.attack_id},
                                       {"loss", a.loss_id},
                                       {"defense", a.defense_id},
                                       {"delta", a.delta},
                                       {"bpp_before", a.bpp_before},
                                       {"bpp_after", a.bpp_after}});
        std::ofstream out(p("summary.json"));
        out << j.dump(2) << "\n";
    }
}

void validate_summary(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw HarnessError(std::string("summary parse error: ") + e.what());
    }
    json schema = json::parse(kSchemaJson);
    for (const auto& req : schema["required"])
        if (!j.contains(req.get<std::string>()))
            throw HarnessError("summary missing field: " +
                               req.get<std::string>());
    if (j["schema"] != "nicrb-report/1")
        throw HarnessError("unexpected schema tag");
    for (const char* k : {"root_seed", "corpus_size", "record_count",
                          "failed_count"})
        if (!j[k].is_number_integer())
            throw HarnessError(std::string("summary field not integer: ") + k);
    if (!j["aggregates"].is_array())
        throw HarnessError("summary aggregates not an array");
    for (const auto& a : j["aggregates"])
        for (const auto& req : schema["properties"]["aggregates"]["items"]
                                     ["required"])
            if (!a.contains(req.get<std::string>()))
                throw HarnessError("aggregate missing field: " +
                                   req.get<std::string>());
}

std::vector<std::vector<double>> transfer_matrix(
    const std::vector<const codec::CodecModel*>& models, const Corpus& corpus,
    const attack::AttackSpec& spec, metrics::MetricId metric) {
    std::size_t n = models.size();
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t src = 0; src < n; ++src) {
        for (std::size_t img = 0; img < corpus.images.size(); ++img) {
            attack::AttackSpec s = spec;
            s.seed = ad::hash_combine(
                spec.seed, ad::hash_combine(ad::hash_string(models[src]->id),
                                            ad::hash_string(corpus.ids[img])));
            attack::AdversarialExample ex =
                attack::run_attack(s, *models[src], corpus.images[img]);
            metrics::CodecFn target = [&](const Image& im) {
                return codec::reconstruct(*models[src], im);
            };
            for (std::size_t dst = 0; dst < n; ++dst) {
                metrics::CodecFn other = [&](const Image& im) {
                    return codec::reconstruct(*models[dst], im);
                };
                m[src][dst] += metrics::transfer_score(
                                   metric, target, other, corpus.images[img],
                                   ex.perturbed) /
                               static_cast<double>(corpus.images.size());
            }
        }
    }
    return m;
}

}  // namespace nicrb::harness
