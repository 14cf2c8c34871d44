#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nicrb/attacks.hpp"
#include "nicrb/codecs.hpp"
#include "nicrb/defenses.hpp"
#include "nicrb/image.hpp"
#include "nicrb/metrics.hpp"

namespace nicrb::harness {

struct HarnessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- configuration ----

struct CodecSpec {
    std::string id;
    std::string checkpoint;  // load when set and present; else train + save
    codec::Arch arch = codec::Arch::FactorizedPrior;
    double lambda = 0.01;
    std::string bitrate_label;
    int train_steps = 800;
};

struct AttackGridSpec {
    attack::Algorithm algorithm = attack::Algorithm::Ifgsm;
    attack::LossTarget loss;
};

struct Preset {
    double epsilon = 8.0 / 255.0;
    double step_size = 1.0 / 255.0;
    int iterations = 20;
};

// the four (epsilon, step, iterations) launches averaged per cell
std::vector<Preset> default_presets();

struct RunConfig {
    std::string corpus_dir;  // empty -> bundled synthetic corpus
    int synthetic_count = 24;
    int synthetic_size = 64;
    int resize = 0;  // optional center-crop to resize x resize
    std::vector<CodecSpec> codecs;
    std::vector<AttackGridSpec> attacks;
    std::vector<std::string> defenses = {"identity"};
    std::vector<metrics::MetricId> metric_ids = {
        metrics::MetricId::Psnr, metrics::MetricId::Mse,
        metrics::MetricId::MsSsim};
    std::vector<Preset> presets = default_presets();
    std::uint64_t root_seed = 0;
    bool seed_set = false;  // root seed is mandatory
    std::string output_dir = "out";
    int workers = 1;
    bool defense_aware_attacks = false;
    std::string external_metric_cmd;
};

RunConfig config_from_json(const std::string& json_text);
RunConfig load_config(const std::string& path);
std::string config_to_json(const RunConfig& cfg);

// ---- corpus ----

struct Corpus {
    std::vector<std::string> ids;  // lexicographic
    std::vector<Image> images;
    int skipped = 0;
};

Corpus ingest_corpus(const std::string& dir, int resize = 0);
// seeded gradients / sinusoid textures / blobs; no downloads needed
Corpus synthetic_corpus(int count, int size, std::uint64_t seed);

// ---- grid evaluation ----

struct EvaluationRecord {
    std::string image_id;
    std::string codec_id;
    std::string bitrate_label;
    std::string attack_id;
    std::string loss_id;
    int preset_index = 0;
    std::string defense_id;
    std::uint64_t cell_seed = 0;
    std::map<std::string, double> delta;  // metric name -> delta score
    double bpp_before = 0.0;
    double bpp_after = 0.0;
    double psnr_clean = 0.0;
    double psnr_adv = 0.0;
    double color_score = 0.0;
    double texture_score = 0.0;
    double linf = 0.0;
    double l2 = 0.0;
    double wall_time_s = 0.0;  // operational; excluded from CSV reports
    std::string error;         // empty = ok; failures are tagged, not dropped

    bool ok() const { return error.empty(); }
    std::string cell_key() const;
};

struct GridResult {
    std::vector<EvaluationRecord> records;     // one per cell, grid order
    std::vector<EvaluationRecord> aggregates;  // mean per codec/attack/defense
    int ledger_hits = 0;
};

std::uint64_t cell_seed(std::uint64_t root, const std::string& image_id,
                        const std::string& codec_id,
                        const std::string& attack_id,
                        const std::string& loss_id, int preset_index,
                        const std::string& defense_id);

// trains/loads codecs, runs every cell in a worker pool, appends to the
// on-disk ledger (<output>/ledger.jsonl); completed cells are skipped
GridResult run_grid(const RunConfig& cfg);

// mean over the ok() members; aggregate keyed by codec/attack/loss/defense
std::vector<EvaluationRecord> aggregate(
    const std::vector<EvaluationRecord>& records);

// ---- reports ----

// records.csv, aggregates.csv, per_loss_delta.csv, codec_attack_heatmap.csv,
// bpp_change.csv, correlation.csv, defense_effect.csv, bsq_rate.csv,
// summary.json (+ nicrb-report-1.schema.json)
void emit_reports(const GridResult& result, const RunConfig& cfg,
                  const std::string& out_dir);

// structural validation of a summary.json document against the shipped schema
void validate_summary(const std::string& json_text);

// NxN mean transfer score; examples generated against row codec, evaluated
// on column codec; diagonal is exactly 0
std::vector<std::vector<double>> transfer_matrix(
    const std::vector<const codec::CodecModel*>& models, const Corpus& corpus,
    const attack::AttackSpec& spec, metrics::MetricId metric);

// RFC-4180 field quoting
std::string csv_escape(const std::string& field);
std::string format_number(double v);

}  // namespace nicrb::harness
