#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "s3d/config.hpp"
#include "s3d/dataset.hpp"
#include "s3d/metrics.hpp"
#include "s3d/property.hpp"
#include "s3d/stage2.hpp"

namespace s3d::pipeline {

enum ExitCode : int { kOk = 0, kValidationFailure = 2, kMissingPrerequisite = 3 };

class PrerequisiteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Files inside a run directory.
struct RunPaths {
    std::filesystem::path dir;
    std::filesystem::path lm() const { return dir / "lm"; }
    std::filesystem::path lm_finetuned() const { return dir / "lm_finetuned"; }
    std::filesystem::path bridge() const { return dir / "bridge"; }
    std::filesystem::path diffusion() const { return dir / "diffusion"; }
    std::filesystem::path lm_log() const { return dir / "lm_train.jsonl"; }
    std::filesystem::path stage2_log() const { return dir / "stage2_train.jsonl"; }
    std::filesystem::path normalizer() const { return dir / "normalizer.json"; }
    std::filesystem::path config() const { return dir / "config.json"; }
};

// Seconds from SOURCE_DATE_EPOCH, or null when unset.
nlohmann::json timestamp();
nlohmann::json artifact_metadata(const config::RunConfig& cfg);

// Training corpus view: one entry per distinct molecule in the train split.
struct Corpus {
    std::vector<std::string> selfies;
    std::vector<std::vector<int>> tokens;
    std::vector<double> z;  // empty for unconditional runs
};

std::optional<Normalizer> fit_normalizer(const config::RunConfig& cfg, const data::Dataset& ds);
Corpus build_corpus(const std::vector<const data::DatasetRecord*>& records, const config::RunConfig& cfg,
                    const std::optional<Normalizer>& norm);

// LM, bridge and denoiser sharing one parameter store.
struct Models {
    nn::ParameterStore<float> store;
    std::unique_ptr<lm::LanguageModel<float>> lm;
    std::unique_ptr<bridge::Bridge<float>> bridge;
    std::unique_ptr<diffusion::DiffusionModel<float>> diffusion;

    explicit Models(const config::RunConfig& cfg);
};

// Models with every checkpoint of a finished run loaded (the fine-tuned LM
// when stage 2 produced one).
struct LoadedRun {
    std::unique_ptr<Models> models;
    std::optional<Normalizer> normalizer;
    bool zero_bridge = false;
    // Components ("lm", "bridge", "diffusion") whose weights equal a fresh init.
    std::vector<std::string> untrained;
};
LoadedRun load_run(const config::RunConfig& cfg);

// Conformer for a given SELFIES string using the run's bridge condition.
diffusion::Coords conformer_for(const LoadedRun& run, const std::string& selfies_text, std::optional<double> z,
                                int steps, Rng& rng);

struct Stage1Summary {
    lm::LmTrainResult result;
    std::string checkpoint_hash;
};

Stage1Summary run_stage1(const config::RunConfig& cfg);

struct Stage2Summary {
    stage2::Result result;
    std::string lm_hash_before;
    std::string lm_hash_after;
};

// Requires the stage-1 checkpoint (PrerequisiteError otherwise).
Stage2Summary run_stage2(const config::RunConfig& cfg);

struct GenerateRequest {
    std::size_t n = 10;
    std::uint64_t seed = 0;
    std::optional<double> target;  // raw property value for conditional runs
    lm::SampleOptions sampling;
    std::filesystem::path output;
};

std::vector<data::DatasetRecord> run_generate(const config::RunConfig& cfg, const GenerateRequest& request);

struct EvaluateRequest {
    std::filesystem::path generated;
    std::filesystem::path dataset;  // ingested dataset directory
    std::string reference_split = "train";
    std::filesystem::path output_dir;  // report.json and hist_*.csv
    std::size_t bins = 40;
    nlohmann::json metadata = nlohmann::json::object();
};

// Throws metrics::MetricsError when an internal invariant fails.
metrics::MetricReport run_evaluate(const EvaluateRequest& request);

struct MaeResult {
    double mae = 0;
    std::size_t used = 0;
    std::size_t failed = 0;
};

// Targets come from each record's "target_<property>" entry, else `target`.
MaeResult property_mae(const std::vector<chem::MolecularGraph2D>& molecules, const std::vector<double>& targets,
                       const PropertyOracle& oracle);
MaeResult run_property_mae(const std::filesystem::path& generated, const std::string& property,
                           std::optional<double> target);

}  // namespace s3d::pipeline
