#include "s3d/pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>

#include "s3d/checkpoint.hpp"
#include "s3d/hash.hpp"
#include "s3d/selfies.hpp"

namespace s3d::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

json timestamp() {
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
        char* end = nullptr;
        const long long v = std::strtoll(env, &end, 10);
        if (end && *end == '\0') return v;
    }
    return nullptr;
}

json artifact_metadata(const config::RunConfig& cfg) {
    return {{"config_hash", cfg.hash()}, {"seed", cfg.seed}, {"timestamp", timestamp()}};
}

std::optional<Normalizer> fit_normalizer(const config::RunConfig& cfg, const data::Dataset& ds) {
    if (!cfg.property) return std::nullopt;
    const auto oracle = *surrogate_oracle(*cfg.property);
    std::vector<double> values;
    std::set<std::string> seen;
    for (const auto* r : ds.part("train"))
        if (seen.insert(r->selfies).second) values.push_back(oracle(r->graph));
    return Normalizer::fit(values);
}

Corpus build_corpus(const std::vector<const data::DatasetRecord*>& records, const config::RunConfig& cfg,
                    const std::optional<Normalizer>& norm) {
    Corpus c;
    std::set<std::string> seen;
    std::optional<PropertyOracle> oracle;
    if (cfg.property) oracle = surrogate_oracle(*cfg.property);
    for (const auto* r : records) {
        if (!seen.insert(r->selfies).second) continue;
        c.selfies.push_back(r->selfies);
        c.tokens.push_back(selfies::tokenize(r->selfies).vocab_ids);
        if (oracle && norm) c.z.push_back(norm->z((*oracle)(r->graph)));
    }
    return c;
}

Models::Models(const config::RunConfig& cfg) {
    Rng rng(cfg.seed);
    Rng r1 = rng.fork(11), r2 = rng.fork(12), r3 = rng.fork(13);
    lm = std::make_unique<lm::LanguageModel<float>>(cfg.lm, store, r1);
    bridge = std::make_unique<bridge::Bridge<float>>(cfg.bridge, store, r2);
    diffusion = std::make_unique<diffusion::DiffusionModel<float>>(cfg.diffusion, store, r3);
}

namespace {

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void save_normalizer(const fs::path& path, const std::optional<Normalizer>& n, const std::optional<std::string>& prop) {
    write_json(path, n ? json{{"property", *prop}, {"mean", n->mean}, {"std", n->std}} : json{{"property", nullptr}});
}

std::optional<Normalizer> load_normalizer(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw PrerequisiteError("missing " + path.string() + " (run train-lm first)");
    const json j = json::parse(in);
    if (j.at("property").is_null()) return std::nullopt;
    Normalizer n{j.at("mean").get<double>(), j.at("std").get<double>()};
    return n;
}

class JsonlLog {
public:
    explicit JsonlLog(const fs::path& path) : out_(path) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
    }
    void operator()(const std::string& stage, const lm::LmStepLog& s) {
        out_ << json{{"stage", stage}, {"step", s.step}, {"loss", s.loss}, {"lr", s.lr}}.dump() << '\n';
    }

private:
    std::ofstream out_;
};

std::int64_t total_steps(std::size_t n_items, const config::OptimConfig& o) {
    const auto per_epoch = static_cast<std::int64_t>((n_items + o.batch_size - 1) / o.batch_size);
    return per_epoch * static_cast<std::int64_t>(o.epochs);
}

}  // namespace

Stage1Summary run_stage1(const config::RunConfig& cfg) {
    const auto ds = data::load_dataset(cfg.dataset);
    const RunPaths paths{cfg.output};
    fs::create_directories(paths.dir);
    config::save_config(cfg, paths.config());
    const auto norm = fit_normalizer(cfg, ds);
    if (norm) norm->validate();
    save_normalizer(paths.normalizer(), norm, cfg.property);
    const auto corpus = build_corpus(ds.part("train"), cfg, norm);

    Models models(cfg);
    JsonlLog log(paths.lm_log());
    lm::LmTrainOptions opts;
    opts.epochs = cfg.lm_optim.epochs;
    opts.batch_size = cfg.lm_optim.batch_size;
    opts.schedule = cfg.lm_optim.schedule(total_steps(corpus.tokens.size(), cfg.lm_optim));
    opts.adamw = cfg.lm_optim.adamw();
    opts.grad_clip = cfg.lm_optim.grad_clip;
    opts.seed = cfg.seed;
    opts.on_step = [&](const lm::LmStepLog& s) { log("lm", s); };
    Stage1Summary summary;
    summary.result = lm::train_lm(*models.lm, corpus.tokens, corpus.z, opts);
    json meta = artifact_metadata(cfg);
    meta["stage"] = 1;
    meta["vocab_version"] = selfies::Vocabulary::kVersion;
    meta["final_loss"] = summary.result.epoch_loss.empty() ? json(nullptr) : json(summary.result.epoch_loss.back());
    nn::save_checkpoint(models.store, "lm/", paths.lm(), meta);
    summary.checkpoint_hash = file_hash(nn::checkpoint_data_path(paths.lm()));
    return summary;
}

namespace {

template <class Record>
std::vector<stage2::Example<float>> examples_for(const std::vector<Record>& records, const Models& m,
                                                 const config::RunConfig& cfg, const std::optional<Normalizer>& norm) {
    std::optional<PropertyOracle> oracle;
    if (cfg.property) oracle = surrogate_oracle(*cfg.property);
    std::vector<stage2::Example<float>> out;
    for (const auto* r : records) {
        std::optional<double> z;
        if (oracle && norm) z = norm->z((*oracle)(r->graph));
        out.push_back(stage2::make_example(*m.lm, r->selfies, r->graph, r->conformer, z));
    }
    return out;
}

}  // namespace

Stage2Summary run_stage2(const config::RunConfig& cfg) {
    const RunPaths paths{cfg.output};
    if (!nn::checkpoint_exists(paths.lm())) {
        throw PrerequisiteError("stage-1 checkpoint " + paths.lm().string() + " not found (run train-lm first)");
    }
    const auto ds = data::load_dataset(cfg.dataset);
    const auto norm = load_normalizer(paths.normalizer());
    Models models(cfg);
    nn::load_checkpoint(models.store, "lm/", paths.lm());
    Stage2Summary summary;
    summary.lm_hash_before = file_hash(nn::checkpoint_data_path(paths.lm()));

    const auto train_set = examples_for(ds.part("train"), models, cfg, norm);
    const auto valid_set = examples_for(ds.part("valid"), models, cfg, norm);
    JsonlLog log(paths.stage2_log());
    stage2::Options opts;
    opts.epochs = cfg.diffusion_optim.epochs;
    opts.batch_size = cfg.diffusion_optim.batch_size;
    opts.schedule = cfg.diffusion_optim.schedule(total_steps(train_set.size(), cfg.diffusion_optim));
    opts.adamw = cfg.diffusion_optim.adamw();
    opts.grad_clip = cfg.diffusion_optim.grad_clip;
    opts.seed = cfg.seed;
    opts.zero_bridge = cfg.zero_bridge;
    opts.finetune_lm = cfg.finetune_lm;
    opts.validation_draws = cfg.validation_draws;
    opts.on_step = [&](const lm::LmStepLog& s) { log("stage2", s); };
    summary.result = stage2::train(*models.lm, *models.bridge, *models.diffusion, models.store, train_set, valid_set, opts);

    json meta = artifact_metadata(cfg);
    meta["stage"] = 2;
    meta["zero_bridge"] = cfg.zero_bridge;
    meta["finetune_lm"] = cfg.finetune_lm;
    meta["final_loss"] = summary.result.epoch_loss.empty() ? json(nullptr) : json(summary.result.epoch_loss.back());
    meta["validation_loss"] = summary.result.validation_loss ? json(*summary.result.validation_loss) : json(nullptr);
    nn::save_checkpoint(models.store, "bridge/", paths.bridge(), meta);
    nn::save_checkpoint(models.store, "diffusion/", paths.diffusion(), meta);
    if (cfg.finetune_lm) {
        nn::save_checkpoint(models.store, "lm/", paths.lm_finetuned(), meta);
    } else if (fs::exists(nn::checkpoint_data_path(paths.lm_finetuned()))) {
        fs::remove(nn::checkpoint_data_path(paths.lm_finetuned()));
        fs::remove(nn::checkpoint_manifest_path(paths.lm_finetuned()));
    }
    summary.lm_hash_after = file_hash(nn::checkpoint_data_path(paths.lm()));
    return summary;
}

LoadedRun load_run(const config::RunConfig& cfg) {
    const RunPaths paths{cfg.output};
    for (const auto& base : {paths.lm(), paths.bridge(), paths.diffusion()}) {
        if (!nn::checkpoint_exists(base)) {
            throw PrerequisiteError("checkpoint " + base.string() + " not found (train both stages first)");
        }
    }
    LoadedRun run;
    run.normalizer = load_normalizer(paths.normalizer());
    run.models = std::make_unique<Models>(cfg);
    auto& store = run.models->store;
    const bool finetuned = nn::checkpoint_exists(paths.lm_finetuned());
    nn::load_checkpoint(store, "lm/", finetuned ? paths.lm_finetuned() : paths.lm());
    nn::load_checkpoint(store, "bridge/", paths.bridge());
    const json meta = nn::load_checkpoint(store, "diffusion/", paths.diffusion());
    run.zero_bridge = meta.value("zero_bridge", false);
    const Models fresh(cfg);
    for (const char* prefix : {"lm/", "bridge/", "diffusion/"}) {
        bool same = true;
        for (const auto& p : fresh.store.all()) {
            if (p.name.rfind(prefix, 0) != 0) continue;
            if (store.find(p.name)->value.data != p.value.data) {
                same = false;
                break;
            }
        }
        if (same) run.untrained.emplace_back(std::string(prefix, std::strlen(prefix) - 1));
    }
    return run;
}

diffusion::Coords conformer_for(const LoadedRun& run, const std::string& selfies_text, std::optional<double> z,
                                int steps, Rng& rng) {
    const auto stream = selfies::tokenize(selfies_text);
    const auto graph = selfies::decode(stream);
    nn::Tensor<float> c_chem;
    if (!run.zero_bridge) {
        nn::Graph<float> g(false);
        c_chem = (*run.models->bridge)(g, g.constant(run.models->lm->hidden_states(stream.vocab_ids, z))).value();
    }
    diffusion::SamplerOptions so;
    so.steps = steps;
    return diffusion::sample_conformer(*run.models->diffusion, graph, c_chem, z, so, rng);
}

std::vector<data::DatasetRecord> run_generate(const config::RunConfig& cfg, const GenerateRequest& request) {
    if (request.target && !cfg.property) throw config::ConfigError("a target needs a conditional run (set property)");
    const auto run = load_run(cfg);
    std::optional<double> z;
    if (cfg.property) {
        if (!run.normalizer) throw PrerequisiteError("normalizer has no property; retrain stage 1 with the property set");
        run.normalizer->validate();
        z = request.target ? run.normalizer->z(*request.target) : 0.0;
    }
    Rng rng(request.seed);
    Rng lm_rng = rng.fork(1), geo_rng = rng.fork(2);
    std::vector<data::DatasetRecord> out;
    const std::vector<double> zs = z ? std::vector<double>{*z} : std::vector<double>{};
    for (std::size_t i = 0; i < request.n; ++i) {
        std::vector<int> ids;
        for (int attempt = 0; attempt < 100 && ids.empty(); ++attempt) {
            ids = lm::sample_sequences(*run.models->lm, 1, request.sampling, lm_rng, zs).front();
        }
        if (ids.empty()) throw std::runtime_error("language model produced only empty sequences");
        data::DatasetRecord r;
        r.id = "gen" + std::to_string(i);
        r.selfies = selfies::from_ids(ids).str();
        r.graph = selfies::decode(r.selfies);
        r.conformer.coordinates = conformer_for(run, r.selfies, z, cfg.sampling_steps, geo_rng);
        for (const auto& name : surrogate_names()) r.properties[name] = (*surrogate_oracle(name))(r.graph);
        if (cfg.property && request.target) r.properties["target_" + *cfg.property] = *request.target;
        out.push_back(std::move(r));
    }
    if (!request.output.empty()) {
        json meta = artifact_metadata(cfg);
        meta["sample_seed"] = request.seed;
        meta["untrained"] = run.untrained;
        if (request.output.has_parent_path()) fs::create_directories(request.output.parent_path());
        std::ofstream os(request.output, std::ios::binary);
        if (!os) throw data::DataError("cannot write " + request.output.string());
        for (const auto& r : out) {
            json j = data::record_to_json(r);
            j["meta"] = meta;
            os << j.dump() << '\n';
        }
    }
    return out;
}

metrics::MetricReport run_evaluate(const EvaluateRequest& req) {
    std::ifstream in(req.generated);
    if (!in) throw PrerequisiteError("cannot read generated file " + req.generated.string());
    std::vector<chem::MolecularGraph2D> gen2d;
    std::vector<chem::GeometricGraph> gen3d;
    std::string line;
    std::size_t rejected = 0;
    json source_meta;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            if (source_meta.is_null() && j.is_object() && j.contains("meta")) source_meta = j["meta"];
            auto r = data::record_from_json(j);
            gen2d.push_back(r.graph);
            gen3d.push_back(chem::GeometricGraph::build(std::move(r.graph), std::move(r.conformer)));
        } catch (const std::exception&) {
            gen2d.emplace_back();  // counted as generated but invalid
            ++rejected;
        }
    }
    if (gen2d.empty()) throw metrics::MetricsError("generated set is empty");
    const auto ds = data::load_dataset(req.dataset);
    const auto ref_records = ds.part(req.reference_split);
    if (ref_records.empty()) throw metrics::MetricsError("reference split '" + req.reference_split + "' is empty");
    std::unordered_set<std::string> ref_hashes;
    std::vector<chem::MolecularGraph2D> ref_unique;
    std::vector<chem::GeometricGraph> ref3d;
    for (const auto* r : ref_records) {
        if (ref_hashes.insert(chem::canonical_hash(r->graph)).second) ref_unique.push_back(r->graph);
        ref3d.push_back(chem::GeometricGraph::build(r->graph, r->conformer));
    }
    metrics::MetricReport report;
    report.m2d = metrics::eval_2d(gen2d, ref_hashes);
    std::vector<chem::MolecularGraph2D> valid;
    for (const auto& g : gen2d)
        if (chem::is_valid_and_connected(g)) valid.push_back(g);
    if (!valid.empty()) report.snn = metrics::snn(valid, ref_unique);
    if (!gen3d.empty()) report.m3d = metrics::eval_3d(gen3d, ref3d);
    report.metadata = req.metadata;
    if (source_meta.is_object()) {
        for (const char* key : {"config_hash", "seed", "sample_seed", "untrained"})
            if (source_meta.contains(key) && !report.metadata.contains(key)) report.metadata[key] = source_meta[key];
    }
    report.metadata["rejected_records"] = rejected;
    report.metadata["reference_split"] = req.reference_split;
    if (!report.metadata.contains("timestamp")) report.metadata["timestamp"] = timestamp();
    report.check_invariants();

    if (!req.output_dir.empty()) {
        fs::create_directories(req.output_dir);
        write_json(req.output_dir / "report.json", metrics::to_json(report));
        if (!gen3d.empty()) {
            std::vector<chem::GeometryMeasurements> gm, rm;
            for (const auto& g : gen3d) gm.push_back(chem::measure_geometry(g));
            for (const auto& r : ref3d) rm.push_back(chem::measure_geometry(r));
            for (auto kind : {metrics::GeomKind::BondLength, metrics::GeomKind::BondAngle, metrics::GeomKind::Dihedral}) {
                const auto table = metrics::export_histograms(metrics::pool_measurements(gm, kind),
                                                              metrics::pool_measurements(rm, kind), req.bins);
                metrics::write_histogram_csv(table, req.output_dir / ("hist_" + metrics::to_string(kind) + ".csv"));
            }
        }
    }
    return report;
}

MaeResult property_mae(const std::vector<chem::MolecularGraph2D>& molecules, const std::vector<double>& targets,
                       const PropertyOracle& oracle) {
    if (molecules.size() != targets.size()) throw std::invalid_argument("one target per molecule is required");
    if (molecules.empty()) throw std::invalid_argument("no molecules to score");
    MaeResult res;
    double total = 0;
    for (std::size_t i = 0; i < molecules.size(); ++i) {
        double v = 0;
        try {
            v = oracle(molecules[i]);
        } catch (const std::exception&) {
            ++res.failed;
            continue;
        }
        if (!std::isfinite(v)) {
            ++res.failed;
            continue;
        }
        total += std::abs(v - targets[i]);
        ++res.used;
    }
    if (static_cast<double>(res.failed) > 0.1 * static_cast<double>(molecules.size())) {
        throw std::runtime_error("property oracle failed on " + std::to_string(res.failed) + " of " +
                                 std::to_string(molecules.size()) + " molecules");
    }
    res.mae = res.used ? total / static_cast<double>(res.used) : 0.0;
    return res;
}

MaeResult run_property_mae(const fs::path& generated, const std::string& property, std::optional<double> target) {
    const auto oracle = surrogate_oracle(property);
    if (!oracle) throw config::ConfigError("unknown property '" + property + "'");
    const auto recs = data::read_jsonl(generated, 0.0).records;
    std::vector<chem::MolecularGraph2D> mols;
    std::vector<double> targets;
    for (const auto& r : recs) {
        const auto it = r.properties.find("target_" + property);
        if (it != r.properties.end()) {
            targets.push_back(it->second);
        } else if (target) {
            targets.push_back(*target);
        } else {
            throw config::ConfigError("record " + r.id + " has no target_" + property + " and no --target was given");
        }
        mols.push_back(r.graph);
    }
    return property_mae(mols, targets, *oracle);
}

}  // namespace s3d::pipeline
