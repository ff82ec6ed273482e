// Command-line front end: ingest, train-lm, train-diffusion, generate,
// evaluate, property-mae.
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "s3d/checkpoint.hpp"
#include "s3d/pipeline.hpp"
#include "s3d/selfies.hpp"

namespace fs = std::filesystem;
using namespace s3d;

namespace {

config::RunConfig load_with_overrides(const std::string& path, std::optional<std::uint64_t> seed, bool zero_bridge,
                                      bool finetune_lm) {
    const auto resolved = config::resolve_data_path(path, fs::current_path());
    if (!fs::exists(resolved)) throw pipeline::PrerequisiteError("config " + resolved.string() + " not found");
    auto cfg = config::load_config(resolved);
    if (seed) cfg.seed = *seed;
    if (zero_bridge) cfg.zero_bridge = true;
    if (finetune_lm) cfg.finetune_lm = true;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SELFIES-to-3D molecule generation toolkit"};
    app.require_subcommand(1);

    std::string input, out_dir, format = "jsonl";
    std::uint64_t ingest_seed = 0;
    std::vector<double> fractions{0.8, 0.1, 0.1};
    auto* ingest = app.add_subcommand("ingest", "Validate records and write split manifests");
    ingest->add_option("input", input, "JSONL file or XYZ directory")->required();
    ingest->add_option("-o,--out", out_dir, "Dataset directory to create")->required();
    ingest->add_option("--format", format, "jsonl | xyz_dir")->check(CLI::IsMember({"jsonl", "xyz_dir"}));
    ingest->add_option("--seed", ingest_seed, "Split seed");
    ingest->add_option("--split", fractions, "Train/valid/test fractions")->expected(3);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool zero_bridge = false, finetune_lm = false;
    auto* train_lm = app.add_subcommand("train-lm", "Stage 1: train the SELFIES language model");
    auto* train_diff = app.add_subcommand("train-diffusion", "Stage 2: train bridge and denoiser on a frozen LM");
    for (auto* sc : {train_lm, train_diff}) {
        sc->add_option("-c,--config", config_path, "Run configuration JSON")->required();
        sc->add_option("--seed", seed, "Override the configured seed");
    }
    train_diff->add_flag("--zero-bridge", zero_bridge, "Force the chemical condition to zero");
    train_diff->add_flag("--finetune-lm", finetune_lm, "Let the LM parameters train as well");

    std::size_t n = 10;
    std::optional<double> target;
    std::string output;
    double temperature = 1.0;
    bool greedy = false;
    std::size_t beam = 1;
    std::uint64_t gen_seed = 0;
    auto* generate = app.add_subcommand("generate", "Sample molecules with conformers");
    generate->add_option("-c,--config", config_path, "Run configuration JSON")->required();
    generate->add_option("-n,--count", n, "Number of molecules");
    generate->add_option("--target", target, "Property target for conditional runs");
    generate->add_option("-o,--out", output, "Output JSONL")->required();
    generate->add_option("--temperature", temperature, "Sampling temperature");
    generate->add_flag("--greedy", greedy, "Argmax decoding");
    generate->add_option("--beam", beam, "Beam size");
    generate->add_option("--seed", gen_seed, "Sampling seed");

    std::string generated, dataset, split = "train";
    std::size_t bins = 40;
    auto* evaluate = app.add_subcommand("evaluate", "Metric report and histograms");
    evaluate->add_option("generated", generated, "Generated JSONL")->required();
    evaluate->add_option("-d,--dataset", dataset, "Ingested dataset directory")->required();
    evaluate->add_option("--split", split, "Reference split")->check(CLI::IsMember({"train", "valid", "test"}));
    evaluate->add_option("-o,--out", out_dir, "Report directory")->required();
    evaluate->add_option("--bins", bins, "Histogram bins");

    std::string property;
    auto* mae = app.add_subcommand("property-mae", "Surrogate property MAE against targets");
    mae->add_option("generated", generated, "Generated JSONL")->required();
    mae->add_option("-p,--property", property, "heavy_atoms | mol_weight | polar_atoms")->required();
    mae->add_option("--target", target, "Target used when a record carries none");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            if (fractions.size() != 3) throw config::ConfigError("--split needs three fractions");
            const auto s = data::ingest(config::resolve_data_path(input, fs::current_path()),
                                        data::input_format_from_string(format), out_dir,
                                        {fractions[0], fractions[1], fractions[2]}, ingest_seed);
            std::cout << "records " << s.records << " rejected " << s.rejects << " train " << s.split.train.size()
                      << " valid " << s.split.valid.size() << " test " << s.split.test.size() << '\n';
            for (const auto& m : s.reject_messages) std::cerr << "rejected " << m << '\n';
        } else if (*train_lm) {
            const auto cfg = load_with_overrides(config_path, seed, false, false);
            const auto s = pipeline::run_stage1(cfg);
            std::cout << "final loss " << s.result.epoch_loss.back() << " checkpoint " << s.checkpoint_hash << '\n';
        } else if (*train_diff) {
            const auto cfg = load_with_overrides(config_path, seed, zero_bridge, finetune_lm);
            const auto s = pipeline::run_stage2(cfg);
            std::cout << "final loss " << s.result.epoch_loss.back();
            if (s.result.validation_loss) std::cout << " validation " << *s.result.validation_loss;
            std::cout << " lm " << s.lm_hash_before << (s.lm_hash_before == s.lm_hash_after ? " unchanged" : " changed")
                      << '\n';
        } else if (*generate) {
            const auto cfg = load_with_overrides(config_path, std::nullopt, false, false);
            pipeline::GenerateRequest req;
            req.n = n;
            req.seed = gen_seed;
            req.target = target;
            req.output = output;
            req.sampling.temperature = temperature;
            req.sampling.greedy = greedy;
            req.sampling.beam_size = beam;
            const auto recs = pipeline::run_generate(cfg, req);
            std::cout << "wrote " << recs.size() << " records to " << output << '\n';
        } else if (*evaluate) {
            pipeline::EvaluateRequest req{generated, dataset, split, out_dir, bins, nlohmann::json::object()};
            const auto report = pipeline::run_evaluate(req);
            std::cout << metrics::to_json(report).dump(2) << '\n';
        } else if (*mae) {
            const auto r = pipeline::run_property_mae(generated, property, target);
            std::cout << nlohmann::json{{"property", property}, {"mae", r.mae}, {"used", r.used}, {"failed", r.failed}}.dump()
                      << '\n';
        }
    } catch (const pipeline::PrerequisiteError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pipeline::kMissingPrerequisite;
    } catch (const nn::CheckpointError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pipeline::kMissingPrerequisite;
    } catch (const data::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        const std::string msg = e.what();
        const bool missing = msg.find("cannot read") != std::string::npos || msg.find("run ingest") != std::string::npos ||
                             msg.find("not a directory") != std::string::npos;
        return missing ? pipeline::kMissingPrerequisite : pipeline::kValidationFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pipeline::kValidationFailure;
    }
    return pipeline::kOk;
}
