#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "s3d/checkpoint.hpp"
#include "s3d/hash.hpp"
#include "s3d/pipeline.hpp"
#include "s3d/selfies.hpp"
#include "schema_check.hpp"

using namespace s3d;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("s3d_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// First n toy records with distinct molecules.
std::vector<data::DatasetRecord> toy_records(std::size_t n) {
    const auto all = data::read_jsonl(fs::path(S3D_DATA_DIR) / "toy_corpus.jsonl", 0.0).records;
    std::vector<data::DatasetRecord> out;
    std::set<std::string> seen;
    for (const auto& r : all) {
        if (out.size() == n) break;
        if (seen.insert(r.selfies).second) out.push_back(r);
    }
    return out;
}

json tiny_config(const fs::path& dataset, const fs::path& output) {
    json j = json::parse(R"({
      "seed": 5,
      "data": {"split": [0.8, 0.1, 0.1]},
      "lm": {"n_layers": 1, "hidden_dim": 16, "n_heads": 2, "max_seq_len": 48, "ffn_dim": 32,
             "prompt_len": 2, "prompt_hidden": 8,
             "optimizer": "AdamW", "init lr": 0.003, "min lr": 0.0003, "warmup lr": 0.0001, "warmup steps": 2,
             "weight decay": 0.0, "epochs": 2, "batch size": 4, "grad clip": 1.0},
      "bridge": {"n_queries": 4, "n_layers": 1, "n_heads": 2, "ffn_dim": 16},
      "diffusion": {"n layers": 1, "atom hidden size": 16, "atom intermediate size": 32,
                    "pair hidden size": 8, "pair intermediate size": 8, "n heads": 2, "cond dim": 16,
                    "optimizer": "AdamW", "init lr": 0.002, "min lr": 0.0001, "warmup lr": 0.0001,
                    "warmup steps": 2, "weight decay": 0.0, "epochs": 2, "batch size": 4, "grad clip": 1.0,
                    "schedule": "cosine", "T": 100, "sampling steps": 10, "validation draws": 2},
      "ablation": {"zero_bridge": false, "finetune_lm": false},
      "property": null
    })");
    j["data"]["dataset"] = dataset.string();
    j["output"] = output.string();
    return j;
}

double order_number(chem::BondOrder o) {
    switch (o) {
        case chem::BondOrder::Double: return 2.0;
        case chem::BondOrder::Triple: return 3.0;
        case chem::BondOrder::Aromatic: return 1.5;
        default: return 1.0;
    }
}

config::RunConfig make_config(const json& j) { return config::from_json(j); }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(S3D_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// A 10-molecule dataset ingested once per test binary.
const fs::path& tiny_dataset() {
    static const fs::path dir = [] {
        const auto root = fresh_dir("tiny_dataset");
        data::write_jsonl(toy_records(10), root / "input.jsonl");
        data::ingest(root / "input.jsonl", data::InputFormat::Jsonl, root / "ds", {0.8, 0.1, 0.1}, 3);
        return root / "ds";
    }();
    return dir;
}

}  // namespace

TEST_CASE("ingest splits 10 records 8/1/1 and is stable across reruns") {
    const auto root = fresh_dir("ingest");
    data::write_jsonl(toy_records(10), root / "in.jsonl");
    const auto a = data::ingest(root / "in.jsonl", data::InputFormat::Jsonl, root / "a", {0.8, 0.1, 0.1}, 42);
    const auto b = data::ingest(root / "in.jsonl", data::InputFormat::Jsonl, root / "b", {0.8, 0.1, 0.1}, 42);
    CHECK(a.records == 10);
    CHECK(a.rejects == 0);
    CHECK(a.split.train.size() == 8);
    CHECK(a.split.valid.size() == 1);
    CHECK(a.split.test.size() == 1);
    CHECK(slurp(root / "a" / "splits.json") == slurp(root / "b" / "splits.json"));
    CHECK(slurp(root / "a" / "records.jsonl") == slurp(root / "b" / "records.jsonl"));
    const auto ds = data::load_dataset(root / "a");
    CHECK(ds.part("train").size() == 8);
}

TEST_CASE("records whose selfies names a different molecule are rejected") {
    auto recs = toy_records(2);
    json j = data::record_to_json(recs[0]);
    j["selfies"] = recs[1].selfies;
    CHECK_THROWS_AS(data::record_from_json(j), data::DataError);

    const auto root = fresh_dir("reject");
    {
        std::ofstream out(root / "in.jsonl");
        out << data::record_to_json(recs[0]).dump() << '\n' << j.dump() << '\n';
    }
    const auto lenient = data::read_jsonl(root / "in.jsonl", 0.5);
    CHECK(lenient.records.size() == 1);
    CHECK(lenient.rejects.size() == 1);
    CHECK_THROWS_AS(data::read_jsonl(root / "in.jsonl"), data::DataError);
}

TEST_CASE("an XYZ directory with bond sidecars yields one record per file") {
    const auto root = fresh_dir("xyz");
    const auto recs = toy_records(5);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        std::ofstream xyz(root / ("m" + std::to_string(i) + ".xyz"));
        xyz.precision(17);
        xyz << r.graph.atom_count() << "\ncomment\n";
        for (std::size_t a = 0; a < r.graph.atom_count(); ++a) {
            const auto& p = r.conformer.coordinates[a];
            xyz << r.graph.atoms()[a].symbol() << ' ' << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
        }
        std::ofstream bonds(root / ("m" + std::to_string(i) + ".bonds"));
        bonds << "# i j order\n";
        for (const auto& b : r.graph.bonds()) bonds << b.a << ' ' << b.b << ' ' << order_number(b.order) << '\n';
    }
    const auto read = data::read_xyz_dir(root);
    REQUIRE(read.records.size() == 5);
    CHECK(read.rejects.empty());
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(chem::canonical_hash(read.records[i].graph) == chem::canonical_hash(recs[i].graph));
        CHECK(read.records[i].conformer.coordinates[0][0] == doctest::Approx(recs[i].conformer.coordinates[0][0]));
    }
    fs::remove(root / "m0.bonds");
    CHECK(data::read_xyz_dir(root, 0.5).rejects.size() == 1);
}

TEST_CASE("config round-trips and carries the hyperparameter table keys") {
    const auto cfg = config::load_config(fs::path(S3D_SOURCE_DIR) / "configs" / "default.json");
    const json j = config::to_json(cfg);
    for (const char* key : {"n layers", "atom hidden size", "atom intermediate size", "pair hidden size",
                            "pair intermediate size", "n heads", "optimizer", "init lr", "min lr", "warmup lr",
                            "warmup steps", "weight decay"}) {
        CHECK_MESSAGE(j.at("diffusion").contains(key), key);
    }
    const auto again = config::from_json(j);
    CHECK(again.hash() == cfg.hash());
    CHECK(config::to_json(again).dump() == j.dump());

    auto other = j;
    other["ablation"]["zero_bridge"] = true;
    CHECK(config::from_json(other).hash() != cfg.hash());
    other = j;
    other["ablation"]["finetune_lm"] = true;
    CHECK(config::from_json(other).hash() != cfg.hash());

    auto bad = j;
    bad["diffusion"]["n heads"] = 5;  // does not divide the hidden size
    CHECK_THROWS_AS(config::from_json(bad), config::ConfigError);
}

TEST_CASE("data paths expand the data-root variable") {
    const auto base = fs::path("/tmp");
    ::setenv("S3D_DATA_ROOT", "/srv/molecules", 1);
    CHECK(config::resolve_data_path("${S3D_DATA_ROOT}/toy.jsonl", base) == fs::path("/srv/molecules/toy.jsonl"));
    CHECK(config::resolve_data_path("rel/x.jsonl", base) == fs::path("/tmp/rel/x.jsonl"));
    ::unsetenv("S3D_DATA_ROOT");
    CHECK(config::resolve_data_path("${S3D_DATA_ROOT}/toy.jsonl", base) == fs::path(S3D_DATA_DIR) / "toy.jsonl");
}

TEST_CASE("end-to-end run is deterministic and its output re-ingests cleanly") {
    ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    const auto root = fresh_dir("e2e");
    const auto cfg = make_config(tiny_config(tiny_dataset(), root / "run"));

    const auto s1 = pipeline::run_stage1(cfg);
    const auto s1b = pipeline::run_stage1(cfg);
    CHECK(s1.checkpoint_hash == s1b.checkpoint_hash);
    CHECK(s1.result.epoch_loss == s1b.result.epoch_loss);

    const auto s2 = pipeline::run_stage2(cfg);
    CHECK(s2.lm_hash_before == s2.lm_hash_after);
    CHECK(s2.lm_hash_before == s1.checkpoint_hash);
    REQUIRE(s2.result.validation_loss);
    CHECK(std::isfinite(*s2.result.validation_loss));
    CHECK_FALSE(fs::exists(nn::checkpoint_data_path(pipeline::RunPaths{cfg.output}.lm_finetuned())));

    const auto manifest = json::parse(slurp(nn::checkpoint_manifest_path(pipeline::RunPaths{cfg.output}.diffusion())));
    CHECK(manifest.dump().find(cfg.hash()) != std::string::npos);

    pipeline::GenerateRequest gen;
    gen.n = 6;
    gen.seed = 17;
    gen.output = root / "gen.jsonl";
    const auto recs = pipeline::run_generate(cfg, gen);
    CHECK(recs.size() == 6);
    const std::string first = slurp(gen.output);
    pipeline::run_generate(cfg, gen);
    CHECK(slurp(gen.output) == first);

    const auto meta = json::parse(first.substr(0, first.find('\n'))).at("meta");
    CHECK(meta.at("config_hash") == cfg.hash());
    CHECK(meta.at("seed") == cfg.seed);
    CHECK(meta.at("untrained").empty());

    const auto re = data::ingest(gen.output, data::InputFormat::Jsonl, root / "re", {1.0, 0.0, 0.0}, 0);
    CHECK(re.rejects == 0);
    CHECK(re.records == 6);

    pipeline::EvaluateRequest ev;
    ev.generated = gen.output;
    ev.dataset = tiny_dataset();
    ev.output_dir = root / "eval_a";
    const auto report = pipeline::run_evaluate(ev);
    ev.output_dir = root / "eval_b";
    pipeline::run_evaluate(ev);
    const auto a = slurp(root / "eval_a" / "report.json");
    CHECK(a == slurp(root / "eval_b" / "report.json"));
    CHECK(slurp(root / "eval_a" / "hist_bond_length.csv") == slurp(root / "eval_b" / "hist_bond_length.csv"));

    const auto doc = json::parse(a);
    CHECK(doc.at("metadata").at("config_hash") == cfg.hash());
    CHECK(doc.at("metadata").at("timestamp") == 1700000000);
    const testing::SchemaChecker schema(
        json::parse(slurp(fs::path(S3D_SCHEMA_DIR) / "metric_report.schema.json")));
    const auto errors = schema.errors(doc);
    CHECK_MESSAGE(errors.empty(), (errors.empty() ? std::string() : errors.front()));
    CHECK(report.m2d.n_generated == 6);

    auto broken = doc;
    broken["scores"]["vc"] = 1.5;
    broken["counts"].erase("n_valid");
    CHECK(schema.errors(broken).size() == 2);
    ::unsetenv("SOURCE_DATE_EPOCH");
}

TEST_CASE("fine-tuning writes a separate LM checkpoint and leaves stage 1 intact") {
    const auto root = fresh_dir("finetune");
    auto j = tiny_config(tiny_dataset(), root / "run");
    j["ablation"]["finetune_lm"] = true;
    const auto cfg = make_config(j);
    const auto s1 = pipeline::run_stage1(cfg);
    const auto s2 = pipeline::run_stage2(cfg);
    CHECK(s2.lm_hash_after == s1.checkpoint_hash);
    const auto ft = nn::checkpoint_data_path(pipeline::RunPaths{cfg.output}.lm_finetuned());
    REQUIRE(fs::exists(ft));
    CHECK(file_hash(ft) != s1.checkpoint_hash);
}

TEST_CASE("untrained weights are flagged in generated metadata") {
    const auto root = fresh_dir("untrained");
    const auto cfg = make_config(tiny_config(tiny_dataset(), root / "run"));
    const pipeline::RunPaths paths{cfg.output};
    fs::create_directories(paths.dir);
    pipeline::Models models(cfg);
    const json meta = pipeline::artifact_metadata(cfg);
    nn::save_checkpoint(models.store, "lm/", paths.lm(), meta);
    nn::save_checkpoint(models.store, "bridge/", paths.bridge(), meta);
    nn::save_checkpoint(models.store, "diffusion/", paths.diffusion(), meta);
    std::ofstream(paths.normalizer()) << R"({"property": null})";

    pipeline::GenerateRequest gen;
    gen.n = 2;
    gen.output = root / "gen.jsonl";
    pipeline::run_generate(cfg, gen);
    const auto first = slurp(gen.output);
    const auto flags = json::parse(first.substr(0, first.find('\n'))).at("meta").at("untrained");
    CHECK(flags == json::array({"lm", "bridge", "diffusion"}));
}

TEST_CASE("conditional generation refuses a degenerate normalizer before sampling") {
    const auto root = fresh_dir("conditional");
    auto j = tiny_config(tiny_dataset(), root / "run");
    j["property"] = "heavy_atoms";
    const auto cfg = make_config(j);
    pipeline::run_stage1(cfg);
    pipeline::run_stage2(cfg);

    pipeline::GenerateRequest gen;
    gen.n = 2;
    gen.target = 5.0;
    gen.output = root / "gen.jsonl";
    const auto ok = pipeline::run_generate(cfg, gen);
    CHECK(ok.front().properties.at("target_heavy_atoms") == 5.0);

    fs::remove(gen.output);
    std::ofstream(pipeline::RunPaths{cfg.output}.normalizer()) << R"({"property": "heavy_atoms", "mean": 5, "std": 0})";
    CHECK_THROWS_AS(pipeline::run_generate(cfg, gen), PropertyError);
    CHECK_FALSE(fs::exists(gen.output));

    const auto uncond = make_config(tiny_config(tiny_dataset(), root / "run"));
    CHECK_THROWS_AS(pipeline::run_generate(uncond, gen), config::ConfigError);
}

TEST_CASE("stage 1 rejects a property with zero spread") {
    const auto root = fresh_dir("flat_property");
    auto recs = toy_records(60);
    std::vector<data::DatasetRecord> same;
    for (const auto& r : recs)
        if (r.graph.heavy_atom_count() == recs.front().graph.heavy_atom_count() && same.size() < 4) same.push_back(r);
    REQUIRE(same.size() >= 2);
    data::write_jsonl(same, root / "in.jsonl");
    data::ingest(root / "in.jsonl", data::InputFormat::Jsonl, root / "ds", {1.0, 0.0, 0.0}, 0);
    auto j = tiny_config(root / "ds", root / "run");
    j["property"] = "heavy_atoms";
    CHECK_THROWS_AS(pipeline::run_stage1(make_config(j)), PropertyError);
}

TEST_CASE("property MAE against a self-oracle and a shifted constant") {
    using namespace s3d::testing;
    const std::vector<chem::MolecularGraph2D> mols{water(), methane(), ethanol(), benzene()};
    std::vector<double> truth;
    for (const auto& m : mols) truth.push_back(static_cast<double>(m.atom_count()));
    const PropertyOracle atoms = [](const chem::MolecularGraph2D& g) { return static_cast<double>(g.atom_count()); };
    CHECK(pipeline::property_mae(mols, truth, atoms).mae == 0.0);

    const PropertyOracle constant = [](const chem::MolecularGraph2D&) { return 4.0; };
    const std::vector<double> shifted(mols.size(), 4.0 + 1.25);
    const auto r = pipeline::property_mae(mols, shifted, constant);
    CHECK(r.mae == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(r.used == 4);

    int calls = 0;
    const PropertyOracle flaky = [&](const chem::MolecularGraph2D&) -> double {
        if (++calls == 1) throw std::runtime_error("no value");
        return 0.0;
    };
    CHECK_THROWS(pipeline::property_mae(mols, truth, flaky));  // 1 of 4 exceeds 10%
}

TEST_CASE("command-line exit codes") {
    const auto root = fresh_dir("cli");
    const auto ds = tiny_dataset();
    CHECK(run_cli("ingest " + (ds.parent_path() / "input.jsonl").string() + " -o " + (root / "ds").string()) == 0);

    {
        std::ofstream bad(root / "bad.jsonl");
        bad << "{\"atoms\": [[\"C\", 0]], \"bonds\": [], \"coords\": [[0, 0]]}\n";
    }
    CHECK(run_cli("ingest " + (root / "bad.jsonl").string() + " -o " + (root / "ds_bad").string()) == 2);
    CHECK(run_cli("evaluate " + (root / "missing.jsonl").string() + " -d " + ds.string() + " -o " +
                  (root / "ev").string()) == 3);

    const auto cfg_path = root / "cfg.json";
    std::ofstream(cfg_path) << tiny_config(ds, root / "run").dump(2);
    CHECK(run_cli("train-diffusion -c " + cfg_path.string()) == 3);
    CHECK(run_cli("generate -c " + cfg_path.string() + " -o " + (root / "g.jsonl").string()) == 3);
    CHECK(run_cli("train-lm -c " + (root / "nope.json").string()) == 3);

    auto bad_cfg = tiny_config(ds, root / "run");
    bad_cfg["lm"]["n_heads"] = 3;
    std::ofstream(root / "bad_cfg.json") << bad_cfg.dump();
    CHECK(run_cli("train-lm -c " + (root / "bad_cfg.json").string()) == 2);
}
