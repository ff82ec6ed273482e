#include "s3d/config.hpp"

#include <cstdlib>
#include <fstream>

#include "s3d/hash.hpp"
#include "s3d/property.hpp"
#include "s3d/selfies.hpp"

#ifndef S3D_DATA_DIR
#define S3D_DATA_DIR "data"
#endif

namespace s3d::config {

namespace fs = std::filesystem;
using nlohmann::json;

nn::LrSchedule OptimConfig::schedule(std::int64_t total_steps) const {
    nn::LrSchedule s;
    s.init_lr = init_lr;
    s.min_lr = min_lr;
    s.warmup_lr = warmup_lr;
    s.warmup_steps = warmup_steps;
    s.total_steps = std::max<std::int64_t>(total_steps, warmup_steps + 1);
    return s;
}

nn::AdamWConfig OptimConfig::adamw() const {
    nn::AdamWConfig c;
    c.weight_decay = weight_decay;
    return c;
}

namespace {

json optim_json(const OptimConfig& o) {
    return {{"optimizer", o.optimizer},       {"init lr", o.init_lr},           {"min lr", o.min_lr},
            {"warmup lr", o.warmup_lr},       {"warmup steps", o.warmup_steps}, {"weight decay", o.weight_decay},
            {"epochs", o.epochs},             {"batch size", o.batch_size},     {"grad clip", o.grad_clip}};
}

OptimConfig optim_from(const json& j) {
    OptimConfig d, o;
    o.optimizer = j.value("optimizer", d.optimizer);
    o.init_lr = j.value("init lr", d.init_lr);
    o.min_lr = j.value("min lr", d.min_lr);
    o.warmup_lr = j.value("warmup lr", d.warmup_lr);
    o.warmup_steps = j.value("warmup steps", d.warmup_steps);
    o.weight_decay = j.value("weight decay", d.weight_decay);
    o.epochs = j.value("epochs", d.epochs);
    o.batch_size = j.value("batch size", d.batch_size);
    o.grad_clip = j.value("grad clip", d.grad_clip);
    return o;
}

void check_optim(const OptimConfig& o, const std::string& where) {
    if (o.optimizer != "AdamW") throw ConfigError(where + ": only the AdamW optimizer is supported");
    if (!(o.init_lr > 0) || o.min_lr < 0 || o.warmup_lr < 0 || o.warmup_steps < 0) {
        throw ConfigError(where + ": learning rates must be non-negative and init lr positive");
    }
    if (o.batch_size == 0) throw ConfigError(where + ": batch size must be positive");
}

}  // namespace

void RunConfig::finalize() {
    const double total = split[0] + split[1] + split[2];
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
    lm.vocab_size = selfies::Vocabulary::builtin().size();
    lm.conditional = property.has_value();
    diffusion.conditional = property.has_value();
    if (property && !surrogate_oracle(*property)) {
        throw ConfigError("unknown property '" + *property + "'");
    }
    bridge.input_dim = lm.hidden_dim;
    bridge.cond_dim = diffusion.denoiser.cond_dim;
    if (sampling_steps < 1 || sampling_steps > diffusion.T) {
        throw ConfigError("sampling steps must lie in [1, T]");
    }
    try {
        lm.validate();
        bridge.validate();
        diffusion.denoiser.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    check_optim(lm_optim, "lm");
    check_optim(diffusion_optim, "diffusion");
}

json to_json(const RunConfig& c) {
    json lm_j = c.lm;
    lm_j.update(optim_json(c.lm_optim));
    json diff_j = c.diffusion.denoiser;
    diff_j.update(optim_json(c.diffusion_optim));
    diff_j["schedule"] = diffusion::to_string(c.diffusion.schedule);
    diff_j["T"] = c.diffusion.T;
    diff_j["center"] = c.diffusion.center;
    diff_j["property hidden"] = c.diffusion.property_hidden;
    diff_j["sampling steps"] = c.sampling_steps;
    diff_j["validation draws"] = c.validation_draws;
    return {{"seed", c.seed},
            {"data", {{"dataset", c.dataset.string()}, {"split", c.split}}},
            {"output", c.output.string()},
            {"lm", lm_j},
            {"bridge", c.bridge},
            {"diffusion", diff_j},
            {"ablation", {{"zero_bridge", c.zero_bridge}, {"finetune_lm", c.finetune_lm}}},
            {"property", c.property ? json(*c.property) : json(nullptr)}};
}

fs::path data_root() {
    if (const char* env = std::getenv("S3D_DATA_ROOT"); env && *env) return env;
    return S3D_DATA_DIR;
}

fs::path resolve_data_path(const std::string& raw, const fs::path& base_dir) {
    std::string s = raw;
    const std::string token = "${S3D_DATA_ROOT}";
    if (const auto pos = s.find(token); pos != std::string::npos) s.replace(pos, token.size(), data_root().string());
    fs::path p(s);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return p;
}

RunConfig from_json(const json& j, const fs::path& base_dir) {
    RunConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        if (j.contains("data")) {
            const auto& d = j.at("data");
            if (d.contains("dataset")) c.dataset = resolve_data_path(d.at("dataset").get<std::string>(), base_dir);
            if (d.contains("split")) c.split = d.at("split").get<std::array<double, 3>>();
        }
        if (j.contains("output")) c.output = resolve_data_path(j.at("output").get<std::string>(), base_dir);
        if (j.contains("lm")) {
            c.lm = j.at("lm").get<lm::LmConfig>();
            c.lm_optim = optim_from(j.at("lm"));
        }
        if (j.contains("bridge")) c.bridge = j.at("bridge").get<bridge::BridgeConfig>();
        if (j.contains("diffusion")) {
            const auto& d = j.at("diffusion");
            c.diffusion.denoiser = d.get<diffusion::DenoiserConfig>();
            c.diffusion_optim = optim_from(d);
            c.diffusion.schedule = diffusion::schedule_kind_from_string(d.value("schedule", std::string("cosine")));
            c.diffusion.T = d.value("T", c.diffusion.T);
            c.diffusion.center = d.value("center", c.diffusion.center);
            c.diffusion.property_hidden = d.value("property hidden", c.diffusion.property_hidden);
            c.sampling_steps = d.value("sampling steps", c.sampling_steps);
            c.validation_draws = d.value("validation draws", c.validation_draws);
        }
        if (j.contains("ablation")) {
            c.zero_bridge = j.at("ablation").value("zero_bridge", false);
            c.finetune_lm = j.at("ablation").value("finetune_lm", false);
        }
        if (j.contains("property") && !j.at("property").is_null()) c.property = j.at("property").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const diffusion::DiffusionError& e) {
        throw ConfigError(e.what());
    }
    c.finalize();
    return c;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

void save_config(const RunConfig& c, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << to_json(c).dump(2) << '\n';
}

std::string RunConfig::hash() const { return to_hex(fnv1a64(to_json(*this).dump())); }

}  // namespace s3d::config
