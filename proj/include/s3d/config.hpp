#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "s3d/bridge.hpp"
#include "s3d/diffusion.hpp"
#include "s3d/lm.hpp"
#include "s3d/optim.hpp"

namespace s3d::config {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OptimConfig {
    std::string optimizer = "AdamW";
    double init_lr = 1e-3;
    double min_lr = 1e-4;
    double warmup_lr = 1e-5;
    std::int64_t warmup_steps = 20;
    double weight_decay = 0.0;
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    double grad_clip = 1.0;

    nn::LrSchedule schedule(std::int64_t total_steps) const;
    nn::AdamWConfig adamw() const;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path dataset;  // ingested dataset directory
    std::filesystem::path output;   // run directory for checkpoints and logs
    std::array<double, 3> split{0.8, 0.1, 0.1};

    lm::LmConfig lm;
    OptimConfig lm_optim;

    bridge::BridgeConfig bridge;
    diffusion::DiffusionConfig diffusion;
    OptimConfig diffusion_optim;
    int sampling_steps = 100;
    std::size_t validation_draws = 4;  // fixed (t, eps, rotation) draws per validation record

    bool zero_bridge = false;
    bool finetune_lm = false;
    std::optional<std::string> property;  // surrogate name for conditional runs

    // Derived fields are filled in (vocab size, bridge input/cond widths,
    // conditional flags) and every invariant is checked.
    void finalize();
    // FNV-1a of the canonical JSON dump, 16 hex digits.
    std::string hash() const;
};

nlohmann::json to_json(const RunConfig& c);
// Relative paths resolve against base_dir; "${S3D_DATA_ROOT}" expands from the environment.
RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& c, const std::filesystem::path& path);

// Expands ${S3D_DATA_ROOT} (or the compiled-in data directory when unset).
std::filesystem::path resolve_data_path(const std::string& raw, const std::filesystem::path& base_dir);
std::filesystem::path data_root();

}  // namespace s3d::config
