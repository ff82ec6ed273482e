#pragma once

#include <filesystem>
#include <string_view>

#include "json.hpp"
#include "s3d/autograd.hpp"

namespace s3d::nn {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A checkpoint is `<base>.bin` (tensors back to back, little-endian) plus the
// manifest `<base>.json` mapping each name to shape, dtype, byte offset and size.
std::filesystem::path checkpoint_data_path(const std::filesystem::path& base);
std::filesystem::path checkpoint_manifest_path(const std::filesystem::path& base);
bool checkpoint_exists(const std::filesystem::path& base);

// Saves every parameter whose name starts with prefix.
template <class T>
void save_checkpoint(const ParameterStore<T>& store, std::string_view prefix, const std::filesystem::path& base,
                     const nlohmann::json& metadata);

// Loads the prefixed parameters, converting dtype when needed. Every prefixed
// parameter in the store must be present with a matching shape. Returns the
// manifest metadata.
template <class T>
nlohmann::json load_checkpoint(ParameterStore<T>& store, std::string_view prefix, const std::filesystem::path& base);

nlohmann::json read_manifest(const std::filesystem::path& base);

}  // namespace s3d::nn
