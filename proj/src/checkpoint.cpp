#include "s3d/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace s3d::nn {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "s3d-checkpoint";
constexpr int kVersion = 1;

template <class T>
constexpr const char* dtype_name() {
    return sizeof(T) == 4 ? "float32" : "float64";
}

template <class U>
void put_le(std::string& out, U bits) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <class U>
U get_le(const unsigned char* p) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
    return v;
}

}  // namespace

fs::path checkpoint_data_path(const fs::path& base) { return fs::path(base.string() + ".bin"); }
fs::path checkpoint_manifest_path(const fs::path& base) { return fs::path(base.string() + ".json"); }

bool checkpoint_exists(const fs::path& base) {
    return fs::exists(checkpoint_data_path(base)) && fs::exists(checkpoint_manifest_path(base));
}

nlohmann::json read_manifest(const fs::path& base) {
    std::ifstream in(checkpoint_manifest_path(base));
    if (!in) throw CheckpointError("missing checkpoint manifest " + checkpoint_manifest_path(base).string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("unreadable checkpoint manifest " + checkpoint_manifest_path(base).string() + ": " +
                              e.what());
    }
    if (j.value("format", "") != kFormat || j.value("version", 0) != kVersion) {
        throw CheckpointError("unsupported checkpoint format in " + checkpoint_manifest_path(base).string());
    }
    return j;
}

template <class T>
void save_checkpoint(const ParameterStore<T>& store, std::string_view prefix, const fs::path& base,
                     const nlohmann::json& metadata) {
    std::string blob;
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& p : store.all()) {
        if (!p.name.starts_with(prefix)) continue;
        const std::size_t offset = blob.size();
        for (T v : p.value.data) {
            if constexpr (sizeof(T) == 4) {
                put_le(blob, std::bit_cast<std::uint32_t>(v));
            } else {
                put_le(blob, std::bit_cast<std::uint64_t>(v));
            }
        }
        tensors[p.name] = {{"shape", p.value.shape},
                           {"dtype", dtype_name<T>()},
                           {"offset", offset},
                           {"nbytes", blob.size() - offset}};
    }
    nlohmann::json manifest = {{"format", kFormat},
                               {"version", kVersion},
                               {"dtype", dtype_name<T>()},
                               {"tensors", tensors},
                               {"metadata", metadata}};
    if (base.has_parent_path()) fs::create_directories(base.parent_path());
    {
        std::ofstream out(checkpoint_data_path(base), std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write " + checkpoint_data_path(base).string());
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    }
    std::ofstream out(checkpoint_manifest_path(base), std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + checkpoint_manifest_path(base).string());
    out << manifest.dump(2) << '\n';
}

template <class T>
nlohmann::json load_checkpoint(ParameterStore<T>& store, std::string_view prefix, const fs::path& base) {
    const nlohmann::json manifest = read_manifest(base);
    std::ifstream in(checkpoint_data_path(base), std::ios::binary);
    if (!in) throw CheckpointError("missing checkpoint data " + checkpoint_data_path(base).string());
    const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto& tensors = manifest.at("tensors");
    for (auto& p : store.all()) {
        if (!p.name.starts_with(prefix)) continue;
        if (!tensors.contains(p.name)) {
            throw CheckpointError("checkpoint " + base.string() + " lacks tensor " + p.name);
        }
        const auto& t = tensors.at(p.name);
        const auto shape = t.at("shape").template get<Shape>();
        if (shape != p.value.shape) {
            throw CheckpointError("tensor " + p.name + " has shape " + shape_str(shape) + " in checkpoint, expected " +
                                  shape_str(p.value.shape));
        }
        const std::string dtype = t.at("dtype").template get<std::string>();
        const std::size_t width = dtype == "float32" ? 4 : dtype == "float64" ? 8 : 0;
        if (width == 0) throw CheckpointError("tensor " + p.name + " has unknown dtype " + dtype);
        const std::size_t offset = t.at("offset").template get<std::size_t>();
        const std::size_t nbytes = t.at("nbytes").template get<std::size_t>();
        if (nbytes != width * p.value.size() || offset + nbytes > blob.size()) {
            throw CheckpointError("tensor " + p.name + " has an inconsistent byte range");
        }
        const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            if (width == 4) {
                p.value.data[i] = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(bytes + 4 * i)));
            } else {
                p.value.data[i] = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(bytes + 8 * i)));
            }
        }
    }
    return manifest.value("metadata", nlohmann::json::object());
}

template void save_checkpoint(const ParameterStore<float>&, std::string_view, const fs::path&, const nlohmann::json&);
template void save_checkpoint(const ParameterStore<double>&, std::string_view, const fs::path&, const nlohmann::json&);
template nlohmann::json load_checkpoint(ParameterStore<float>&, std::string_view, const fs::path&);
template nlohmann::json load_checkpoint(ParameterStore<double>&, std::string_view, const fs::path&);

}  // namespace s3d::nn
