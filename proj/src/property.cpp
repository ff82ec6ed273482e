#include "s3d/property.hpp"

#include <cmath>

namespace s3d {

Normalizer Normalizer::fit(std::span<const double> values) {
    if (values.empty()) throw PropertyError("cannot fit a normalizer to no values");
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    return {mean, std::sqrt(var)};
}

void Normalizer::validate() const {
    if (!(std > 0.0) || !std::isfinite(std) || !std::isfinite(mean)) {
        throw PropertyError("property normalizer needs a positive finite std (got " + std::to_string(std) + ")");
    }
}

double Normalizer::z(double value) const {
    validate();
    return (value - mean) / std;
}

double heavy_atom_count(const chem::MolecularGraph2D& graph) {
    return static_cast<double>(graph.heavy_atom_count());
}

double molecular_weight(const chem::MolecularGraph2D& graph) {
    double w = 0;
    for (const auto& a : graph.atoms()) w += a.info().mass;
    return w;
}

double polar_atom_count(const chem::MolecularGraph2D& graph) {
    double n = 0;
    for (const auto& a : graph.atoms()) {
        if (a.symbol() == "N" || a.symbol() == "O") n += 1;
    }
    return n;
}

std::optional<PropertyOracle> surrogate_oracle(std::string_view name) {
    if (name == "heavy_atoms") return PropertyOracle(heavy_atom_count);
    if (name == "mol_weight") return PropertyOracle(molecular_weight);
    if (name == "polar_atoms") return PropertyOracle(polar_atom_count);
    return std::nullopt;
}

std::vector<std::string> surrogate_names() { return {"heavy_atoms", "mol_weight", "polar_atoms"}; }

}  // namespace s3d
