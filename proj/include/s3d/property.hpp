#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "s3d/chem.hpp"

namespace s3d {

class PropertyError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// z-scoring of a scalar property; std must be positive.
struct Normalizer {
    double mean = 0.0;
    double std = 1.0;

    static Normalizer fit(std::span<const double> values);
    void validate() const;
    double z(double value) const;
    double inverse(double z) const { return mean + std * z; }
};

// Cheap surrogate property oracles.
double heavy_atom_count(const chem::MolecularGraph2D& graph);
double molecular_weight(const chem::MolecularGraph2D& graph);
double polar_atom_count(const chem::MolecularGraph2D& graph);  // N + O atoms

using PropertyOracle = std::function<double(const chem::MolecularGraph2D&)>;
// "heavy_atoms", "mol_weight", "polar_atoms"; nullopt for other names.
std::optional<PropertyOracle> surrogate_oracle(std::string_view name);
std::vector<std::string> surrogate_names();

}  // namespace s3d
