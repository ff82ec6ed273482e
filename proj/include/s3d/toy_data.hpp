#pragma once

#include <cstdint>
#include <vector>

#include "s3d/chem.hpp"
#include "s3d/dataset.hpp"
#include "s3d/rng.hpp"

namespace s3d::toy {

struct MoleculeOptions {
    std::size_t min_heavy = 1;
    std::size_t max_heavy = 9;
    double aromatic_fraction = 0.15;  // benzene / pyridine core when >= 6 heavy atoms
    double ring_fraction = 0.2;       // one aliphatic 5- or 6-ring closure
    double double_bond_rate = 0.2;
    double triple_bond_rate = 0.05;
};

// Hydrogen-complete random molecule over C, N, O, F that round-trips
// through the SELFIES writer. Retries internally until one does.
chem::MolecularGraph2D random_molecule(Rng& rng, const MoleculeOptions& options = {});

struct EmbedOptions {
    std::size_t iterations = 2500;
    double jitter = 0.03;  // Angstrom, added after relaxation
};

// Ideal bond length from covalent radii, shortened for multiple bonds.
double ideal_bond_length(const chem::Atom& a, const chem::Atom& b, chem::BondOrder order);

// Distance-geometry style relaxation from a random start: bond and 1-3
// targets, flat aromatic rings and soft repulsion between distant atoms.
// The result is centered.
chem::Conformer embed_conformer(const chem::MolecularGraph2D& graph, Rng& rng, const EmbedOptions& options = {});

// n distinct molecules with `conformers` records each; ids are m<k>_c<j>.
std::vector<data::DatasetRecord> make_corpus(std::size_t n_molecules, std::size_t conformers, std::uint64_t seed,
                                             const MoleculeOptions& molecule = {}, const EmbedOptions& embed = {});

}  // namespace s3d::toy
