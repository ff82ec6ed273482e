#pragma once

// Hand-built molecules and a brute-force isomorphism check used as oracles.

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "s3d/chem.hpp"
#include "s3d/selfies.hpp"

namespace s3d::testing {

using chem::Atom;
using chem::BondOrder;
using chem::MolecularGraph2D;

// Heavy atoms and bonds, then hydrogens up to the smallest fitting valence.
inline MolecularGraph2D build(const std::vector<std::string>& heavy,
                              const std::vector<std::tuple<int, int, BondOrder>>& bonds, bool fill = true) {
    MolecularGraph2D g;
    for (const auto& s : heavy) g.add_atom(Atom::of(s));
    for (auto [a, b, o] : bonds) g.add_bond(a, b, o);
    if (!fill) return g;
    const auto val = g.valence_half_units();
    for (std::size_t i = 0; i < heavy.size(); ++i) {
        const int h = selfies::hydrogen_fill(g.atom(static_cast<int>(i)), val[i]);
        for (int k = 0; k < h; ++k) g.add_bond(static_cast<int>(i), g.add_atom(Atom::of("H")), BondOrder::Single);
    }
    return g;
}

inline MolecularGraph2D water() { return build({"O"}, {}); }
inline MolecularGraph2D methane() { return build({"C"}, {}); }
inline MolecularGraph2D ethane() { return build({"C", "C"}, {{0, 1, BondOrder::Single}}); }
inline MolecularGraph2D ethanol() {
    return build({"C", "C", "O"}, {{0, 1, BondOrder::Single}, {1, 2, BondOrder::Single}});
}
inline MolecularGraph2D dimethyl_ether() {
    return build({"C", "O", "C"}, {{0, 1, BondOrder::Single}, {1, 2, BondOrder::Single}});
}
inline MolecularGraph2D benzene() {
    std::vector<std::tuple<int, int, BondOrder>> b;
    for (int i = 0; i < 6; ++i) b.emplace_back(i, (i + 1) % 6, BondOrder::Aromatic);
    return build({"C", "C", "C", "C", "C", "C"}, b);
}
inline MolecularGraph2D acetonitrile() {
    return build({"C", "C", "N"}, {{0, 1, BondOrder::Single}, {1, 2, BondOrder::Triple}});
}
inline MolecularGraph2D formaldehyde() { return build({"C", "O"}, {{0, 1, BondOrder::Double}}); }

// Backtracking search for an atom bijection preserving element, charge and
// bond orders. Exponential; fine for graphs under a dozen atoms.
inline bool isomorphic(const MolecularGraph2D& a, const MolecularGraph2D& b) {
    const std::size_t n = a.atom_count();
    if (n != b.atom_count() || a.bond_count() != b.bond_count()) return false;
    const auto da = a.adjacency(), db = b.adjacency();
    std::vector<int> map(n, -1), used(n, 0);
    std::function<bool(std::size_t)> go = [&](std::size_t i) {
        if (i == n) return true;
        for (std::size_t j = 0; j < n; ++j) {
            if (used[j] || !(a.atoms()[i] == b.atoms()[j]) || da[i].size() != db[j].size()) continue;
            bool ok = true;
            for (std::size_t k = 0; k < i && ok; ++k) {
                const auto ea = a.bond_between(static_cast<int>(i), static_cast<int>(k));
                const auto eb = b.bond_between(static_cast<int>(j), map[k]);
                ok = ea == eb;
            }
            if (!ok) continue;
            map[i] = static_cast<int>(j);
            used[j] = 1;
            if (go(i + 1)) return true;
            used[j] = 0;
        }
        map[i] = -1;
        return false;
    };
    return go(0);
}

}  // namespace s3d::testing
