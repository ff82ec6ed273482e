#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "s3d/chem.hpp"

namespace s3d::chem {
namespace {

constexpr double kDegenerateAngle = 1e-6;  // radians

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Angle at the middle point, radians.
double angle_rad(const Vec3& a, const Vec3& center, const Vec3& c) {
    const Vec3 u = sub(a, center);
    const Vec3 v = sub(c, center);
    return std::atan2(norm(cross(u, v)), dot(u, v));
}

double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

std::vector<bool> aromatic_flags(const MolecularGraph2D& graph) {
    std::vector<bool> flags(graph.atom_count(), false);
    for (const auto& b : graph.bonds()) {
        if (b.order == BondOrder::Aromatic) {
            flags[static_cast<std::size_t>(b.a)] = true;
            flags[static_cast<std::size_t>(b.b)] = true;
        }
    }
    return flags;
}

std::string atom_label(const MolecularGraph2D& graph, int atom, const std::vector<bool>& aromatic) {
    std::string s(graph.atom(atom).symbol());
    if (aromatic[static_cast<std::size_t>(atom)]) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    }
    return s;
}

std::string key_for(const MolecularGraph2D& graph, std::span<const int> path, const std::vector<bool>& aromatic) {
    auto spell = [&](bool reverse) {
        std::string s;
        const std::size_t n = path.size();
        for (std::size_t k = 0; k < n; ++k) {
            const int atom = path[reverse ? n - 1 - k : k];
            if (k > 0) {
                const int prev = path[reverse ? n - k : k - 1];
                const auto order = graph.bond_between(prev, atom);
                s += order ? bond_symbol(*order) : std::string_view{"~"};
            }
            s += atom_label(graph, atom, aromatic);
        }
        return s;
    };
    return std::min(spell(false), spell(true));
}

}  // namespace

std::string path_type_key(const MolecularGraph2D& graph, std::span<const int> path) {
    return key_for(graph, path, aromatic_flags(graph));
}

GeometryMeasurements measure_geometry(const GeometricGraph& g) {
    return measure_geometry(g.graph2d, g.conformer);
}

GeometryMeasurements measure_geometry(const MolecularGraph2D& graph, const Conformer& conformer) {
    if (conformer.size() != graph.atom_count()) {
        throw ChemError("conformer/graph atom count mismatch");
    }
    if (!conformer.all_finite()) {
        throw ChemError("conformer contains non-finite coordinates");
    }
    const auto& x = conformer.coordinates;
    const auto aromatic = aromatic_flags(graph);
    const auto adj = graph.adjacency();
    GeometryMeasurements out;

    for (const auto& b : graph.bonds()) {
        const std::array<int, 2> path{b.a, b.b};
        out.bond_lengths.emplace_back(key_for(graph, path, aromatic),
                                      norm(sub(x[static_cast<std::size_t>(b.a)], x[static_cast<std::size_t>(b.b)])));
    }

    for (std::size_t j = 0; j < graph.atom_count(); ++j) {
        const auto& nb = adj[j];
        for (std::size_t p = 0; p < nb.size(); ++p) {
            for (std::size_t q = p + 1; q < nb.size(); ++q) {
                const std::array<int, 3> path{nb[p].atom, static_cast<int>(j), nb[q].atom};
                const double a = angle_rad(x[static_cast<std::size_t>(path[0])], x[j], x[static_cast<std::size_t>(path[2])]);
                out.bond_angles.emplace_back(key_for(graph, path, aromatic), rad2deg(a));
            }
        }
    }

    for (const auto& b : graph.bonds()) {
        const int j = b.a;
        const int k = b.b;
        for (const auto& ni : adj[static_cast<std::size_t>(j)]) {
            if (ni.atom == k) continue;
            for (const auto& nl : adj[static_cast<std::size_t>(k)]) {
                if (nl.atom == j || nl.atom == ni.atom) continue;
                const Vec3& pi = x[static_cast<std::size_t>(ni.atom)];
                const Vec3& pj = x[static_cast<std::size_t>(j)];
                const Vec3& pk = x[static_cast<std::size_t>(k)];
                const Vec3& pl = x[static_cast<std::size_t>(nl.atom)];
                const double a1 = angle_rad(pi, pj, pk);
                const double a2 = angle_rad(pj, pk, pl);
                auto degenerate = [](double a) {
                    return a < kDegenerateAngle || std::numbers::pi - a < kDegenerateAngle;
                };
                if (degenerate(a1) || degenerate(a2)) {
                    ++out.skipped_dihedrals;
                    continue;
                }
                const Vec3 b1 = sub(pj, pi);
                const Vec3 b2 = sub(pk, pj);
                const Vec3 b3 = sub(pl, pk);
                const Vec3 n1 = cross(b1, b2);
                const Vec3 n2 = cross(b2, b3);
                double phi = rad2deg(std::atan2(norm(b2) * dot(b1, n2), dot(n1, n2)));
                if (phi <= -180.0 + 1e-12) phi = 180.0;
                const std::array<int, 4> path{ni.atom, j, k, nl.atom};
                out.dihedral_angles.emplace_back(key_for(graph, path, aromatic), phi);
            }
        }
    }
    return out;
}

}  // namespace s3d::chem
