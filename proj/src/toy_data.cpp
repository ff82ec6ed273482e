#include "s3d/toy_data.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <set>

#include "s3d/property.hpp"
#include "s3d/selfies.hpp"

namespace s3d::toy {

using chem::Atom;
using chem::BondOrder;
using chem::MolecularGraph2D;

namespace {

int pick_element(Rng& rng) {
    static const char* symbols[] = {"C", "N", "O", "F"};
    static const double weights[] = {0.6, 0.15, 0.15, 0.1};
    double u = rng.uniform();
    for (int i = 0; i < 4; ++i) {
        if (u < weights[i]) return chem::element_index(symbols[i]);
        u -= weights[i];
    }
    return chem::element_index("C");
}

int spare_half_units(const MolecularGraph2D& g, int atom) {
    return 2 * chem::max_valence(g.atom(atom)) - g.valence_half_units()[static_cast<std::size_t>(atom)];
}

std::vector<std::vector<int>> distances(const MolecularGraph2D& g) {
    const auto adj = g.adjacency();
    const std::size_t n = g.atom_count();
    std::vector<std::vector<int>> d(n, std::vector<int>(n, -1));
    for (std::size_t s = 0; s < n; ++s) {
        std::deque<std::size_t> q{s};
        d[s][s] = 0;
        while (!q.empty()) {
            const auto u = q.front();
            q.pop_front();
            for (const auto& nb : adj[u]) {
                const auto v = static_cast<std::size_t>(nb.atom);
                if (d[s][v] < 0) {
                    d[s][v] = d[s][u] + 1;
                    q.push_back(v);
                }
            }
        }
    }
    return d;
}

// Rebuilds g with the given bond orders (bonds in the same order as g.bonds()).
MolecularGraph2D with_orders(const MolecularGraph2D& g, const std::vector<BondOrder>& orders) {
    MolecularGraph2D out;
    for (const auto& a : g.atoms()) out.add_atom(a);
    for (std::size_t i = 0; i < g.bonds().size(); ++i) out.add_bond(g.bonds()[i].a, g.bonds()[i].b, orders[i]);
    return out;
}

MolecularGraph2D heavy_skeleton(Rng& rng, const MoleculeOptions& o) {
    const std::size_t span = o.max_heavy - o.min_heavy + 1;
    const std::size_t n = o.min_heavy + rng.below(span);
    MolecularGraph2D g;
    bool aromatic = false;
    if (n >= 6 && rng.uniform() < o.aromatic_fraction) {
        aromatic = true;
        const bool pyridine = rng.uniform() < 0.3;
        for (int i = 0; i < 6; ++i) g.add_atom(Atom::of(pyridine && i == 0 ? "N" : "C"));
        for (int i = 0; i < 6; ++i) g.add_bond(i, (i + 1) % 6, BondOrder::Aromatic);
    } else {
        g.add_atom({pick_element(rng), 0});
    }
    while (g.atom_count() < n) {
        const int element = pick_element(rng);
        std::vector<int> hosts;
        for (int i = 0; i < static_cast<int>(g.atom_count()); ++i)
            if (spare_half_units(g, i) >= 2) hosts.push_back(i);
        if (hosts.empty()) break;
        const int host = hosts[rng.below(hosts.size())];
        const int a = g.add_atom({element, 0});
        g.add_bond(host, a, BondOrder::Single);
    }
    bool ring = aromatic;
    if (!aromatic && g.atom_count() >= 5 && rng.uniform() < o.ring_fraction) {
        const auto d = distances(g);
        std::vector<std::pair<int, int>> cands;
        for (int i = 0; i < static_cast<int>(g.atom_count()); ++i)
            for (int j = i + 1; j < static_cast<int>(g.atom_count()); ++j) {
                const int dij = d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                if ((dij == 4 || dij == 5) && spare_half_units(g, i) >= 2 && spare_half_units(g, j) >= 2) {
                    cands.emplace_back(i, j);
                }
            }
        if (!cands.empty()) {
            const auto [i, j] = cands[rng.below(cands.size())];
            g.add_bond(i, j, BondOrder::Single);
            ring = true;
        }
    }
    std::vector<BondOrder> orders;
    for (const auto& b : g.bonds()) orders.push_back(b.order);
    for (std::size_t k = 0; k < orders.size(); ++k) {
        if (orders[k] != BondOrder::Single) continue;
        const auto cur = with_orders(g, orders);
        const int a = g.bonds()[k].a, b = g.bonds()[k].b;
        const int sa = spare_half_units(cur, a), sb = spare_half_units(cur, b);
        const double u = rng.uniform();
        if (!ring && u < o.triple_bond_rate && sa >= 4 && sb >= 4) {
            orders[k] = BondOrder::Triple;
        } else if (u < o.triple_bond_rate + o.double_bond_rate && sa >= 2 && sb >= 2) {
            orders[k] = BondOrder::Double;
        }
    }
    return with_orders(g, orders);
}

MolecularGraph2D add_hydrogens(const MolecularGraph2D& heavy) {
    MolecularGraph2D g = heavy;
    const auto valence = heavy.valence_half_units();
    const int h = chem::element_index("H");
    for (int i = 0; i < static_cast<int>(heavy.atom_count()); ++i) {
        const int nh = selfies::hydrogen_fill(heavy.atom(i), valence[static_cast<std::size_t>(i)]);
        for (int k = 0; k < nh; ++k) g.add_bond(i, g.add_atom({h, 0}), BondOrder::Single);
    }
    return g;
}

}  // namespace

MolecularGraph2D random_molecule(Rng& rng, const MoleculeOptions& options) {
    if (options.min_heavy < 1 || options.max_heavy < options.min_heavy) {
        throw chem::ChemError("invalid heavy-atom range for toy molecules");
    }
    for (;;) {
        const auto g = add_hydrogens(heavy_skeleton(rng, options));
        if (g.heavy_atom_count() < options.min_heavy) continue;
        if (!chem::is_valid_and_connected(g) || !chem::molecule_stable(g)) continue;
        try {
            const auto back = selfies::decode(selfies::encode(g));
            if (chem::canonical_hash(back) == chem::canonical_hash(g)) return g;
        } catch (const selfies::SelfiesError&) {
        }
    }
}

double ideal_bond_length(const Atom& a, const Atom& b, BondOrder order) {
    const double single = a.info().covalent_radius + b.info().covalent_radius;
    switch (order) {
        case BondOrder::Single: return single;
        case BondOrder::Aromatic: return single * 0.92;
        case BondOrder::Double: return single * 0.875;
        case BondOrder::Triple: return single * 0.79;
    }
    return single;
}

namespace {

struct Restraint {
    int i, j;
    double target;
    double weight;
    bool repulsive_only;
};

double hybrid_angle(const MolecularGraph2D& g, const std::vector<std::vector<chem::Neighbor>>& adj, int center) {
    int doubles = 0;
    bool sp2 = false;
    for (const auto& nb : adj[static_cast<std::size_t>(center)]) {
        if (nb.order == BondOrder::Triple) return 180.0;
        if (nb.order == BondOrder::Double) ++doubles;
        if (nb.order == BondOrder::Double || nb.order == BondOrder::Aromatic) sp2 = true;
    }
    if (doubles >= 2) return 180.0;
    // Lone-pair rich centers (O, N) stay near tetrahedral unless conjugated.
    (void)g;
    return sp2 ? 120.0 : 109.47;
}

std::vector<Restraint> restraints(const MolecularGraph2D& g) {
    const auto adj = g.adjacency();
    const auto d = distances(g);
    const auto n = static_cast<int>(g.atom_count());
    std::vector<Restraint> out;
    std::vector<std::vector<double>> bond_len(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0));
    for (const auto& b : g.bonds()) {
        const double l = ideal_bond_length(g.atom(b.a), g.atom(b.b), b.order);
        bond_len[static_cast<std::size_t>(b.a)][static_cast<std::size_t>(b.b)] = l;
        bond_len[static_cast<std::size_t>(b.b)][static_cast<std::size_t>(b.a)] = l;
        out.push_back({b.a, b.b, l, 10.0, false});
    }
    for (int c = 0; c < n; ++c) {
        const auto& nbs = adj[static_cast<std::size_t>(c)];
        const double theta = hybrid_angle(g, adj, c) * std::numbers::pi / 180.0;
        for (std::size_t x = 0; x < nbs.size(); ++x)
            for (std::size_t y = x + 1; y < nbs.size(); ++y) {
                const int i = nbs[x].atom, j = nbs[y].atom;
                const double a = bond_len[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
                const double b = bond_len[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
                out.push_back({i, j, std::sqrt(a * a + b * b - 2 * a * b * std::cos(theta)), 4.0, false});
            }
    }
    // Flat aromatic rings: para atoms sit two bond lengths apart, which with the
    // 1-2 and 1-3 targets pins a planar hexagon.
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const auto du = static_cast<std::size_t>(i), dv = static_cast<std::size_t>(j);
            if (d[du][dv] == 3) {
                bool aromatic_ring = true;
                for (int k : {i, j}) {
                    bool any = false;
                    for (const auto& nb : adj[static_cast<std::size_t>(k)]) any |= nb.order == BondOrder::Aromatic;
                    aromatic_ring &= any;
                }
                if (aromatic_ring) {
                    // Count aromatic paths of length 3 between i and j: para pairs have two.
                    int paths = 0;
                    for (const auto& a : adj[du]) {
                        if (a.order != BondOrder::Aromatic) continue;
                        for (const auto& b : adj[static_cast<std::size_t>(a.atom)]) {
                            if (b.order != BondOrder::Aromatic || b.atom == i) continue;
                            const auto e = g.bond_between(b.atom, j);
                            if (e && *e == BondOrder::Aromatic) ++paths;
                        }
                    }
                    if (paths >= 2) {
                        out.push_back({i, j, 2.0 * ideal_bond_length(g.atom(i), g.atom(i), BondOrder::Aromatic), 4.0,
                                       false});
                        continue;
                    }
                }
            }
            if (d[du][dv] >= 3 || d[du][dv] < 0) {
                const bool hi = g.atom(i).is_hydrogen(), hj = g.atom(j).is_hydrogen();
                double dmin = d[du][dv] == 3 ? 2.5 : 2.9;
                if (hi || hj) dmin -= 0.3;
                if (hi && hj) dmin -= 0.2;
                out.push_back({i, j, dmin, 1.0, true});
            }
        }
    return out;
}

}  // namespace

chem::Conformer embed_conformer(const MolecularGraph2D& graph, Rng& rng, const EmbedOptions& options) {
    const std::size_t n = graph.atom_count();
    chem::Conformer conf;
    conf.coordinates.resize(n);
    const double box = 1.2 * std::cbrt(static_cast<double>(n)) + 0.5;
    for (auto& p : conf.coordinates)
        for (double& v : p) v = box * (2.0 * rng.uniform() - 1.0);
    const auto rs = restraints(graph);
    std::vector<chem::Vec3> grad(n), vel(n, chem::Vec3{0, 0, 0});
    // Gradient descent with momentum; the step shrinks over the schedule.
    for (std::size_t it = 0; it < options.iterations; ++it) {
        for (auto& gr : grad) gr = {0, 0, 0};
        for (const auto& r : rs) {
            auto& p = conf.coordinates[static_cast<std::size_t>(r.i)];
            auto& q = conf.coordinates[static_cast<std::size_t>(r.j)];
            const chem::Vec3 diff{p[0] - q[0], p[1] - q[1], p[2] - q[2]};
            const double dist = std::max(1e-6, std::sqrt(diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]));
            const double dev = dist - r.target;
            if (r.repulsive_only && dev >= 0) continue;
            const double f = 2.0 * r.weight * dev / dist;
            for (int k = 0; k < 3; ++k) {
                grad[static_cast<std::size_t>(r.i)][k] += f * diff[k];
                grad[static_cast<std::size_t>(r.j)][k] -= f * diff[k];
            }
        }
        const double frac = static_cast<double>(it) / static_cast<double>(options.iterations);
        const double step = 0.01 * (1.0 - 0.9 * frac);
        for (std::size_t a = 0; a < n; ++a)
            for (int k = 0; k < 3; ++k) {
                vel[a][k] = 0.8 * vel[a][k] - step * grad[a][k];
                conf.coordinates[a][k] += vel[a][k];
            }
    }
    for (auto& p : conf.coordinates)
        for (double& v : p) v += options.jitter * rng.normal();
    chem::Vec3 m{0, 0, 0};
    for (const auto& p : conf.coordinates)
        for (int k = 0; k < 3; ++k) m[k] += p[k] / static_cast<double>(n);
    for (auto& p : conf.coordinates)
        for (int k = 0; k < 3; ++k) p[k] -= m[k];
    return conf;
}

std::vector<data::DatasetRecord> make_corpus(std::size_t n_molecules, std::size_t conformers, std::uint64_t seed,
                                             const MoleculeOptions& molecule, const EmbedOptions& embed) {
    Rng rng(seed);
    Rng geo = rng.fork(7);
    std::set<std::string> seen;
    std::vector<data::DatasetRecord> out;
    std::size_t m = 0;
    std::size_t attempts = 0;
    while (m < n_molecules) {
        if (++attempts > 200 * n_molecules + 1000) {
            throw chem::ChemError("could not find " + std::to_string(n_molecules) + " distinct toy molecules");
        }
        auto g = random_molecule(rng, molecule);
        if (!seen.insert(chem::canonical_hash(g)).second) continue;
        const std::string text = selfies::encode(g).str();
        for (std::size_t c = 0; c < conformers; ++c) {
            data::DatasetRecord r;
            r.id = "m" + std::to_string(m) + "_c" + std::to_string(c);
            r.selfies = text;
            r.graph = g;
            r.conformer = embed_conformer(g, geo, embed);
            for (const auto& name : surrogate_names()) r.properties[name] = (*surrogate_oracle(name))(g);
            out.push_back(std::move(r));
        }
        ++m;
    }
    return out;
}

}  // namespace s3d::toy
