#include "s3d/chem.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "s3d/hash.hpp"

namespace s3d::chem {
namespace {

// QM9 + GEOM-DRUGS element set. Covalent radii from Cordero et al. (2008).
const std::vector<Element>& table() {
    static const std::vector<Element> kTable = {
        {"H", 1, {1}, 0.31, 1.008},       {"B", 5, {3}, 0.84, 10.81},
        {"C", 6, {4}, 0.76, 12.011},      {"N", 7, {3}, 0.71, 14.007},
        {"O", 8, {2}, 0.66, 15.999},      {"F", 9, {1}, 0.57, 18.998},
        {"Al", 13, {3}, 1.21, 26.982},    {"Si", 14, {4}, 1.11, 28.085},
        {"P", 15, {3, 5}, 1.07, 30.974},  {"S", 16, {2, 4, 6}, 1.05, 32.06},
        {"Cl", 17, {1}, 1.02, 35.45},     {"As", 33, {3, 5}, 1.19, 74.922},
        {"Br", 35, {1}, 1.20, 79.904},    {"I", 53, {1}, 1.39, 126.904},
        {"Hg", 80, {2}, 1.32, 200.59},    {"Bi", 83, {3, 5}, 1.48, 208.98},
    };
    return kTable;
}

int group_of(int atomic_number) {
    switch (atomic_number) {
        case 5: case 13: return 13;
        case 6: case 14: return 14;
        case 7: case 15: case 33: case 83: return 15;
        case 8: case 16: return 16;
        default: return 0;
    }
}

}  // namespace

std::span<const Element> element_table() { return table(); }
std::size_t element_count() { return table().size(); }

std::optional<int> find_element(std::string_view symbol) {
    const auto& t = table();
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i].symbol == symbol) {
            return static_cast<int>(i);
        }
    }
    return std::nullopt;
}

int element_index(std::string_view symbol) {
    if (auto idx = find_element(symbol)) {
        return *idx;
    }
    throw ChemError("unknown element '" + std::string(symbol) + "'");
}

const Element& element_at(int index) {
    if (index < 0 || static_cast<std::size_t>(index) >= table().size()) {
        throw ChemError("element index " + std::to_string(index) + " out of range");
    }
    return table()[static_cast<std::size_t>(index)];
}

std::string_view bond_symbol(BondOrder order) noexcept {
    switch (order) {
        case BondOrder::Single: return "-";
        case BondOrder::Double: return "=";
        case BondOrder::Triple: return "#";
        case BondOrder::Aromatic: return ":";
    }
    return "?";
}

BondOrder bond_order_from_real(double value) {
    if (value == 1.0) return BondOrder::Single;
    if (value == 2.0) return BondOrder::Double;
    if (value == 3.0) return BondOrder::Triple;
    if (value == 1.5) return BondOrder::Aromatic;
    throw ChemError("unsupported bond order " + std::to_string(value));
}

std::vector<int> allowed_valences(const Atom& atom) {
    const Element& e = atom.info();
    const int q = atom.formal_charge;
    int shift = 0;
    switch (group_of(e.atomic_number)) {
        case 15:
        case 16: shift = q; break;
        case 13: shift = -q; break;
        default: shift = -std::abs(q); break;
    }
    std::vector<int> out;
    for (int v : e.allowed_valences) {
        if (v + shift >= 0) {
            out.push_back(v + shift);
        }
    }
    return out;
}

int max_valence(const Atom& atom) {
    const auto v = allowed_valences(atom);
    return v.empty() ? 0 : *std::max_element(v.begin(), v.end());
}

// ---- MolecularGraph2D ---------------------------------------------------------

int MolecularGraph2D::add_atom(Atom atom) {
    (void)element_at(atom.element);
    atoms_.push_back(atom);
    return static_cast<int>(atoms_.size() - 1);
}

void MolecularGraph2D::add_bond(int a, int b, BondOrder order) {
    const int n = static_cast<int>(atoms_.size());
    if (a < 0 || b < 0 || a >= n || b >= n) {
        throw ChemError("bond (" + std::to_string(a) + ", " + std::to_string(b) +
                        ") references a missing atom; atom count " + std::to_string(n));
    }
    if (a == b) {
        throw ChemError("self-loop on atom " + std::to_string(a));
    }
    if (bond_between(a, b)) {
        throw ChemError("duplicate bond between " + std::to_string(a) + " and " + std::to_string(b));
    }
    bonds_.push_back({std::min(a, b), std::max(a, b), order});
}

std::optional<BondOrder> MolecularGraph2D::bond_between(int a, int b) const {
    for (const auto& bond : bonds_) {
        if ((bond.a == a && bond.b == b) || (bond.a == b && bond.b == a)) {
            return bond.order;
        }
    }
    return std::nullopt;
}

std::vector<std::vector<Neighbor>> MolecularGraph2D::adjacency() const {
    std::vector<std::vector<Neighbor>> adj(atoms_.size());
    for (const auto& bond : bonds_) {
        adj[static_cast<std::size_t>(bond.a)].push_back({bond.b, bond.order});
        adj[static_cast<std::size_t>(bond.b)].push_back({bond.a, bond.order});
    }
    return adj;
}

std::vector<int> MolecularGraph2D::valence_half_units() const {
    std::vector<int> v(atoms_.size(), 0);
    for (const auto& bond : bonds_) {
        v[static_cast<std::size_t>(bond.a)] += half_units(bond.order);
        v[static_cast<std::size_t>(bond.b)] += half_units(bond.order);
    }
    return v;
}

std::size_t MolecularGraph2D::component_count() const {
    std::vector<int> parent(atoms_.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    std::size_t components = atoms_.size();
    for (const auto& bond : bonds_) {
        const int ra = find(bond.a);
        const int rb = find(bond.b);
        if (ra != rb) {
            parent[static_cast<std::size_t>(ra)] = rb;
            --components;
        }
    }
    return components;
}

std::size_t MolecularGraph2D::heavy_atom_count() const {
    return static_cast<std::size_t>(
        std::count_if(atoms_.begin(), atoms_.end(), [](const Atom& a) { return !a.is_hydrogen(); }));
}

MolecularGraph2D MolecularGraph2D::permuted(std::span<const int> order) const {
    if (order.size() != atoms_.size()) {
        throw ChemError("permutation size mismatch");
    }
    std::vector<int> new_index(atoms_.size(), -1);
    MolecularGraph2D out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto old = static_cast<std::size_t>(order[i]);
        if (old >= atoms_.size() || new_index[old] != -1) {
            throw ChemError("not a permutation");
        }
        new_index[old] = static_cast<int>(i);
        out.add_atom(atoms_[old]);
    }
    for (const auto& bond : bonds_) {
        out.add_bond(new_index[static_cast<std::size_t>(bond.a)], new_index[static_cast<std::size_t>(bond.b)],
                     bond.order);
    }
    return out;
}

void MolecularGraph2D::validate() const {
    for (const auto& atom : atoms_) {
        (void)element_at(atom.element);
    }
    std::vector<std::pair<int, int>> seen;
    for (const auto& bond : bonds_) {
        if (bond.a < 0 || bond.b < 0 || static_cast<std::size_t>(bond.a) >= atoms_.size() ||
            static_cast<std::size_t>(bond.b) >= atoms_.size()) {
            throw ChemError("bond index out of range");
        }
        if (bond.a == bond.b) {
            throw ChemError("self-loop on atom " + std::to_string(bond.a));
        }
        seen.emplace_back(std::min(bond.a, bond.b), std::max(bond.a, bond.b));
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
        throw ChemError("duplicate bond");
    }
}

bool Conformer::all_finite() const {
    return std::all_of(coordinates.begin(), coordinates.end(), [](const Vec3& p) {
        return std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]);
    });
}

// ---- features -----------------------------------------------------------------

std::size_t atom_feature_dim() { return element_count() + 1; }

FeatureArray atom_features(const MolecularGraph2D& graph) {
    const std::size_t n = graph.atom_count();
    const std::size_t d = atom_feature_dim();
    FeatureArray f{{n, d}, std::vector<double>(n * d, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        const Atom& a = graph.atoms()[i];
        f.at(i, static_cast<std::size_t>(a.element)) = 1.0;
        f.at(i, d - 1) = a.formal_charge;
    }
    return f;
}

FeatureArray pair_features(const MolecularGraph2D& graph) {
    const std::size_t n = graph.atom_count();
    FeatureArray f{{n, n, kPairFeatureDim}, std::vector<double>(n * n * kPairFeatureDim, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        f.at(i, i, 3) = 1.0;
    }
    for (const auto& bond : graph.bonds()) {
        const auto a = static_cast<std::size_t>(bond.a);
        const auto b = static_cast<std::size_t>(bond.b);
        const double aromatic = bond.order == BondOrder::Aromatic ? 1.0 : 0.0;
        const double order = valence_contribution(bond.order) / 3.0;
        for (auto [i, j] : {std::pair{a, b}, std::pair{b, a}}) {
            f.at(i, j, 0) = 1.0;
            f.at(i, j, 1) = aromatic;
            f.at(i, j, 2) = order;
        }
    }
    return f;
}

GeometricGraph GeometricGraph::build(MolecularGraph2D graph, Conformer conformer) {
    graph.validate();
    if (conformer.size() != graph.atom_count()) {
        throw ChemError("conformer has " + std::to_string(conformer.size()) + " rows but graph has " +
                        std::to_string(graph.atom_count()) + " atoms");
    }
    if (!conformer.all_finite()) {
        throw ChemError("conformer contains non-finite coordinates");
    }
    GeometricGraph g;
    g.atom_features = chem::atom_features(graph);
    g.pair_features = chem::pair_features(graph);
    g.graph2d = std::move(graph);
    g.conformer = std::move(conformer);
    return g;
}

// ---- stability / validity -----------------------------------------------------------

std::vector<bool> atom_stability_flags(const MolecularGraph2D& graph) {
    const auto valence = graph.valence_half_units();
    std::vector<bool> flags(graph.atom_count(), false);
    for (std::size_t i = 0; i < graph.atom_count(); ++i) {
        for (int v : allowed_valences(graph.atoms()[i])) {
            if (2 * v == valence[i]) {
                flags[i] = true;
                break;
            }
        }
    }
    return flags;
}

double compute_atom_stability(const MolecularGraph2D& graph) {
    if (graph.atom_count() == 0) {
        return 0.0;
    }
    const auto flags = atom_stability_flags(graph);
    const auto stable = std::count(flags.begin(), flags.end(), true);
    return static_cast<double>(stable) / static_cast<double>(flags.size());
}

bool molecule_stable(const MolecularGraph2D& graph) {
    return graph.atom_count() > 0 && compute_atom_stability(graph) == 1.0;
}

bool valences_admissible(const MolecularGraph2D& graph) {
    const auto valence = graph.valence_half_units();
    for (std::size_t i = 0; i < graph.atom_count(); ++i) {
        const auto& atom = graph.atoms()[i];
        if (allowed_valences(atom).empty() || valence[i] > 2 * max_valence(atom)) {
            return false;
        }
    }
    return true;
}

bool is_valid_and_connected(const MolecularGraph2D& graph) {
    try {
        graph.validate();
    } catch (const ChemError&) {
        return false;
    }
    return graph.atom_count() > 0 && valences_admissible(graph) && graph.component_count() == 1;
}

// ---- canonical hashing ----------------------------------------------------------

namespace {

std::uint64_t atom_seed(const Atom& atom, std::size_t degree) {
    std::uint64_t h = mix64(static_cast<std::uint64_t>(atom.info().atomic_number));
    h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(atom.formal_charge) + 1000));
    return hash_combine(h, degree);
}

std::size_t distinct_count(std::vector<std::uint64_t> v) {
    std::sort(v.begin(), v.end());
    return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

std::vector<std::uint64_t> refine_once(const std::vector<std::uint64_t>& colors,
                                       const std::vector<std::vector<Neighbor>>& adj, std::uint64_t round) {
    std::vector<std::uint64_t> next(colors.size());
    std::vector<std::uint64_t> msgs;
    for (std::size_t i = 0; i < colors.size(); ++i) {
        msgs.clear();
        for (const auto& nb : adj[i]) {
            msgs.push_back(hash_combine(static_cast<std::uint64_t>(half_units(nb.order)),
                                        colors[static_cast<std::size_t>(nb.atom)]));
        }
        std::sort(msgs.begin(), msgs.end());
        std::uint64_t h = hash_combine(round, colors[i]);
        for (auto m : msgs) {
            h = hash_combine(h, m);
        }
        next[i] = h;
    }
    return next;
}

}  // namespace

std::vector<std::uint64_t> canonical_colors(const MolecularGraph2D& graph) {
    const auto adj = graph.adjacency();
    std::vector<std::uint64_t> colors(graph.atom_count());
    for (std::size_t i = 0; i < colors.size(); ++i) {
        colors[i] = atom_seed(graph.atoms()[i], adj[i].size());
    }
    std::size_t classes = distinct_count(colors);
    for (std::size_t round = 1; round <= graph.atom_count(); ++round) {
        auto next = refine_once(colors, adj, round);
        const std::size_t next_classes = distinct_count(next);
        colors = std::move(next);
        if (next_classes == classes) {
            break;
        }
        classes = next_classes;
    }
    return colors;
}

std::string canonical_hash(const MolecularGraph2D& graph) {
    auto colors = canonical_colors(graph);
    std::sort(colors.begin(), colors.end());
    std::uint64_t h = hash_combine(0x5eed5eed5eedULL, graph.atom_count());
    h = hash_combine(h, graph.bond_count());
    for (auto c : colors) {
        h = hash_combine(h, c);
    }
    return to_hex(h);
}

// ---- fingerprints -------------------------------------------------------------

Fingerprint::Fingerprint(std::size_t n_bits) : n_bits_(n_bits), words_((n_bits + 63) / 64, 0) {
    if (n_bits == 0 || (n_bits & (n_bits - 1)) != 0) {
        throw ChemError("fingerprint size must be a power of two, got " + std::to_string(n_bits));
    }
}

void Fingerprint::set(std::size_t bit) { words_[bit / 64] |= (std::uint64_t{1} << (bit % 64)); }
bool Fingerprint::test(std::size_t bit) const { return (words_[bit / 64] >> (bit % 64)) & 1U; }

std::size_t Fingerprint::count() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
}

std::size_t Fingerprint::intersection_count(const Fingerprint& other) const {
    std::size_t c = 0;
    for (std::size_t i = 0; i < words_.size(); ++i) c += static_cast<std::size_t>(std::popcount(words_[i] & other.words_[i]));
    return c;
}

std::size_t Fingerprint::union_count(const Fingerprint& other) const {
    std::size_t c = 0;
    for (std::size_t i = 0; i < words_.size(); ++i) c += static_cast<std::size_t>(std::popcount(words_[i] | other.words_[i]));
    return c;
}

std::vector<std::vector<std::uint64_t>> morgan_identifiers(const MolecularGraph2D& graph, int radius) {
    if (radius < 0 || radius > 4) {
        throw ChemError("fingerprint radius must be in [0, 4]");
    }
    const auto adj = graph.adjacency();
    std::vector<std::vector<std::uint64_t>> ids(static_cast<std::size_t>(radius) + 1);
    ids[0].resize(graph.atom_count());
    for (std::size_t i = 0; i < graph.atom_count(); ++i) {
        ids[0][i] = atom_seed(graph.atoms()[i], adj[i].size());
    }
    for (int r = 1; r <= radius; ++r) {
        ids[static_cast<std::size_t>(r)] = refine_once(ids[static_cast<std::size_t>(r - 1)], adj, static_cast<std::uint64_t>(r));
    }
    return ids;
}

Fingerprint morgan_fingerprint(const MolecularGraph2D& graph, int radius, std::size_t n_bits) {
    Fingerprint fp(n_bits);
    for (const auto& layer : morgan_identifiers(graph, radius)) {
        for (auto id : layer) {
            fp.set(static_cast<std::size_t>(id & (n_bits - 1)));
        }
    }
    return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
    if (a.size() != b.size()) {
        throw ChemError("fingerprint size mismatch");
    }
    const auto u = a.union_count(b);
    return u == 0 ? 0.0 : static_cast<double>(a.intersection_count(b)) / static_cast<double>(u);
}

}  // namespace s3d::chem
