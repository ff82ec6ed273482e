#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace s3d::chem {

class ChemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Element {
    std::string_view symbol;
    int atomic_number = 0;
    std::vector<int> allowed_valences;
    double covalent_radius = 0.0;  // Angstrom
    double mass = 0.0;             // Dalton
};

// The fixed element table, in one-hot order.
std::span<const Element> element_table();
std::size_t element_count();
// Throws ChemError naming the symbol when it is not in the table.
int element_index(std::string_view symbol);
std::optional<int> find_element(std::string_view symbol);
const Element& element_at(int index);

enum class BondOrder : std::uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

// Bond orders in half-valence units: single 2, aromatic 3, double 4, triple 6.
constexpr int half_units(BondOrder order) noexcept {
    switch (order) {
        case BondOrder::Single: return 2;
        case BondOrder::Double: return 4;
        case BondOrder::Triple: return 6;
        case BondOrder::Aromatic: return 3;
    }
    return 0;
}

constexpr double valence_contribution(BondOrder order) noexcept {
    return half_units(order) / 2.0;
}

std::string_view bond_symbol(BondOrder order) noexcept;
// Accepts 1, 2, 3 and 1.5.
BondOrder bond_order_from_real(double value);

struct Atom {
    int element = 0;  // index into element_table()
    int formal_charge = 0;

    static Atom of(std::string_view symbol, int charge = 0) { return {element_index(symbol), charge}; }
    const Element& info() const { return element_at(element); }
    std::string_view symbol() const { return info().symbol; }
    bool is_hydrogen() const { return info().atomic_number == 1; }

    friend bool operator==(const Atom&, const Atom&) = default;
};

// Allowed valences after the formal-charge adjustment. Group 15/16 elements
// shift by +charge (N+ -> 4, O- -> 1); group 13 by -charge; everything else
// loses |charge| bonds.
std::vector<int> allowed_valences(const Atom& atom);
int max_valence(const Atom& atom);

struct Bond {
    int a = 0;
    int b = 0;
    BondOrder order = BondOrder::Single;

    bool touches(int atom) const noexcept { return a == atom || b == atom; }
    int other(int atom) const noexcept { return a == atom ? b : a; }
};

struct Neighbor {
    int atom;
    BondOrder order;
};

class MolecularGraph2D {
public:
    MolecularGraph2D() = default;

    int add_atom(Atom atom);
    // Throws ChemError on self-loops, out-of-range indices and duplicate edges.
    void add_bond(int a, int b, BondOrder order);

    std::size_t atom_count() const noexcept { return atoms_.size(); }
    std::size_t bond_count() const noexcept { return bonds_.size(); }
    const std::vector<Atom>& atoms() const noexcept { return atoms_; }
    const std::vector<Bond>& bonds() const noexcept { return bonds_; }
    const Atom& atom(int i) const { return atoms_.at(static_cast<std::size_t>(i)); }

    std::optional<BondOrder> bond_between(int a, int b) const;
    std::vector<std::vector<Neighbor>> adjacency() const;
    // Sum of incident bond orders in half units.
    std::vector<int> valence_half_units() const;
    std::size_t component_count() const;
    std::size_t heavy_atom_count() const;

    // Relabel atoms so that new index i holds old atom order[i].
    MolecularGraph2D permuted(std::span<const int> order) const;

    // Checks every type invariant; throws ChemError with a description.
    void validate() const;

private:
    std::vector<Atom> atoms_;
    std::vector<Bond> bonds_;
};

using Vec3 = std::array<double, 3>;

struct Conformer {
    std::vector<Vec3> coordinates;  // Angstrom

    std::size_t size() const noexcept { return coordinates.size(); }
    bool all_finite() const;
};

// Row-major dense real matrix / tensor used for featurization.
struct FeatureArray {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
};

// Atom features: one-hot element followed by the integer formal charge.
constexpr std::size_t kPairFeatureDim = 4;  // exists, aromatic, order/3, diagonal
std::size_t atom_feature_dim();
FeatureArray atom_features(const MolecularGraph2D& graph);
FeatureArray pair_features(const MolecularGraph2D& graph);

struct GeometricGraph {
    MolecularGraph2D graph2d;
    Conformer conformer;
    FeatureArray atom_features;  // N x d1
    FeatureArray pair_features;  // N x N x d2

    // Derives both feature arrays from the graph; checks coordinate count.
    static GeometricGraph build(MolecularGraph2D graph, Conformer conformer);
};

// ---- stability / validity ---------------------------------------------------

std::vector<bool> atom_stability_flags(const MolecularGraph2D& graph);
double compute_atom_stability(const MolecularGraph2D& graph);
bool molecule_stable(const MolecularGraph2D& graph);
bool valences_admissible(const MolecularGraph2D& graph);
bool is_valid_and_connected(const MolecularGraph2D& graph);

// ---- canonical hashing ------------------------------------------------------

// Stable Weisfeiler-Leman colors, seeded by (element, charge, degree) with
// bond orders as edge labels. Refines until the partition stops splitting.
std::vector<std::uint64_t> canonical_colors(const MolecularGraph2D& graph);
// 16 hex digits; invariant under atom relabeling.
std::string canonical_hash(const MolecularGraph2D& graph);

// ---- fingerprints -----------------------------------------------------------

class Fingerprint {
public:
    explicit Fingerprint(std::size_t n_bits = 2048);
    std::size_t size() const noexcept { return n_bits_; }
    void set(std::size_t bit);
    bool test(std::size_t bit) const;
    std::size_t count() const;
    std::size_t intersection_count(const Fingerprint& other) const;
    std::size_t union_count(const Fingerprint& other) const;
    friend bool operator==(const Fingerprint&, const Fingerprint&) = default;

private:
    std::size_t n_bits_;
    std::vector<std::uint64_t> words_;
};

// Per-atom circular identifiers for radius 0..radius; ids[r][atom].
std::vector<std::vector<std::uint64_t>> morgan_identifiers(const MolecularGraph2D& graph, int radius);
Fingerprint morgan_fingerprint(const MolecularGraph2D& graph, int radius = 2, std::size_t n_bits = 2048);
// Jaccard index; 0 when both fingerprints are empty.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

// ---- geometry ---------------------------------------------------------------

struct GeometryMeasurements {
    std::vector<std::pair<std::string, double>> bond_lengths;     // Angstrom
    std::vector<std::pair<std::string, double>> bond_angles;      // degrees
    std::vector<std::pair<std::string, double>> dihedral_angles;  // degrees in (-180, 180]
    std::size_t skipped_dihedrals = 0;
};

// Atom labels are element symbols, lowercased when the atom carries an
// aromatic bond; bonds are written - = # :. Keys read the same from either
// end: the lexicographically smaller direction is kept.
std::string path_type_key(const MolecularGraph2D& graph, std::span<const int> path);
GeometryMeasurements measure_geometry(const GeometricGraph& g);
GeometryMeasurements measure_geometry(const MolecularGraph2D& graph, const Conformer& conformer);

}  // namespace s3d::chem
