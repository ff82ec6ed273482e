#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "s3d/chem.hpp"

namespace s3d::metrics {

class MetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Metrics2D {
    std::size_t n_generated = 0;
    std::size_t n_valid = 0;
    std::size_t n_connected = 0;  // valid and a single component
    std::size_t n_unique = 0;     // distinct hashes among the valid-and-connected
    std::size_t n_novel = 0;      // ... of which not in the reference set
    double atom_stable_frac = 0;
    double mol_stable_frac = 0;
    double vc = 0;
    double vu = 0;
    double vun = 0;
};

// Uniqueness counts distinct canonical hashes, so the result does not depend
// on input order. Stability is averaged over all generated molecules.
Metrics2D eval_2d(std::span<const chem::MolecularGraph2D> generated,
                  const std::unordered_set<std::string>& reference_hashes);

// Mean over generated of the best Tanimoto similarity to any reference.
double snn(std::span<const chem::MolecularGraph2D> generated, std::span<const chem::MolecularGraph2D> reference,
           int radius = 2, std::size_t n_bits = 2048);

struct MmdOptions {
    // Larger inputs are thinned by an even stride; 0 disables the cap.
    std::size_t max_samples = 1000;
};

// Median of the pairwise absolute differences over a and b pooled (the mean
// of the two middle values for an even count); 1 when that median is 0.
double median_bandwidth(std::span<const double> a, std::span<const double> b);
// Unbiased squared MMD with k(x, y) = exp(-(x - y)^2 / (2 s^2)), clamped at 0.
double mmd(std::span<const double> a, std::span<const double> b, const MmdOptions& options = {});

using GeomSampleSet = std::map<std::string, std::vector<double>>;

enum class GeomKind { BondLength, BondAngle, Dihedral };
std::string to_string(GeomKind kind);

GeomSampleSet pool_measurements(std::span<const chem::GeometryMeasurements> measurements, GeomKind kind);

struct KeyMmd {
    std::string key;
    std::size_t n_generated = 0;
    std::size_t n_reference = 0;
    double mmd = 0;
};

struct GeometryMmd {
    std::vector<KeyMmd> per_key;          // keys with enough samples on both sides
    std::optional<double> aggregate;      // sample-count weighted mean; empty when no key qualifies
    std::vector<std::string> skipped;     // keys present on either side but too small
};

// Keys need at least min_samples values on each side.
GeometryMmd compare_sets(const GeomSampleSet& generated, const GeomSampleSet& reference,
                         std::size_t min_samples = 20, const MmdOptions& options = {});

struct Metrics3D {
    GeometryMmd bond_lengths;
    GeometryMmd bond_angles;
    GeometryMmd dihedrals;
    double atom_stable_frac = 0;  // bonds re-derived from distances
    double mol_stable_frac = 0;
    bool insufficient = false;    // no geometric key qualified at all
};

constexpr double kBondTolerance = 0.4;  // Angstrom added to the covalent radii sum

// Bond when d < r_i + r_j + kBondTolerance; the order comes from the 2D graph
// where that pair is bonded and is single otherwise.
chem::MolecularGraph2D bonds_from_distances(const chem::MolecularGraph2D& graph, const chem::Conformer& conformer);

Metrics3D eval_3d(std::span<const chem::GeometricGraph> generated, std::span<const chem::GeometricGraph> reference,
                  std::size_t min_samples = 20, const MmdOptions& options = {});

struct HistogramRow {
    std::string key;
    double bin_lo = 0;
    double bin_hi = 0;
    double gen_density = 0;
    double ref_density = 0;
};

struct HistogramTable {
    std::vector<HistogramRow> rows;
    std::vector<std::string> notes;  // keys omitted for lack of samples
};

// Shared bin edges per key spanning both sets; each density integrates to 1.
HistogramTable export_histograms(const GeomSampleSet& generated, const GeomSampleSet& reference, std::size_t bins);
void write_histogram_csv(const HistogramTable& table, const std::filesystem::path& path);

struct MetricReport {
    Metrics2D m2d;
    std::optional<double> snn;
    std::optional<Metrics3D> m3d;
    nlohmann::json metadata = nlohmann::json::object();

    // Throws MetricsError naming the first violated relation.
    void check_invariants() const;
};

nlohmann::json to_json(const MetricReport& report);

}  // namespace s3d::metrics
