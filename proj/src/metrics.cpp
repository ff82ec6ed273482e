#include "s3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>

namespace s3d::metrics {

Metrics2D eval_2d(std::span<const chem::MolecularGraph2D> generated,
                  const std::unordered_set<std::string>& reference_hashes) {
    Metrics2D m;
    m.n_generated = generated.size();
    if (generated.empty()) return m;
    std::set<std::string> unique;
    double atom_stable = 0;
    std::size_t mol_stable = 0;
    for (const auto& g : generated) {
        bool structurally_ok = true;
        try {
            g.validate();
        } catch (const chem::ChemError&) {
            structurally_ok = false;
        }
        if (!structurally_ok || g.atom_count() == 0) continue;
        atom_stable += chem::compute_atom_stability(g);
        if (chem::molecule_stable(g)) ++mol_stable;
        if (!chem::valences_admissible(g)) continue;
        ++m.n_valid;
        if (g.component_count() != 1) continue;
        ++m.n_connected;
        unique.insert(chem::canonical_hash(g));
    }
    m.n_unique = unique.size();
    m.n_novel = static_cast<std::size_t>(
        std::count_if(unique.begin(), unique.end(), [&](const std::string& h) { return !reference_hashes.contains(h); }));
    const double n = static_cast<double>(m.n_generated);
    m.atom_stable_frac = atom_stable / n;
    m.mol_stable_frac = static_cast<double>(mol_stable) / n;
    m.vc = static_cast<double>(m.n_connected) / n;
    m.vu = static_cast<double>(m.n_unique) / n;
    m.vun = static_cast<double>(m.n_novel) / n;
    return m;
}

double snn(std::span<const chem::MolecularGraph2D> generated, std::span<const chem::MolecularGraph2D> reference,
           int radius, std::size_t n_bits) {
    if (generated.empty() || reference.empty()) throw MetricsError("snn needs non-empty generated and reference sets");
    std::vector<chem::Fingerprint> ref;
    ref.reserve(reference.size());
    for (const auto& r : reference) ref.push_back(chem::morgan_fingerprint(r, radius, n_bits));
    double total = 0;
    for (const auto& g : generated) {
        const auto fp = chem::morgan_fingerprint(g, radius, n_bits);
        double best = 0;
        for (const auto& r : ref) best = std::max(best, chem::tanimoto(fp, r));
        total += best;
    }
    return total / static_cast<double>(generated.size());
}

namespace {

std::vector<double> thin(std::span<const double> x, std::size_t cap) {
    if (cap == 0 || x.size() <= cap) return {x.begin(), x.end()};
    std::vector<double> out;
    out.reserve(cap);
    for (std::size_t i = 0; i < cap; ++i) out.push_back(x[i * x.size() / cap]);
    return out;
}

}  // namespace

double median_bandwidth(std::span<const double> a, std::span<const double> b) {
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::vector<double> d;
    d.reserve(pooled.size() * (pooled.size() - 1) / 2);
    for (std::size_t i = 0; i < pooled.size(); ++i)
        for (std::size_t j = i + 1; j < pooled.size(); ++j) d.push_back(std::abs(pooled[i] - pooled[j]));
    if (d.empty()) return 1.0;
    const std::size_t mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
    double med = d[mid];
    if (d.size() % 2 == 0) {
        const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
        med = 0.5 * (med + lower);
    }
    return med > 0 ? med : 1.0;
}

double mmd(std::span<const double> a_in, std::span<const double> b_in, const MmdOptions& options) {
    if (a_in.size() < 2 || b_in.size() < 2) {
        throw MetricsError("mmd needs at least 2 samples per side, got " + std::to_string(a_in.size()) + " and " +
                           std::to_string(b_in.size()));
    }
    const auto a = thin(a_in, options.max_samples);
    const auto b = thin(b_in, options.max_samples);
    const double s = median_bandwidth(a, b);
    const double inv = 1.0 / (2.0 * s * s);
    auto k = [&](double x, double y) { return std::exp(-(x - y) * (x - y) * inv); };
    auto within = [&](const std::vector<double>& x) {
        double sum = 0;
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t j = i + 1; j < x.size(); ++j) sum += k(x[i], x[j]);
        const double m = static_cast<double>(x.size());
        return 2.0 * sum / (m * (m - 1));
    };
    double cross = 0;
    for (double x : a)
        for (double y : b) cross += k(x, y);
    cross /= static_cast<double>(a.size()) * static_cast<double>(b.size());
    return std::max(0.0, within(a) + within(b) - 2.0 * cross);
}

std::string to_string(GeomKind kind) {
    switch (kind) {
        case GeomKind::BondLength: return "bond_length";
        case GeomKind::BondAngle: return "bond_angle";
        case GeomKind::Dihedral: return "dihedral";
    }
    return "?";
}

GeomSampleSet pool_measurements(std::span<const chem::GeometryMeasurements> measurements, GeomKind kind) {
    GeomSampleSet out;
    for (const auto& m : measurements) {
        const auto& src = kind == GeomKind::BondLength  ? m.bond_lengths
                          : kind == GeomKind::BondAngle ? m.bond_angles
                                                        : m.dihedral_angles;
        for (const auto& [key, value] : src) {
            if (std::isfinite(value)) out[key].push_back(value);
        }
    }
    return out;
}

GeometryMmd compare_sets(const GeomSampleSet& generated, const GeomSampleSet& reference, std::size_t min_samples,
                         const MmdOptions& options) {
    GeometryMmd out;
    std::set<std::string> keys;
    for (const auto& [k, _] : generated) keys.insert(k);
    for (const auto& [k, _] : reference) keys.insert(k);
    double weighted = 0, weight = 0;
    const std::size_t floor = std::max<std::size_t>(min_samples, 2);
    for (const auto& key : keys) {
        const auto g = generated.find(key);
        const auto r = reference.find(key);
        const std::size_t ng = g == generated.end() ? 0 : g->second.size();
        const std::size_t nr = r == reference.end() ? 0 : r->second.size();
        if (ng < floor || nr < floor) {
            out.skipped.push_back(key);
            continue;
        }
        KeyMmd km{key, ng, nr, mmd(g->second, r->second, options)};
        const double w = static_cast<double>(ng + nr);
        weighted += w * km.mmd;
        weight += w;
        out.per_key.push_back(std::move(km));
    }
    if (weight > 0) out.aggregate = weighted / weight;
    return out;
}

chem::MolecularGraph2D bonds_from_distances(const chem::MolecularGraph2D& graph, const chem::Conformer& conformer) {
    if (conformer.size() != graph.atom_count()) {
        throw MetricsError("conformer has " + std::to_string(conformer.size()) + " rows for " +
                           std::to_string(graph.atom_count()) + " atoms");
    }
    chem::MolecularGraph2D out;
    for (const auto& a : graph.atoms()) out.add_atom(a);
    const auto n = static_cast<int>(graph.atom_count());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const auto& p = conformer.coordinates[static_cast<std::size_t>(i)];
            const auto& q = conformer.coordinates[static_cast<std::size_t>(j)];
            const double d = std::hypot(p[0] - q[0], p[1] - q[1], p[2] - q[2]);
            const double cut = graph.atom(i).info().covalent_radius + graph.atom(j).info().covalent_radius + kBondTolerance;
            if (d < cut) out.add_bond(i, j, graph.bond_between(i, j).value_or(chem::BondOrder::Single));
        }
    return out;
}

Metrics3D eval_3d(std::span<const chem::GeometricGraph> generated, std::span<const chem::GeometricGraph> reference,
                  std::size_t min_samples, const MmdOptions& options) {
    if (generated.empty() || reference.empty()) throw MetricsError("eval_3d needs non-empty generated and reference sets");
    std::vector<chem::GeometryMeasurements> gm, rm;
    Metrics3D out;
    double atom_stable = 0;
    std::size_t mol_stable = 0;
    for (const auto& g : generated) {
        gm.push_back(chem::measure_geometry(g));
        const auto derived = bonds_from_distances(g.graph2d, g.conformer);
        atom_stable += chem::compute_atom_stability(derived);
        if (chem::molecule_stable(derived)) ++mol_stable;
    }
    for (const auto& r : reference) rm.push_back(chem::measure_geometry(r));
    out.atom_stable_frac = atom_stable / static_cast<double>(generated.size());
    out.mol_stable_frac = static_cast<double>(mol_stable) / static_cast<double>(generated.size());
    auto cmp = [&](GeomKind kind) {
        return compare_sets(pool_measurements(gm, kind), pool_measurements(rm, kind), min_samples, options);
    };
    out.bond_lengths = cmp(GeomKind::BondLength);
    out.bond_angles = cmp(GeomKind::BondAngle);
    out.dihedrals = cmp(GeomKind::Dihedral);
    out.insufficient = !out.bond_lengths.aggregate && !out.bond_angles.aggregate && !out.dihedrals.aggregate;
    return out;
}

HistogramTable export_histograms(const GeomSampleSet& generated, const GeomSampleSet& reference, std::size_t bins) {
    if (bins < 2) throw MetricsError("histograms need at least 2 bins");
    HistogramTable table;
    std::set<std::string> keys;
    for (const auto& [k, _] : generated) keys.insert(k);
    for (const auto& [k, _] : reference) keys.insert(k);
    for (const auto& key : keys) {
        const auto g = generated.find(key);
        const auto r = reference.find(key);
        if (g == generated.end() || r == reference.end() || g->second.empty() || r->second.empty()) {
            table.notes.push_back(key + ": omitted, empty sample list on one side");
            continue;
        }
        double lo = std::min(*std::min_element(g->second.begin(), g->second.end()),
                             *std::min_element(r->second.begin(), r->second.end()));
        double hi = std::max(*std::max_element(g->second.begin(), g->second.end()),
                             *std::max_element(r->second.begin(), r->second.end()));
        if (hi <= lo) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double width = (hi - lo) / static_cast<double>(bins);
        auto density = [&](const std::vector<double>& v) {
            std::vector<double> c(bins, 0.0);
            for (double x : v) {
                auto b = static_cast<std::size_t>((x - lo) / width);
                c[std::min(b, bins - 1)] += 1.0;
            }
            for (double& x : c) x /= static_cast<double>(v.size()) * width;
            return c;
        };
        const auto dg = density(g->second);
        const auto dr = density(r->second);
        for (std::size_t b = 0; b < bins; ++b) {
            table.rows.push_back({key, lo + width * static_cast<double>(b), lo + width * static_cast<double>(b + 1),
                                  dg[b], dr[b]});
        }
    }
    return table;
}

void write_histogram_csv(const HistogramTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw MetricsError("cannot write " + path.string());
    out << "type_key,bin_lo,bin_hi,gen_density,ref_density\n" << std::setprecision(10);
    for (const auto& r : table.rows) {
        out << '"' << r.key << "\"," << r.bin_lo << ',' << r.bin_hi << ',' << r.gen_density << ',' << r.ref_density
            << '\n';
    }
}

void MetricReport::check_invariants() const {
    auto in_unit = [](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) throw MetricsError(std::string(name) + " = " + std::to_string(v) + " outside [0, 1]");
    };
    in_unit(m2d.atom_stable_frac, "atom_stable_frac");
    in_unit(m2d.mol_stable_frac, "mol_stable_frac");
    in_unit(m2d.vc, "vc");
    in_unit(m2d.vu, "vu");
    in_unit(m2d.vun, "vun");
    if (snn) in_unit(*snn, "snn");
    if (m2d.vu > m2d.vc) throw MetricsError("V&U exceeds V&C");
    if (m2d.vun > m2d.vu) throw MetricsError("V&U&N exceeds V&U");
    if (m3d) {
        in_unit(m3d->atom_stable_frac, "atom_stable_frac_3d");
        in_unit(m3d->mol_stable_frac, "mol_stable_frac_3d");
        for (const auto* set : {&m3d->bond_lengths, &m3d->bond_angles, &m3d->dihedrals})
            for (const auto& k : set->per_key)
                if (!(k.mmd >= 0.0) || !std::isfinite(k.mmd)) throw MetricsError("MMD for " + k.key + " is not finite");
    }
}

namespace {

nlohmann::json geometry_json(const GeometryMmd& g) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& k : g.per_key) {
        per.push_back({{"key", k.key}, {"n_generated", k.n_generated}, {"n_reference", k.n_reference}, {"mmd", k.mmd}});
    }
    return {{"aggregate", g.aggregate ? nlohmann::json(*g.aggregate) : nlohmann::json(nullptr)},
            {"per_key", per},
            {"skipped_keys", g.skipped}};
}

}  // namespace

nlohmann::json to_json(const MetricReport& report) {
    const auto& m = report.m2d;
    nlohmann::json j;
    j["counts"] = {{"n_generated", m.n_generated},
                   {"n_valid", m.n_valid},
                   {"n_connected", m.n_connected},
                   {"n_unique", m.n_unique},
                   {"n_novel", m.n_novel}};
    j["scores"] = {{"atom_stable_frac", m.atom_stable_frac},
                   {"mol_stable_frac", m.mol_stable_frac},
                   {"vc", m.vc},
                   {"vu", m.vu},
                   {"vun", m.vun},
                   {"snn", report.snn ? nlohmann::json(*report.snn) : nlohmann::json(nullptr)}};
    if (report.m3d) {
        const auto& g = *report.m3d;
        j["geometry"] = {{"bond_length", geometry_json(g.bond_lengths)},
                         {"bond_angle", geometry_json(g.bond_angles)},
                         {"dihedral", geometry_json(g.dihedrals)},
                         {"atom_stable_frac_3d", g.atom_stable_frac},
                         {"mol_stable_frac_3d", g.mol_stable_frac},
                         {"stability_3d_protocol", "distance cutoff r_i + r_j + 0.4 A (stand-in)"},
                         {"insufficient", g.insufficient}};
    } else {
        j["geometry"] = nullptr;
    }
    j["metadata"] = report.metadata;
    return j;
}

}  // namespace s3d::metrics
