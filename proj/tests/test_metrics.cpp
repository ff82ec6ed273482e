#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "s3d/metrics.hpp"
#include "s3d/rng.hpp"
#include "s3d/toy_data.hpp"

using namespace s3d;
using namespace s3d::metrics;
using namespace s3d::testing;

namespace {

std::vector<double> normals(std::size_t n, Rng& rng, double mu = 0, double sd = 1) {
    std::vector<double> v(n);
    for (double& x : v) x = mu + sd * rng.normal();
    return v;
}

chem::GeometricGraph embedded(const chem::MolecularGraph2D& g, Rng& rng) {
    return chem::GeometricGraph::build(g, toy::embed_conformer(g, rng));
}

}  // namespace

TEST_CASE("eval_2d: copies of training molecules are valid, unique and not novel") {
    Rng rng(1);
    std::vector<chem::MolecularGraph2D> gen;
    std::unordered_set<std::string> ref;
    while (gen.size() < 100) {
        auto g = toy::random_molecule(rng);
        if (ref.insert(chem::canonical_hash(g)).second) gen.push_back(std::move(g));
    }
    const auto m = eval_2d(gen, ref);
    CHECK(m.vc == 1.0);
    CHECK(m.vu == 1.0);
    CHECK(m.vun == 0.0);
    CHECK(m.n_unique == 100);
    CHECK(m.mol_stable_frac == 1.0);
}

TEST_CASE("eval_2d: invalid batches and duplicates") {
    MolecularGraph2D bad;
    const int c = bad.add_atom(Atom::of("C"));
    for (int i = 0; i < 5; ++i) bad.add_bond(c, bad.add_atom(Atom::of("H")), BondOrder::Single);
    const std::vector<MolecularGraph2D> invalid(4, bad);
    const auto m = eval_2d(invalid, {});
    CHECK(m.vc == 0.0);
    CHECK(m.vu == 0.0);
    CHECK(m.vun == 0.0);
    CHECK(m.n_valid == 0);

    const std::vector<MolecularGraph2D> dup(10, ethanol());
    const auto d = eval_2d(dup, {});
    CHECK(d.vc == 1.0);
    CHECK(d.vu == doctest::Approx(d.vc / 10));
    CHECK(d.vun == doctest::Approx(0.1));

    // Order does not matter.
    std::vector<MolecularGraph2D> mix{ethanol(), water(), ethanol(), bad, benzene()};
    const auto a = eval_2d(mix, {canonical_hash(water())});
    std::reverse(mix.begin(), mix.end());
    const auto b = eval_2d(mix, {canonical_hash(water())});
    CHECK(a.vu == b.vu);
    CHECK(a.vun == b.vun);
    CHECK(a.vc == doctest::Approx(0.8));
    CHECK(a.vu == doctest::Approx(0.6));
    CHECK(a.vun == doctest::Approx(0.4));
}

TEST_CASE("snn: self-match, disjoint sets and a brute-force table") {
    const std::vector<MolecularGraph2D> ref{ethanol(), benzene(), acetonitrile(), formaldehyde(), dimethyl_ether()};
    CHECK(snn(std::span(ref).subspan(0, 3), ref) == doctest::Approx(1.0));

    // A lone fluorine has bits that cannot occur in any carbon-based reference.
    MolecularGraph2D f2;
    f2.add_bond(f2.add_atom(Atom::of("F")), f2.add_atom(Atom::of("F")), BondOrder::Single);
    const std::vector<MolecularGraph2D> only_f{f2};
    const std::vector<MolecularGraph2D> ch4{methane()};
    CHECK(snn(only_f, ch4) == 0.0);

    const std::vector<MolecularGraph2D> gen{water(), ethane(), methane(), benzene(), formaldehyde()};
    double expected = 0;
    for (const auto& g : gen) {
        const auto fg = morgan_fingerprint(g);
        double best = 0;
        for (const auto& r : ref) {
            const auto fr = morgan_fingerprint(r);
            std::size_t inter = 0, uni = 0;
            for (std::size_t bit = 0; bit < 2048; ++bit) {
                inter += fg.test(bit) && fr.test(bit);
                uni += fg.test(bit) || fr.test(bit);
            }
            best = std::max(best, uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0);
        }
        expected += best;
    }
    CHECK(snn(gen, ref) == doctest::Approx(expected / gen.size()).epsilon(1e-14));
    CHECK_THROWS_AS(snn({}, ref), MetricsError);
}

TEST_CASE("mmd: identity, closed form and brute force") {
    Rng rng(2);
    const auto a = normals(50, rng);
    CHECK(mmd(a, a) <= 1e-12);

    const std::vector<double> zeros(5, 0.0), tens(5, 10.0);
    // 20 within-set pairs at distance 0, 25 cross pairs at 10: median 10.
    CHECK(median_bandwidth(zeros, tens) == 10.0);
    CHECK(mmd(zeros, tens) == doctest::Approx(2 * (1 - std::exp(-0.5))).epsilon(1e-14));

    for (int trial = 0; trial < 20; ++trial) {
        const auto x = normals(50, rng), y = normals(50, rng, 0.3 * trial / 10.0, 1.0 + 0.05 * trial);
        CHECK(std::abs(mmd(x, y) - brute_mmd(x, y)) <= 1e-10);
        CHECK(mmd(x, y) == doctest::Approx(mmd(y, x)).epsilon(1e-12));
    }
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS(mmd(one, a), MetricsError);
    CHECK(median_bandwidth(zeros, zeros) == 1.0);
}

TEST_CASE("mmd thins large inputs by an even stride") {
    Rng rng(3);
    const auto a = normals(3000, rng), b = normals(2000, rng, 0.5);
    std::vector<double> ta, tb;
    for (std::size_t i = 0; i < a.size(); i += 3) ta.push_back(a[i]);
    for (std::size_t i = 0; i < b.size(); i += 2) tb.push_back(b[i]);
    CHECK(mmd(a, b) == doctest::Approx(brute_mmd(ta, tb)).epsilon(1e-10));
}

TEST_CASE("compare_sets weights keys by sample counts and skips small keys") {
    Rng rng(4);
    GeomSampleSet gen, ref;
    gen["C-C"] = normals(30, rng, 1.54, 0.02);
    ref["C-C"] = normals(40, rng, 1.50, 0.02);
    gen["C-H"] = normals(25, rng, 1.09, 0.01);
    ref["C-H"] = normals(20, rng, 1.09, 0.01);
    gen["C-N"] = normals(5, rng, 1.47, 0.01);
    ref["C-N"] = normals(50, rng, 1.47, 0.01);
    ref["O-H"] = normals(30, rng, 0.96, 0.01);
    const auto r = compare_sets(gen, ref);
    REQUIRE(r.per_key.size() == 2);
    const double m1 = mmd(gen["C-C"], ref["C-C"]), m2 = mmd(gen["C-H"], ref["C-H"]);
    REQUIRE(r.aggregate);
    CHECK(*r.aggregate == doctest::Approx((70 * m1 + 45 * m2) / 115).epsilon(1e-12));
    CHECK(r.skipped == std::vector<std::string>{"C-N", "O-H"});
    CHECK_FALSE(compare_sets({}, {}).aggregate);
}

TEST_CASE("eval_3d: identical sets score zero and shifted bonds score higher") {
    Rng rng(5);
    std::vector<chem::GeometricGraph> ref;
    toy::MoleculeOptions opt;
    opt.max_heavy = 6;
    for (int i = 0; i < 30; ++i) ref.push_back(embedded(toy::random_molecule(rng, opt), rng));
    const auto same = eval_3d(ref, ref);
    REQUIRE(same.bond_lengths.aggregate);
    CHECK(*same.bond_lengths.aggregate <= 1e-12);
    CHECK(*same.bond_angles.aggregate <= 1e-12);
    CHECK_FALSE(same.insufficient);
    CHECK(same.atom_stable_frac == doctest::Approx(1.0));

    // Ethane conformers with a 1.54 A C-C bond versus ones stretched to 2.0 A.
    std::vector<chem::GeometricGraph> r1, g1;
    for (int i = 0; i < 25; ++i) {
        auto a = embedded(ethane(), rng);
        auto b = a;
        const auto& xa = a.conformer.coordinates;
        const double d = std::sqrt(std::pow(xa[0][0] - xa[1][0], 2) + std::pow(xa[0][1] - xa[1][1], 2) +
                                   std::pow(xa[0][2] - xa[1][2], 2));
        const double shift = 2.0 - d;
        chem::Vec3 u{};
        for (int k = 0; k < 3; ++k) u[k] = (xa[1][k] - xa[0][k]) / d;
        // Move carbon 1 and its hydrogens along the bond axis.
        for (std::size_t at = 0; at < b.conformer.size(); ++at) {
            const bool side1 = at == 1 || (at >= 2 && b.graph2d.bond_between(1, static_cast<int>(at)));
            if (!side1) continue;
            for (int k = 0; k < 3; ++k) b.conformer.coordinates[at][k] += shift * u[k];
        }
        r1.push_back(chem::GeometricGraph::build(a.graph2d, a.conformer));
        g1.push_back(chem::GeometricGraph::build(b.graph2d, b.conformer));
    }
    const auto base = eval_3d(r1, r1);
    const auto shifted = eval_3d(g1, r1);
    CHECK(shifted.bond_lengths.per_key.size() >= 1);
    double cc_same = -1, cc_shift = -1;
    for (const auto& k : base.bond_lengths.per_key) {
        if (k.key == "C-C") cc_same = k.mmd;
    }
    for (const auto& k : shifted.bond_lengths.per_key) {
        if (k.key == "C-C") cc_shift = k.mmd;
    }
    CHECK(cc_shift > cc_same);

    const std::vector<chem::GeometricGraph> tiny{embedded(water(), rng)};
    CHECK(eval_3d(tiny, tiny).insufficient);
}

TEST_CASE("bonds re-derived from distances") {
    Rng rng(6);
    const auto gg = embedded(ethanol(), rng);
    const auto derived = bonds_from_distances(gg.graph2d, gg.conformer);
    CHECK(derived.bond_count() == gg.graph2d.bond_count());
    CHECK(chem::molecule_stable(derived));
    chem::Conformer apart = gg.conformer;
    for (auto& p : apart.coordinates) {
        for (double& v : p) v *= 3.0;
    }
    CHECK(bonds_from_distances(gg.graph2d, apart).bond_count() == 0);
}

TEST_CASE("histograms: normalization, degenerate keys and uniform samples") {
    Rng rng(7);
    GeomSampleSet gen, ref;
    for (int i = 0; i < 20000; ++i) gen["u"].push_back(rng.uniform());
    ref["u"] = {0.0, 1.0};
    gen["same"] = std::vector<double>(30, 1.5);
    ref["same"] = std::vector<double>(10, 1.5);
    gen["lonely"] = {1.0, 2.0};
    const auto table = export_histograms(gen, ref, 10);
    std::map<std::string, double> gen_mass, ref_mass;
    std::map<std::string, std::vector<double>> gen_dens;
    for (const auto& r : table.rows) {
        gen_mass[r.key] += r.gen_density * (r.bin_hi - r.bin_lo);
        ref_mass[r.key] += r.ref_density * (r.bin_hi - r.bin_lo);
        gen_dens[r.key].push_back(r.gen_density);
    }
    for (const auto& [k, m] : gen_mass) CHECK(std::abs(m - 1) <= 1e-9);
    for (const auto& [k, m] : ref_mass) CHECK(std::abs(m - 1) <= 1e-9);
    // Uniform on [0, 1) over 10 bins: density 1 with binomial error sqrt(p(1-p)/n)/width.
    for (double d : gen_dens["u"]) CHECK(std::abs(d - 1.0) < 4 * std::sqrt(0.1 * 0.9 / 20000) / 0.1);
    const auto& s = gen_dens["same"];
    CHECK(std::count_if(s.begin(), s.end(), [](double d) { return d > 0; }) == 1);
    CHECK(gen_dens.count("lonely") == 0);
    CHECK(table.notes.size() == 1);
    CHECK_THROWS(export_histograms(gen, ref, 1));

    const auto path = std::filesystem::temp_directory_path() / "s3d_hist_test.csv";
    write_histogram_csv(table, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "type_key,bin_lo,bin_hi,gen_density,ref_density");
    std::filesystem::remove(path);
}

TEST_CASE("report invariants and serialization") {
    MetricReport r;
    r.m2d.vc = 0.9;
    r.m2d.vu = 0.8;
    r.m2d.vun = 0.5;
    r.m2d.atom_stable_frac = 0.95;
    r.m2d.mol_stable_frac = 0.7;
    CHECK_NOTHROW(r.check_invariants());
    const auto j = to_json(r);
    for (const char* k : {"counts", "scores", "geometry", "metadata"}) CHECK(j.contains(k));
    r.m2d.vun = 0.85;
    CHECK_THROWS_AS(r.check_invariants(), MetricsError);
    r.m2d.vun = 0.5;
    r.m2d.vc = 1.2;
    CHECK_THROWS_AS(r.check_invariants(), MetricsError);
}
