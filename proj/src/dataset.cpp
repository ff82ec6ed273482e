#include "s3d/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "s3d/rng.hpp"
#include "s3d/selfies.hpp"

namespace s3d::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double order_value(chem::BondOrder o) {
    switch (o) {
        case chem::BondOrder::Single: return 1.0;
        case chem::BondOrder::Double: return 2.0;
        case chem::BondOrder::Triple: return 3.0;
        case chem::BondOrder::Aromatic: return 1.5;
    }
    return 0.0;
}

}  // namespace

json record_to_json(const DatasetRecord& r) {
    json atoms = json::array(), bonds = json::array(), coords = json::array();
    for (const auto& a : r.graph.atoms()) atoms.push_back({std::string(a.symbol()), a.formal_charge});
    for (const auto& b : r.graph.bonds()) bonds.push_back({b.a, b.b, order_value(b.order)});
    for (const auto& p : r.conformer.coordinates) coords.push_back({p[0], p[1], p[2]});
    return {{"id", r.id},         {"selfies", r.selfies}, {"atoms", atoms},
            {"bonds", bonds},     {"coords", coords},     {"properties", r.properties}};
}

void validate_record(const DatasetRecord& r) {
    r.graph.validate();
    if (r.graph.atom_count() == 0) throw DataError("record has no atoms");
    if (r.conformer.size() != r.graph.atom_count()) {
        throw DataError("coords has " + std::to_string(r.conformer.size()) + " rows for " +
                        std::to_string(r.graph.atom_count()) + " atoms");
    }
    if (!r.conformer.all_finite()) throw DataError("coords contain non-finite values");
    if (!chem::is_valid_and_connected(r.graph)) throw DataError("graph is not valence-valid and connected");
    for (const auto& [k, v] : r.properties)
        if (!std::isfinite(v)) throw DataError("property '" + k + "' is not finite");
    const auto decoded = selfies::decode(r.selfies);
    if (chem::canonical_hash(decoded) != chem::canonical_hash(r.graph)) {
        throw DataError("selfies does not decode to the record's graph");
    }
}

DatasetRecord record_from_json(const json& j) {
    if (!j.is_object()) throw DataError("record is not a JSON object");
    DatasetRecord r;
    try {
        r.id = j.value("id", std::string{});
        for (const auto& a : j.at("atoms")) {
            if (a.is_string()) {
                r.graph.add_atom(chem::Atom::of(a.get<std::string>()));
            } else {
                r.graph.add_atom(chem::Atom::of(a.at(0).get<std::string>(), a.size() > 1 ? a.at(1).get<int>() : 0));
            }
        }
        for (const auto& b : j.at("bonds")) {
            r.graph.add_bond(b.at(0).get<int>(), b.at(1).get<int>(), chem::bond_order_from_real(b.at(2).get<double>()));
        }
        for (const auto& p : j.at("coords")) {
            if (p.size() != 3) throw DataError("coordinate row does not have 3 values");
            r.conformer.coordinates.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
        }
        if (j.contains("properties") && !j.at("properties").is_null()) {
            r.properties = j.at("properties").get<std::map<std::string, double>>();
        }
        if (j.contains("selfies") && j.at("selfies").is_string() && !j.at("selfies").get<std::string>().empty()) {
            r.selfies = j.at("selfies").get<std::string>();
        } else {
            r.graph.validate();
            r.selfies = selfies::encode(r.graph).str();
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed record: ") + e.what());
    } catch (const chem::ChemError& e) {
        throw DataError(e.what());
    } catch (const selfies::SelfiesError& e) {
        throw DataError(e.what());
    }
    try {
        validate_record(r);
    } catch (const chem::ChemError& e) {
        throw DataError(e.what());
    }
    return r;
}

namespace {

void check_rejects(const ReadResult& res, double max_fraction, const std::string& what) {
    if (res.seen == 0) throw DataError(what + " contains no records");
    const double frac = static_cast<double>(res.rejects.size()) / static_cast<double>(res.seen);
    if (frac > max_fraction) {
        std::string msg = what + ": " + std::to_string(res.rejects.size()) + " of " + std::to_string(res.seen) +
                          " records rejected";
        if (!res.rejects.empty()) msg += " (first: " + res.rejects.front() + ")";
        throw DataError(msg);
    }
}

}  // namespace

ReadResult read_jsonl(const fs::path& path, double max_reject_fraction) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    ReadResult res;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++res.seen;
        try {
            auto rec = record_from_json(json::parse(line));
            if (rec.id.empty()) rec.id = "rec" + std::to_string(lineno);
            res.records.push_back(std::move(rec));
        } catch (const std::exception& e) {
            res.rejects.push_back("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    check_rejects(res, max_reject_fraction, path.string());
    std::set<std::string> ids;
    for (const auto& r : res.records)
        if (!ids.insert(r.id).second) throw DataError("duplicate record id '" + r.id + "' in " + path.string());
    return res;
}

ReadResult read_xyz_dir(const fs::path& dir, double max_reject_fraction) {
    if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".xyz") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    ReadResult res;
    for (const auto& f : files) {
        ++res.seen;
        try {
            std::ifstream in(f);
            std::size_t n = 0;
            std::string line;
            if (!(in >> n)) throw DataError("missing atom count");
            std::getline(in, line);
            std::getline(in, line);  // comment
            DatasetRecord r;
            r.id = f.stem().string();
            for (std::size_t i = 0; i < n; ++i) {
                std::string sym;
                double x, y, z;
                if (!(in >> sym >> x >> y >> z)) throw DataError("truncated coordinate block");
                r.graph.add_atom(chem::Atom::of(sym));
                r.conformer.coordinates.push_back({x, y, z});
            }
            fs::path sidecar = f;
            sidecar.replace_extension(".bonds");
            std::ifstream bin(sidecar);
            if (!bin) throw DataError("missing bond sidecar " + sidecar.filename().string());
            while (std::getline(bin, line)) {
                if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
                std::istringstream ls(line);
                int a, b;
                double o;
                if (!(ls >> a >> b >> o)) throw DataError("bad bond line '" + line + "'");
                r.graph.add_bond(a, b, chem::bond_order_from_real(o));
            }
            r.graph.validate();
            r.selfies = selfies::encode(r.graph).str();
            validate_record(r);
            res.records.push_back(std::move(r));
        } catch (const std::exception& e) {
            res.rejects.push_back(f.filename().string() + ": " + e.what());
        }
    }
    check_rejects(res, max_reject_fraction, dir.string());
    return res;
}

void write_jsonl(const std::vector<DatasetRecord>& records, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

Split make_split(const std::vector<DatasetRecord>& records, std::array<double, 3> fractions, std::uint64_t seed) {
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0) {
        throw DataError("split fractions must be non-negative and sum to 1");
    }
    // Group by molecule so conformers of one molecule share a split.
    std::vector<std::string> groups;
    std::map<std::string, std::vector<std::string>> members;
    for (const auto& r : records) {
        auto& m = members[r.selfies];
        if (m.empty()) groups.push_back(r.selfies);
        m.push_back(r.id);
    }
    Rng rng(seed);
    for (std::size_t i = groups.size(); i > 1; --i) std::swap(groups[i - 1], groups[rng.below(i)]);
    const auto n = static_cast<double>(groups.size());
    const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * n));
    const auto n_valid = std::min(groups.size() - n_train, static_cast<std::size_t>(std::llround(fractions[1] * n)));
    Split s;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        auto& dst = i < n_train ? s.train : i < n_train + n_valid ? s.valid : s.test;
        for (const auto& id : members[groups[i]]) dst.push_back(id);
    }
    return s;
}

json split_to_json(const Split& s) { return {{"train", s.train}, {"valid", s.valid}, {"test", s.test}}; }

Split split_from_json(const json& j) {
    Split s;
    s.train = j.at("train").get<std::vector<std::string>>();
    s.valid = j.at("valid").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
}

std::vector<const DatasetRecord*> Dataset::subset(const std::vector<std::string>& ids) const {
    std::map<std::string, const DatasetRecord*> by_id;
    for (const auto& r : records) by_id[r.id] = &r;
    std::vector<const DatasetRecord*> out;
    for (const auto& id : ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("split refers to unknown record '" + id + "'");
        out.push_back(it->second);
    }
    return out;
}

std::vector<const DatasetRecord*> Dataset::part(const std::string& name) const {
    if (name == "train") return subset(split.train);
    if (name == "valid") return subset(split.valid);
    if (name == "test") return subset(split.test);
    throw DataError("unknown split '" + name + "'");
}

InputFormat input_format_from_string(const std::string& s) {
    if (s == "jsonl") return InputFormat::Jsonl;
    if (s == "xyz_dir" || s == "xyz") return InputFormat::XyzDir;
    throw DataError("unknown input format '" + s + "' (expected jsonl or xyz_dir)");
}

IngestSummary ingest(const fs::path& input, InputFormat format, const fs::path& out_dir,
                     std::array<double, 3> fractions, std::uint64_t seed) {
    auto res = format == InputFormat::Jsonl ? read_jsonl(input) : read_xyz_dir(input);
    IngestSummary summary;
    summary.records = res.records.size();
    summary.rejects = res.rejects.size();
    summary.reject_messages = res.rejects;
    summary.split = make_split(res.records, fractions, seed);
    const DatasetPaths paths{out_dir};
    fs::create_directories(out_dir);
    write_jsonl(res.records, paths.records());
    {
        std::ofstream out(paths.splits());
        json j = split_to_json(summary.split);
        j["seed"] = seed;
        j["fractions"] = fractions;
        out << j.dump(2) << '\n';
    }
    Dataset ds{std::move(res.records), summary.split};
    std::set<std::string> hashes;
    for (const auto* r : ds.part("train")) hashes.insert(chem::canonical_hash(r->graph));
    std::ofstream out(paths.reference_hashes());
    for (const auto& h : hashes) out << h << '\n';
    return summary;
}

Dataset load_dataset(const fs::path& dir) {
    const DatasetPaths paths{dir};
    if (!fs::exists(paths.records()) || !fs::exists(paths.splits())) {
        throw DataError("no ingested dataset in " + dir.string() + " (run ingest first)");
    }
    Dataset ds;
    ds.records = read_jsonl(paths.records(), 0.0).records;
    std::ifstream in(paths.splits());
    ds.split = split_from_json(json::parse(in));
    return ds;
}

std::unordered_set<std::string> load_reference_hashes(const fs::path& dir) {
    std::ifstream in(DatasetPaths{dir}.reference_hashes());
    if (!in) throw DataError("missing reference hashes in " + dir.string());
    std::unordered_set<std::string> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.insert(line);
    return out;
}

}  // namespace s3d::data
