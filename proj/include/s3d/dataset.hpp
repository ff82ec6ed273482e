#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "s3d/chem.hpp"

namespace s3d::data {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DatasetRecord {
    std::string id;
    std::string selfies;
    chem::MolecularGraph2D graph;
    chem::Conformer conformer;
    std::map<std::string, double> properties;
};

// {"id", "selfies", "atoms": [[sym, charge]], "bonds": [[i, j, order]],
//  "coords": [[x, y, z]], "properties": {...}}. Aromatic order is 1.5.
nlohmann::json record_to_json(const DatasetRecord& r);
// Parses and validates one record. A missing selfies is produced by the
// encoder; a present one must decode to the same canonical hash.
DatasetRecord record_from_json(const nlohmann::json& j);
// The record invariants: coordinate count, finite values, valid graph and a
// selfies string that decodes to an isomorphic graph.
void validate_record(const DatasetRecord& r);

struct ReadResult {
    std::vector<DatasetRecord> records;
    std::vector<std::string> rejects;  // "line N: reason"
    std::size_t seen = 0;
};

// Fails when more than max_reject_fraction of the records are rejected.
ReadResult read_jsonl(const std::filesystem::path& path, double max_reject_fraction = 0.01);
// <name>.xyz files, each with a <name>.bonds sidecar of "i j order" lines.
ReadResult read_xyz_dir(const std::filesystem::path& dir, double max_reject_fraction = 0.01);
void write_jsonl(const std::vector<DatasetRecord>& records, const std::filesystem::path& path);

struct Split {
    std::vector<std::string> train, valid, test;
};

// Seeded shuffle, then contiguous train/valid/test slices. Records sharing a
// selfies string land in the same split.
Split make_split(const std::vector<DatasetRecord>& records, std::array<double, 3> fractions, std::uint64_t seed);
nlohmann::json split_to_json(const Split& s);
Split split_from_json(const nlohmann::json& j);

struct Dataset {
    std::vector<DatasetRecord> records;
    Split split;

    std::vector<const DatasetRecord*> subset(const std::vector<std::string>& ids) const;
    std::vector<const DatasetRecord*> part(const std::string& name) const;  // "train" | "valid" | "test"
};

// Layout of an ingested dataset directory.
struct DatasetPaths {
    std::filesystem::path dir;
    std::filesystem::path records() const { return dir / "records.jsonl"; }
    std::filesystem::path splits() const { return dir / "splits.json"; }
    std::filesystem::path reference_hashes() const { return dir / "reference_hashes.txt"; }
};

enum class InputFormat { Jsonl, XyzDir };
InputFormat input_format_from_string(const std::string& s);

struct IngestSummary {
    std::size_t records = 0;
    std::size_t rejects = 0;
    std::vector<std::string> reject_messages;
    Split split;
};

IngestSummary ingest(const std::filesystem::path& input, InputFormat format, const std::filesystem::path& out_dir,
                     std::array<double, 3> fractions, std::uint64_t seed);
Dataset load_dataset(const std::filesystem::path& dir);
std::unordered_set<std::string> load_reference_hashes(const std::filesystem::path& dir);

}  // namespace s3d::data
