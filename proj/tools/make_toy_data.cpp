// Writes the toy corpora and the vocabulary file shipped under data/.
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "s3d/selfies.hpp"
#include "s3d/toy_data.hpp"

using namespace s3d;

int main(int argc, char** argv) {
    CLI::App app{"Generate toy molecule corpora"};
    std::string out = "data";
    std::size_t n_corpus = 1000, corpus_conformers = 2, n_overfit = 16, overfit_conformers = 8;
    std::uint64_t seed = 20240601;
    app.add_option("-o,--out", out, "Output directory");
    app.add_option("--molecules", n_corpus, "Distinct molecules in the main corpus");
    app.add_option("--conformers", corpus_conformers, "Conformers per molecule in the main corpus");
    app.add_option("--overfit", n_overfit, "Molecules in the overfit set");
    app.add_option("--overfit-conformers", overfit_conformers, "Conformers per overfit molecule");
    app.add_option("--seed", seed, "Generator seed");
    CLI11_PARSE(app, argc, argv);

    std::filesystem::create_directories(out);
    const auto corpus = toy::make_corpus(n_corpus, corpus_conformers, seed);
    data::write_jsonl(corpus, std::filesystem::path(out) / "toy_corpus.jsonl");

    toy::MoleculeOptions small;
    small.min_heavy = 3;
    small.max_heavy = 7;
    small.aromatic_fraction = 0.0;
    small.triple_bond_rate = 0.02;
    const auto overfit = toy::make_corpus(n_overfit, overfit_conformers, seed + 1, small);
    data::write_jsonl(overfit, std::filesystem::path(out) / "overfit16.jsonl");

    selfies::Vocabulary::builtin().save(std::filesystem::path(out) / "selfies_vocab_v1.txt");
    std::cout << "corpus " << corpus.size() << " records, overfit " << overfit.size() << " records\n";
}
