#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "s3d/chem.hpp"

namespace s3d::selfies {

class SelfiesError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class TokenKind { Atom, Branch, Ring, Pad, Bos, Eos };

struct SelfiesToken {
    TokenKind kind = TokenKind::Pad;
    std::string raw;
    int element = -1;  // atoms only
    int charge = 0;    // atoms only
    // Bond to the parent atom (atoms), to the branch root (branches) or the ring partner.
    chem::BondOrder bond = chem::BondOrder::Single;
    int index_length = 0;  // branches and rings: number of index symbols that follow

    friend bool operator==(const SelfiesToken&, const SelfiesToken&) = default;
};

// Parses one bracketed symbol, e.g. "[=N+1]", "[Branch2]", "[:Ring1]".
// Returns nullopt for syntactically well-formed but unknown symbols.
std::optional<SelfiesToken> parse_symbol(std::string_view raw);

class Vocabulary {
public:
    static constexpr std::string_view kVersion = "v1";

    static const Vocabulary& builtin();
    // One token per line; line number (from 0) is the id.
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const noexcept { return tokens_.size(); }
    const SelfiesToken& token(int id) const;
    std::optional<int> find(std::string_view raw) const;
    int id(std::string_view raw) const;

    int pad_id() const { return id("[PAD]"); }
    int bos_id() const { return id("[BOS]"); }
    int eos_id() const { return id("[EOS]"); }

    const std::vector<SelfiesToken>& tokens() const noexcept { return tokens_; }
    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    explicit Vocabulary(std::vector<SelfiesToken> tokens);
    std::vector<SelfiesToken> tokens_;
    std::unordered_map<std::string, int> ids_;
};

struct SelfiesTokenStream {
    std::vector<SelfiesToken> tokens;
    std::vector<int> vocab_ids;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }
    std::string str() const;
};

// Exact partition of bracketed text into vocabulary tokens.
SelfiesTokenStream tokenize(std::string_view text, const Vocabulary& vocab = Vocabulary::builtin());
SelfiesTokenStream from_ids(std::span<const int> ids, const Vocabulary& vocab = Vocabulary::builtin());

// Index value of a symbol when read as a ring/branch size digit (base 16).
int index_digit(std::string_view raw);

// Total: every stream yields a graph whose atoms stay within their maximum
// valence, hydrogen-completed. Never throws.
chem::MolecularGraph2D decode(const SelfiesTokenStream& stream);
chem::MolecularGraph2D decode(std::string_view text);

// Depth-first writer rooted at the atom with the smallest canonical color.
// Requires a valid, connected, hydrogen-complete graph.
SelfiesTokenStream encode(const chem::MolecularGraph2D& graph, const Vocabulary& vocab = Vocabulary::builtin());

// Number of implicit hydrogens decode would add to an atom with this bond sum.
int hydrogen_fill(const chem::Atom& atom, int bond_half_units);

}  // namespace s3d::selfies
