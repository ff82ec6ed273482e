#include "s3d/selfies.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <functional>
#include <optional>

namespace s3d::selfies {

using chem::Atom;
using chem::BondOrder;
using chem::MolecularGraph2D;

namespace {

constexpr std::array<std::string_view, 16> kIndexAlphabet = {
    "[C]",       "[Ring1]",  "[Ring2]",   "[Branch1]", "[=Branch1]", "[#Branch1]", "[Branch2]", "[=Branch2]",
    "[#Branch2]", "[O]",     "[N]",       "[=N]",      "[=C]",       "[#C]",       "[S]",       "[P]",
};

struct ChargedForm {
    std::string_view symbol;
    int charge;
};

constexpr std::array<ChargedForm, 9> kChargedForms = {{
    {"C", 1}, {"C", -1}, {"N", 1}, {"N", -1}, {"O", 1}, {"O", -1}, {"S", 1}, {"S", -1}, {"P", 1},
}};

std::string_view bond_prefix(BondOrder order) {
    switch (order) {
        case BondOrder::Single: return "";
        case BondOrder::Double: return "=";
        case BondOrder::Triple: return "#";
        case BondOrder::Aromatic: return ":";
    }
    return "";
}

std::optional<BondOrder> prefix_order(char c) {
    switch (c) {
        case '=': return BondOrder::Double;
        case '#': return BondOrder::Triple;
        case ':': return BondOrder::Aromatic;
        default: return std::nullopt;
    }
}

std::string charge_text(int charge) {
    if (charge == 0) return "";
    return (charge > 0 ? "+" : "-") + std::to_string(std::abs(charge));
}

std::string atom_raw(std::string_view symbol, int charge, BondOrder bond) {
    return "[" + std::string(bond_prefix(bond)) + std::string(symbol) + charge_text(charge) + "]";
}

std::vector<SelfiesToken> builtin_tokens() {
    std::vector<SelfiesToken> tokens;
    tokens.push_back({TokenKind::Pad, "[PAD]"});
    tokens.push_back({TokenKind::Bos, "[BOS]"});
    tokens.push_back({TokenKind::Eos, "[EOS]"});

    auto add_atom_forms = [&](int element, int charge) {
        const Atom atom{element, charge};
        const int cap = 2 * chem::max_valence(atom);
        if (cap == 0) return;
        for (auto order : {BondOrder::Single, BondOrder::Double, BondOrder::Triple, BondOrder::Aromatic}) {
            const int need = chem::half_units(order);
            if (order != BondOrder::Single && need > cap) continue;
            if (order == BondOrder::Aromatic && cap < 4) continue;
            tokens.push_back({TokenKind::Atom, atom_raw(atom.symbol(), charge, order), element, charge, order, 0});
        }
    };
    for (std::size_t e = 0; e < chem::element_count(); ++e) {
        add_atom_forms(static_cast<int>(e), 0);
    }
    for (const auto& form : kChargedForms) {
        add_atom_forms(chem::element_index(form.symbol), form.charge);
    }
    for (int length : {1, 2}) {
        for (auto order : {BondOrder::Single, BondOrder::Double, BondOrder::Triple, BondOrder::Aromatic}) {
            const std::string n = std::to_string(length);
            tokens.push_back({TokenKind::Branch, "[" + std::string(bond_prefix(order)) + "Branch" + n + "]", -1, 0, order, length});
        }
        for (auto order : {BondOrder::Single, BondOrder::Double, BondOrder::Triple, BondOrder::Aromatic}) {
            const std::string n = std::to_string(length);
            tokens.push_back({TokenKind::Ring, "[" + std::string(bond_prefix(order)) + "Ring" + n + "]", -1, 0, order, length});
        }
    }
    return tokens;
}

}  // namespace

std::optional<SelfiesToken> parse_symbol(std::string_view raw) {
    if (raw.size() < 3 || raw.front() != '[' || raw.back() != ']') {
        return std::nullopt;
    }
    std::string_view inner = raw.substr(1, raw.size() - 2);
    if (inner == "PAD") return SelfiesToken{TokenKind::Pad, std::string(raw)};
    if (inner == "BOS") return SelfiesToken{TokenKind::Bos, std::string(raw)};
    if (inner == "EOS") return SelfiesToken{TokenKind::Eos, std::string(raw)};

    BondOrder order = BondOrder::Single;
    if (auto p = prefix_order(inner.front())) {
        order = *p;
        inner.remove_prefix(1);
    }
    for (auto [word, kind] : {std::pair{std::string_view{"Branch"}, TokenKind::Branch},
                              std::pair{std::string_view{"Ring"}, TokenKind::Ring}}) {
        if (inner.size() == word.size() + 1 && inner.substr(0, word.size()) == word) {
            const char digit = inner.back();
            if (digit != '1' && digit != '2') return std::nullopt;
            return SelfiesToken{kind, std::string(raw), -1, 0, order, digit - '0'};
        }
    }
    std::size_t i = 0;
    if (i >= inner.size() || !std::isupper(static_cast<unsigned char>(inner[i]))) return std::nullopt;
    ++i;
    while (i < inner.size() && std::islower(static_cast<unsigned char>(inner[i]))) ++i;
    const auto element = chem::find_element(inner.substr(0, i));
    if (!element) return std::nullopt;
    int charge = 0;
    if (i < inner.size()) {
        const char sign = inner[i];
        if (sign != '+' && sign != '-') return std::nullopt;
        ++i;
        if (i >= inner.size()) return std::nullopt;
        int mag = 0;
        for (; i < inner.size(); ++i) {
            if (!std::isdigit(static_cast<unsigned char>(inner[i]))) return std::nullopt;
            mag = mag * 10 + (inner[i] - '0');
        }
        charge = sign == '+' ? mag : -mag;
    }
    return SelfiesToken{TokenKind::Atom, std::string(raw), *element, charge, order, 0};
}

// ---- Vocabulary ----------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<SelfiesToken> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!ids_.emplace(tokens_[i].raw, static_cast<int>(i)).second) {
            throw SelfiesError("duplicate vocabulary token " + tokens_[i].raw);
        }
    }
    for (std::string_view special : {"[PAD]", "[BOS]", "[EOS]"}) {
        if (!ids_.contains(std::string(special))) {
            throw SelfiesError("vocabulary lacks " + std::string(special));
        }
    }
}

const Vocabulary& Vocabulary::builtin() {
    static const Vocabulary kBuiltin(builtin_tokens());
    return kBuiltin;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw SelfiesError("cannot open vocabulary file " + path.string());
    }
    std::vector<SelfiesToken> tokens;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto tok = parse_symbol(line);
        if (!tok) {
            throw SelfiesError(path.string() + ":" + std::to_string(line_no) + ": unknown symbol '" + line + "'");
        }
        tokens.push_back(std::move(*tok));
    }
    return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw SelfiesError("cannot write vocabulary file " + path.string());
    }
    for (const auto& t : tokens_) {
        out << t.raw << '\n';
    }
}

const SelfiesToken& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw SelfiesError("vocabulary id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::optional<int> Vocabulary::find(std::string_view raw) const {
    auto it = ids_.find(std::string(raw));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

int Vocabulary::id(std::string_view raw) const {
    if (auto i = find(raw)) return *i;
    throw SelfiesError("unknown token symbol " + std::string(raw));
}

// ---- streams -------------------------------------------------------------------

std::string SelfiesTokenStream::str() const {
    std::string s;
    for (const auto& t : tokens) s += t.raw;
    return s;
}

SelfiesTokenStream tokenize(std::string_view text, const Vocabulary& vocab) {
    SelfiesTokenStream out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '[') {
            throw SelfiesError("unbalanced brackets: expected '[' at offset " + std::to_string(i));
        }
        const auto close = text.find(']', i);
        const auto reopen = text.find('[', i + 1);
        if (close == std::string_view::npos || (reopen != std::string_view::npos && reopen < close)) {
            throw SelfiesError("unbalanced brackets: '[' at offset " + std::to_string(i) + " is never closed");
        }
        const std::string_view raw = text.substr(i, close - i + 1);
        const auto id = vocab.find(raw);
        if (!id) {
            throw SelfiesError("unknown token symbol " + std::string(raw) + " at offset " + std::to_string(i));
        }
        out.tokens.push_back(vocab.token(*id));
        out.vocab_ids.push_back(*id);
        i = close + 1;
    }
    return out;
}

SelfiesTokenStream from_ids(std::span<const int> ids, const Vocabulary& vocab) {
    SelfiesTokenStream out;
    for (int id : ids) {
        out.tokens.push_back(vocab.token(id));
        out.vocab_ids.push_back(id);
    }
    return out;
}

int index_digit(std::string_view raw) {
    for (std::size_t i = 0; i < kIndexAlphabet.size(); ++i) {
        if (kIndexAlphabet[i] == raw) return static_cast<int>(i);
    }
    return 0;
}

int hydrogen_fill(const Atom& atom, int bond_half_units) {
    auto valences = chem::allowed_valences(atom);
    std::sort(valences.begin(), valences.end());
    for (int v : valences) {
        if (2 * v >= bond_half_units) {
            return (2 * v - bond_half_units) / 2;
        }
    }
    return 0;
}

// ---- decoding --------------------------------------------------------------------

namespace {

// Largest admissible bond not exceeding the request and the available budget
// (half units). Aromatic requests fall back to single; integer requests never
// become aromatic.
std::optional<BondOrder> clamp_order(BondOrder requested, int available) {
    if (requested == BondOrder::Aromatic) {
        if (available >= 3) return BondOrder::Aromatic;
        if (available >= 2) return BondOrder::Single;
        return std::nullopt;
    }
    const int want = std::min(chem::half_units(requested), available);
    if (want >= 6) return BondOrder::Triple;
    if (want >= 4) return BondOrder::Double;
    if (want >= 2) return BondOrder::Single;
    return std::nullopt;
}

class Derivation {
public:
    explicit Derivation(const std::vector<SelfiesToken>& tokens) : tokens_(tokens) {}

    MolecularGraph2D run() {
        derive(-1, 0, tokens_.size());
        settle_aromatic();
        fill_hydrogens();
        return std::move(mol_);
    }

private:
    int add_atom(const SelfiesToken& t) {
        const Atom atom{t.element, t.charge};
        remaining_.push_back(2 * chem::max_valence(atom));
        return mol_.add_atom(atom);
    }

    void add_bond(int a, int b, BondOrder order) {
        mol_.add_bond(a, b, order);
        remaining_[static_cast<std::size_t>(a)] -= chem::half_units(order);
        remaining_[static_cast<std::size_t>(b)] -= chem::half_units(order);
    }

    int remaining(int atom) const { return remaining_[static_cast<std::size_t>(atom)]; }

    std::size_t read_index(int length, std::size_t& consumed) {
        std::size_t q = 0;
        for (int k = 0; k < length && pos_ < tokens_.size(); ++k) {
            q = q * 16 + static_cast<std::size_t>(index_digit(tokens_[pos_].raw));
            ++pos_;
            ++consumed;
        }
        return q;
    }

    // Derives a chain hanging off `root` (-1 at top level). The first bond
    // from the root may use at most `init_state` half units.
    void derive(int root, int init_state, std::size_t limit) {
        int prev = root;
        bool first = true;
        std::size_t consumed = 0;
        while (!stopped_ && pos_ < tokens_.size() && consumed < limit) {
            const SelfiesToken& t = tokens_[pos_++];
            ++consumed;
            switch (t.kind) {
                case TokenKind::Eos:
                    stopped_ = true;
                    break;
                case TokenKind::Pad:
                case TokenKind::Bos:
                    break;
                case TokenKind::Atom: {
                    if (prev < 0) {
                        prev = add_atom(t);
                        first = false;
                        break;
                    }
                    const Atom atom{t.element, t.charge};
                    const int budget = std::min(first ? init_state : remaining(prev), 2 * chem::max_valence(atom));
                    const auto order = clamp_order(t.bond, budget);
                    if (!order) break;
                    const int next = add_atom(t);
                    add_bond(prev, next, *order);
                    prev = next;
                    first = false;
                    break;
                }
                case TokenKind::Branch: {
                    if (first || remaining(prev) < 4) break;
                    const std::size_t q = read_index(t.index_length, consumed);
                    const int branch_init = std::min(remaining(prev) - 2, chem::half_units(t.bond));
                    const std::size_t before = pos_;
                    derive(prev, branch_init, q + 1);
                    consumed += pos_ - before;
                    break;
                }
                case TokenKind::Ring: {
                    if (first || remaining(prev) == 0) break;
                    const std::size_t q = read_index(t.index_length, consumed);
                    if (prev == 0) break;
                    const int target = prev - static_cast<int>(q % static_cast<std::size_t>(prev)) - 1;
                    if (mol_.bond_between(target, prev)) break;
                    const auto order = clamp_order(t.bond, std::min(remaining(prev), remaining(target)));
                    if (!order) break;
                    add_bond(prev, target, *order);
                    break;
                }
            }
        }
    }

    // Aromatic bonds survive only on simple cycles where each atom carries
    // exactly two of them; anything else (chain ends, fused junctions) would
    // leave a half-integer valence and becomes single, latest bond first.
    void settle_aromatic() {
        std::vector<chem::Bond> bonds = mol_.bonds();
        bool any = false;
        for (const auto& b : bonds) any = any || b.order == BondOrder::Aromatic;
        if (!any) return;
        for (bool changed = true; changed;) {
            changed = false;
            std::vector<int> degree(mol_.atom_count(), 0);
            for (const auto& b : bonds) {
                if (b.order != BondOrder::Aromatic) continue;
                ++degree[static_cast<std::size_t>(b.a)];
                ++degree[static_cast<std::size_t>(b.b)];
            }
            for (auto it = bonds.rbegin(); it != bonds.rend(); ++it) {
                if (it->order == BondOrder::Aromatic &&
                    (degree[static_cast<std::size_t>(it->a)] != 2 || degree[static_cast<std::size_t>(it->b)] != 2)) {
                    it->order = BondOrder::Single;
                    changed = true;
                    break;
                }
            }
        }
        MolecularGraph2D settled;
        for (const auto& a : mol_.atoms()) settled.add_atom(a);
        for (const auto& b : bonds) settled.add_bond(b.a, b.b, b.order);
        mol_ = std::move(settled);
    }

    void fill_hydrogens() {
        const int hydrogen = chem::element_index("H");
        const auto valence = mol_.valence_half_units();
        const std::size_t heavy = mol_.atom_count();
        for (std::size_t i = 0; i < heavy; ++i) {
            const int n_h = hydrogen_fill(mol_.atoms()[i], valence[i]);
            for (int k = 0; k < n_h; ++k) {
                const int h = mol_.add_atom({hydrogen, 0});
                mol_.add_bond(static_cast<int>(i), h, BondOrder::Single);
            }
        }
    }

    const std::vector<SelfiesToken>& tokens_;
    std::size_t pos_ = 0;
    bool stopped_ = false;
    MolecularGraph2D mol_;
    std::vector<int> remaining_;
};

}  // namespace

MolecularGraph2D decode(const SelfiesTokenStream& stream) {
    return Derivation(stream.tokens).run();
}

MolecularGraph2D decode(std::string_view text) {
    return decode(tokenize(text));
}

// ---- encoding --------------------------------------------------------------------

namespace {

class Writer {
public:
    Writer(const MolecularGraph2D& graph, const Vocabulary& vocab)
        : graph_(graph), vocab_(vocab), adj_(graph.adjacency()), colors_(chem::canonical_colors(graph)) {}

    SelfiesTokenStream run() {
        classify_hydrogens();
        int root = -1;
        for (std::size_t i = 0; i < graph_.atom_count(); ++i) {
            if (!explicit_[i]) continue;
            if (root < 0 || colors_[i] < colors_[static_cast<std::size_t>(root)]) {
                root = static_cast<int>(i);
            }
        }
        visited_.assign(graph_.atom_count(), false);
        order_index_.assign(graph_.atom_count(), -1);
        const auto raw = visit(root, -1, std::nullopt);
        SelfiesTokenStream out;
        for (const auto& r : raw) {
            const int id = vocab_.id(r);
            out.tokens.push_back(vocab_.token(id));
            out.vocab_ids.push_back(id);
        }
        return out;
    }

private:
    bool implicit_candidate(int atom) const {
        const auto a = static_cast<std::size_t>(atom);
        if (!graph_.atoms()[a].is_hydrogen() || adj_[a].size() != 1) return false;
        const auto& nb = adj_[a].front();
        return nb.order == BondOrder::Single && !graph_.atom(nb.atom).is_hydrogen();
    }

    void classify_hydrogens() {
        const auto valence = graph_.valence_half_units();
        explicit_.assign(graph_.atom_count(), true);
        for (std::size_t i = 0; i < graph_.atom_count(); ++i) {
            if (implicit_candidate(static_cast<int>(i))) continue;
            std::vector<int> candidates;
            for (const auto& nb : adj_[i]) {
                if (implicit_candidate(nb.atom)) candidates.push_back(nb.atom);
            }
            std::sort(candidates.begin(), candidates.end());
            const int n = static_cast<int>(candidates.size());
            const int base = valence[i] - 2 * n;
            int keep_explicit = -1;
            for (int k = 0; k <= n; ++k) {
                if (hydrogen_fill(graph_.atoms()[i], base + 2 * k) == n - k) {
                    keep_explicit = k;
                    break;
                }
            }
            if (keep_explicit < 0) {
                throw SelfiesError("atom " + std::to_string(i) + " (" + std::string(graph_.atoms()[i].symbol()) +
                                   ") is not hydrogen-complete; cannot encode");
            }
            for (int k = keep_explicit; k < n; ++k) {
                explicit_[static_cast<std::size_t>(candidates[static_cast<std::size_t>(k)])] = false;
            }
        }
    }

    std::vector<chem::Neighbor> ordered_neighbors(int atom) const {
        std::vector<chem::Neighbor> nbs;
        for (const auto& nb : adj_[static_cast<std::size_t>(atom)]) {
            if (explicit_[static_cast<std::size_t>(nb.atom)]) nbs.push_back(nb);
        }
        std::sort(nbs.begin(), nbs.end(), [&](const chem::Neighbor& x, const chem::Neighbor& y) {
            const auto cx = colors_[static_cast<std::size_t>(x.atom)];
            const auto cy = colors_[static_cast<std::size_t>(y.atom)];
            return cx != cy ? cx < cy : x.atom < y.atom;
        });
        return nbs;
    }

    std::vector<std::string> index_symbols(std::size_t q, int length) const {
        std::vector<std::string> out(static_cast<std::size_t>(length));
        for (int k = length - 1; k >= 0; --k) {
            out[static_cast<std::size_t>(k)] = std::string(kIndexAlphabet[q % 16]);
            q /= 16;
        }
        return out;
    }

    static int length_for(std::size_t q) {
        if (q < 16) return 1;
        if (q < 256) return 2;
        throw SelfiesError("branch or ring span " + std::to_string(q + 1) + " exceeds the two-symbol index range");
    }

    std::vector<std::string> visit(int v, int parent, std::optional<BondOrder> bond) {
        using chem::Neighbor;
        visited_[static_cast<std::size_t>(v)] = true;
        order_index_[static_cast<std::size_t>(v)] = next_index_++;
        const Atom& atom = graph_.atom(v);
        std::vector<std::string> out;
        out.push_back(atom_raw(atom.symbol(), atom.formal_charge, bond.value_or(BondOrder::Single)));

        const auto nbs = ordered_neighbors(v);
        for (const auto& nb : nbs) {
            if (nb.atom == parent || !visited_[static_cast<std::size_t>(nb.atom)]) continue;
            const auto q = static_cast<std::size_t>(order_index_[static_cast<std::size_t>(v)] -
                                                    order_index_[static_cast<std::size_t>(nb.atom)] - 1);
            const int len = length_for(q);
            out.push_back("[" + std::string(bond_prefix(nb.order)) + "Ring" + std::to_string(len) + "]");
            for (auto& s : index_symbols(q, len)) out.push_back(std::move(s));
        }

        std::vector<std::pair<BondOrder, std::vector<std::string>>> children;
        for (const auto& nb : nbs) {
            if (visited_[static_cast<std::size_t>(nb.atom)]) continue;
            children.emplace_back(nb.order, visit(nb.atom, v, nb.order));
        }
        for (std::size_t c = 0; c < children.size(); ++c) {
            auto& [order, sub] = children[c];
            if (c + 1 < children.size()) {
                const std::size_t q = sub.size() - 1;
                const int len = length_for(q);
                out.push_back("[" + std::string(bond_prefix(order)) + "Branch" + std::to_string(len) + "]");
                for (auto& s : index_symbols(q, len)) out.push_back(std::move(s));
            }
            for (auto& s : sub) out.push_back(std::move(s));
        }
        return out;
    }

    using Neighbor = chem::Neighbor;
    const MolecularGraph2D& graph_;
    const Vocabulary& vocab_;
    std::vector<std::vector<Neighbor>> adj_;
    std::vector<std::uint64_t> colors_;
    std::vector<bool> explicit_;
    std::vector<bool> visited_;
    std::vector<int> order_index_;
    int next_index_ = 0;
};

}  // namespace

SelfiesTokenStream encode(const MolecularGraph2D& graph, const Vocabulary& vocab) {
    graph.validate();
    if (graph.atom_count() == 0) {
        throw SelfiesError("cannot encode an empty graph");
    }
    if (graph.component_count() != 1) {
        throw SelfiesError("cannot encode a disconnected graph (" + std::to_string(graph.component_count()) +
                           " components)");
    }
    if (!chem::valences_admissible(graph)) {
        throw SelfiesError("cannot encode a graph with an over-valent atom");
    }
    return Writer(graph, vocab).run();
}

}  // namespace s3d::selfies
