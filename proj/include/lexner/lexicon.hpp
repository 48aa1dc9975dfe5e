#pragma once

#include <map>
#include <string>
#include <vector>

#include "lexner/util.hpp"

namespace lexner {

// A lexicon word occurring as a contiguous span of the sentence's units.
// Units are Unicode scalar values for Chinese-style text; the same machinery
// runs over whole tokens for languages that arrive pre-tokenized.
struct MatchedSpan {
    int start = 0;  // inclusive unit index
    int end = 0;    // exclusive
    int word_id = 0;

    friend bool operator==(const MatchedSpan& a, const MatchedSpan& b) {
        return a.start == b.start && a.end == b.end && a.word_id == b.word_id;
    }
};

// Prefix trie over unit sequences. std::map children keep walks
// deterministic.
class Trie {
  public:
    Trie() : nodes_(1) {}

    void insert(const std::vector<std::string>& units, int word_id) {
        int cur = 0;
        for (const auto& u : units) {
            auto it = nodes_[cur].next.find(u);
            if (it == nodes_[cur].next.end()) {
                nodes_.push_back(Node{});
                it = nodes_[cur].next.emplace(u, static_cast<int>(nodes_.size()) - 1).first;
            }
            cur = it->second;
        }
        if (nodes_[cur].word_id < 0) nodes_[cur].word_id = word_id;
    }

    // word id stored at the exact sequence, or -1
    int find(const std::vector<std::string>& units) const {
        int cur = 0;
        for (const auto& u : units) {
            auto it = nodes_[cur].next.find(u);
            if (it == nodes_[cur].next.end()) return -1;
            cur = it->second;
        }
        return nodes_[cur].word_id;
    }

    // Walks from unit position `start`, reporting (end_index, word_id) for
    // every lexicon word beginning there.
    template <class F>
    void walk(const std::vector<std::string>& units, size_t start, F&& on_match) const {
        int cur = 0;
        for (size_t i = start; i < units.size(); ++i) {
            auto it = nodes_[cur].next.find(units[i]);
            if (it == nodes_[cur].next.end()) return;
            cur = it->second;
            if (nodes_[cur].word_id >= 0) on_match(i + 1, nodes_[cur].word_id);
        }
    }

  private:
    struct Node {
        std::map<std::string, int> next;
        int word_id = -1;
    };
    std::vector<Node> nodes_;
};

// Word vocabulary with one dense embedding row per word, trie-indexed.
struct Lexicon {
    std::vector<std::string> words;
    std::vector<std::vector<std::string>> word_units;  // decoded unit sequences
    std::vector<std::vector<double>> vectors;
    int dim = 0;
    Trie trie;

    size_t size() const { return words.size(); }

    int find(const std::string& word) const { return trie.find(utf8_units(word)); }

    // Shared seeded row for units that carry no pre-trained vector.
    std::vector<double> oov_vector(uint64_t seed = 42) const {
        Rng rng(mix_seed(seed, "lexicon-oov"));
        std::vector<double> v(static_cast<size_t>(dim));
        for (auto& x : v) x = rng.uniform(-0.5, 0.5);
        return v;
    }

    const std::vector<double>& vector_of(int word_id) const { return vectors.at(static_cast<size_t>(word_id)); }
};

struct LexiconLoadResult {
    Lexicon lexicon;
    int duplicates = 0;  // later occurrences of an already-seen word, dropped
};

// Text embedding format: optional `<count> <dim>` header line, then
// `word v1 ... v_dim` per line, space separated. First occurrence of a
// duplicated word wins.
inline LexiconLoadResult load_embeddings(std::string_view text) {
    LexiconLoadResult result;
    Lexicon& lex = result.lexicon;
    std::vector<std::string> lines = split_lines(text);

    auto parse_num = [](const std::string& tok, int lineno) {
        try {
            size_t used = 0;
            double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            throw ParseError(lineno, "non-numeric vector component '" + tok + "'");
        }
    };

    int declared_dim = -1;
    size_t first = 0;
    if (!lines.empty()) {
        std::vector<std::string> head = split_ws(lines[0]);
        if (head.size() == 2 && head[0].find_first_not_of("0123456789") == std::string::npos &&
            head[1].find_first_not_of("0123456789") == std::string::npos) {
            declared_dim = std::stoi(head[1]);
            first = 1;
        }
    }

    std::map<std::string, int> seen;
    for (size_t li = first; li < lines.size(); ++li) {
        if (is_blank(lines[li])) continue;
        int lineno = static_cast<int>(li) + 1;
        std::vector<std::string> cols = split_ws(lines[li]);
        if (cols.size() < 2) throw ParseError(lineno, "expected 'word v1 ... vn'");
        int dim = static_cast<int>(cols.size()) - 1;
        if (lex.dim == 0) {
            if (declared_dim > 0 && dim != declared_dim)
                throw ParseError(lineno, "vector has " + std::to_string(dim) + " components, header says " +
                                             std::to_string(declared_dim));
            lex.dim = dim;
        } else if (dim != lex.dim) {
            throw ParseError(lineno, "inconsistent dimension " + std::to_string(dim) + " (expected " +
                                         std::to_string(lex.dim) + ")");
        }
        if (seen.count(cols[0])) {
            ++result.duplicates;
            continue;
        }
        std::vector<double> vec(static_cast<size_t>(dim));
        for (int k = 0; k < dim; ++k) vec[static_cast<size_t>(k)] = parse_num(cols[static_cast<size_t>(k) + 1], lineno);
        int id = static_cast<int>(lex.words.size());
        seen[cols[0]] = id;
        lex.words.push_back(cols[0]);
        lex.word_units.push_back(utf8_units(cols[0]));
        lex.vectors.push_back(std::move(vec));
        lex.trie.insert(lex.word_units.back(), id);
    }
    if (lex.dim == 0 && declared_dim > 0) lex.dim = declared_dim;
    return result;
}

// All lexicon words of length >= 2 occurring as contiguous unit spans,
// sorted by (start, end). Single-unit words never match: they duplicate the
// unit nodes and carry no boundary information.
inline std::vector<MatchedSpan> match_spans(const Lexicon& lex, const std::vector<std::string>& units) {
    std::vector<MatchedSpan> out;
    for (size_t i = 0; i < units.size(); ++i) {
        lex.trie.walk(units, i, [&](size_t end, int word_id) {
            if (end - i >= 2) out.push_back({static_cast<int>(i), static_cast<int>(end), word_id});
        });
    }
    return out;
}

// For each unit position, the ids of all matched words whose span covers it,
// in match order.
inline std::vector<std::vector<int>> char_word_index(const std::vector<MatchedSpan>& matches, int n_chars) {
    std::vector<std::vector<int>> cover(static_cast<size_t>(n_chars));
    for (const auto& m : matches)
        for (int k = m.start; k < m.end; ++k) cover[static_cast<size_t>(k)].push_back(m.word_id);
    return cover;
}

}  // namespace lexner
