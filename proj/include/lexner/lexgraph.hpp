#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lexner/compute.hpp"
#include "lexner/lexicon.hpp"
#include "lexner/util.hpp"

namespace lexner {

// Node layout shared by all three graphs: nodes 0..n_chars-1 are the
// sentence units in order, followed by one node per matched word in
// (start, end) match order. Adjacencies are symmetric 0/1 with zero
// diagonal; self-loops only appear during normalization.
struct LexGraphSet {
    int n_chars = 0;
    int n_words = 0;
    Tensor adj_c, adj_t, adj_l;

    int n_nodes() const { return n_chars + n_words; }
};

namespace graphdetail {

inline Tensor empty_adj(int n_nodes) { return Tensor(n_nodes, n_nodes); }

inline void link(Tensor& a, int i, int j) {
    if (i == j) return;
    a.at(i, j) = 1.0;
    a.at(j, i) = 1.0;
}

inline void add_char_chain(Tensor& a, int n_chars) {
    for (int k = 0; k + 1 < n_chars; ++k) link(a, k, k + 1);
}

}  // namespace graphdetail

// Containing graph: each word node connects to every unit it covers.
inline Tensor build_c_graph(const std::vector<MatchedSpan>& matches, int n_chars) {
    Tensor a = graphdetail::empty_adj(n_chars + static_cast<int>(matches.size()));
    for (size_t w = 0; w < matches.size(); ++w) {
        int node = n_chars + static_cast<int>(w);
        for (int k = matches[w].start; k < matches[w].end; ++k) graphdetail::link(a, node, k);
    }
    return a;
}

// Transition graph: the unit chain, each word node linked to its nearest
// context units (the unit just before the span and the unit just after),
// and word-to-word links wherever one match starts exactly where another
// ends.
inline Tensor build_t_graph(const std::vector<MatchedSpan>& matches, int n_chars,
                            bool word_word_edges = true) {
    Tensor a = graphdetail::empty_adj(n_chars + static_cast<int>(matches.size()));
    graphdetail::add_char_chain(a, n_chars);
    for (size_t w = 0; w < matches.size(); ++w) {
        int node = n_chars + static_cast<int>(w);
        if (matches[w].start > 0) graphdetail::link(a, node, matches[w].start - 1);
        if (matches[w].end < n_chars) graphdetail::link(a, node, matches[w].end);
    }
    if (word_word_edges)
        for (size_t u = 0; u < matches.size(); ++u)
            for (size_t v = 0; v < matches.size(); ++v)
                if (matches[u].end == matches[v].start)
                    graphdetail::link(a, n_chars + static_cast<int>(u), n_chars + static_cast<int>(v));
    return a;
}

// Lattice graph: the unit chain plus a shortcut from each word node to its
// first and last covered unit.
inline Tensor build_l_graph(const std::vector<MatchedSpan>& matches, int n_chars) {
    Tensor a = graphdetail::empty_adj(n_chars + static_cast<int>(matches.size()));
    graphdetail::add_char_chain(a, n_chars);
    for (size_t w = 0; w < matches.size(); ++w) {
        int node = n_chars + static_cast<int>(w);
        graphdetail::link(a, node, matches[w].start);
        graphdetail::link(a, node, matches[w].end - 1);
    }
    return a;
}

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I. Computed by
// scaling each entry with the two endpoint degrees.
inline Tensor normalize_adjacency(const Tensor& a) {
    if (a.rows() != a.cols()) throw ValidationError("adjacency must be square");
    int n = a.rows();
    std::vector<double> inv_sqrt_deg(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double deg = 1.0;  // self loop
        for (int j = 0; j < n; ++j) deg += a.at(i, j);
        inv_sqrt_deg[static_cast<size_t>(i)] = 1.0 / std::sqrt(deg);
    }
    Tensor out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double v = a.at(i, j) + (i == j ? 1.0 : 0.0);
            if (v != 0.0)
                out.at(i, j) = v * inv_sqrt_deg[static_cast<size_t>(i)] * inv_sqrt_deg[static_cast<size_t>(j)];
        }
    return out;
}

// Builds the full graph set for one sentence (selected graphs only; the
// others stay undefined).
inline LexGraphSet build_graphs(const std::vector<MatchedSpan>& matches, int n_chars,
                                const std::string& graphs = "CTL", bool t_word_word = true) {
    LexGraphSet set;
    set.n_chars = n_chars;
    set.n_words = static_cast<int>(matches.size());
    for (char g : graphs) {
        switch (g) {
            case 'C': set.adj_c = build_c_graph(matches, n_chars); break;
            case 'T': set.adj_t = build_t_graph(matches, n_chars, t_word_word); break;
            case 'L': set.adj_l = build_l_graph(matches, n_chars); break;
            default: throw ValidationError(std::string("unknown graph '") + g + "', expected C, T or L");
        }
    }
    return set;
}

}  // namespace lexner
