#include <cmath>
#include <vector>

#include "doctest.h"
#include "lexner/lexgraph.hpp"
#include "oracles.hpp"

using namespace lexner;

namespace {

bool symmetric_zero_diag(const Tensor& a) {
    for (int i = 0; i < a.rows(); ++i) {
        if (a.at(i, i) != 0.0) return false;
        for (int j = 0; j < a.cols(); ++j)
            if (a.at(i, j) != a.at(j, i)) return false;
    }
    return true;
}

double degree(const Tensor& a, int node) {
    double d = 0.0;
    for (int j = 0; j < a.cols(); ++j) d += a.at(node, j);
    return d;
}

// random match set over a sentence of n chars (valid spans, len >= 2)
std::vector<MatchedSpan> random_matches(Rng& rng, int n_chars) {
    std::vector<MatchedSpan> ms;
    int n = static_cast<int>(rng.below(6));
    for (int k = 0; k < n; ++k) {
        if (n_chars < 2) break;
        int len = 2 + static_cast<int>(rng.below(3));
        if (len > n_chars) len = 2;
        int start = static_cast<int>(rng.below(static_cast<uint64_t>(n_chars - len + 1)));
        ms.push_back({start, start + len, k});
    }
    std::sort(ms.begin(), ms.end(), [](const MatchedSpan& a, const MatchedSpan& b) {
        return a.start != b.start ? a.start < b.start : a.end < b.end;
    });
    return ms;
}

}  // namespace

TEST_CASE("c-graph: definition traces") {
    CHECK(build_c_graph({}, 3).frobenius_norm() == 0.0);

    Tensor a = build_c_graph({{0, 2, 0}}, 2);
    REQUIRE(a.rows() == 3);
    CHECK(a.at(2, 0) == 1.0);
    CHECK(a.at(2, 1) == 1.0);
    CHECK(degree(a, 2) == 2.0);

    // word degree == span length
    Tensor b = build_c_graph({{1, 4, 0}, {0, 2, 1}}, 5);
    CHECK(degree(b, 5) == 3.0);
    CHECK(degree(b, 6) == 2.0);
}

TEST_CASE("t-graph: chain, neighbor and transition edges") {
    Tensor chain = build_t_graph({}, 3);
    CHECK(chain.at(0, 1) == 1.0);
    CHECK(chain.at(1, 2) == 1.0);
    CHECK(chain.at(0, 2) == 0.0);
    CHECK(chain.frobenius_norm() == doctest::Approx(2.0));  // 2 edges, 4 symmetric entries

    // matches (0,2) and (2,4) on 4 chars: word nodes 4 and 5
    Tensor a = build_t_graph({{0, 2, 0}, {2, 4, 1}}, 4);
    CHECK(a.at(4, 2) == 1.0);   // word (0,2) -> char just after
    CHECK(a.at(4, 0) == 0.0);   // no char before position 0
    CHECK(a.at(5, 1) == 1.0);   // word (2,4) -> char just before
    CHECK(a.at(5, 3) == 0.0);   // no char after position 3 inside the sentence
    CHECK(a.at(4, 5) == 1.0);   // transition word->word
    CHECK(a.at(5, 4) == 1.0);

    // full-sentence span: rule (b) adds nothing at the boundary
    Tensor f = build_t_graph({{0, 3, 0}}, 3);
    CHECK(degree(f, 3) == 0.0);

    // word-word edges off
    Tensor no_ww = build_t_graph({{0, 2, 0}, {2, 4, 1}}, 4, false);
    CHECK(no_ww.at(4, 5) == 0.0);
}

TEST_CASE("l-graph: chain plus boundary shortcut") {
    Tensor chain = build_l_graph({}, 2);
    CHECK(chain.at(0, 1) == 1.0);

    Tensor a = build_l_graph({{0, 4, 0}}, 4);
    CHECK(a.at(4, 0) == 1.0);
    CHECK(a.at(4, 3) == 1.0);
    CHECK(a.at(4, 1) == 0.0);
    CHECK(a.at(4, 2) == 0.0);
    CHECK(degree(a, 4) == 2.0);
}

TEST_CASE("normalize_adjacency: hand cases") {
    Tensor zero(4, 4);
    Tensor n0 = normalize_adjacency(zero);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(n0.at(i, j) == (i == j ? 1.0 : 0.0));

    Tensor edge(2, 2);
    edge.at(0, 1) = edge.at(1, 0) = 1.0;
    Tensor ne = normalize_adjacency(edge);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(ne.at(i, j) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("normalize_adjacency: equals the dense oracle on random graphs") {
    for (uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        int n = 2 + static_cast<int>(rng.below(9));
        std::vector<std::vector<double>> raw(n, std::vector<double>(n, 0.0));
        Tensor a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng.bernoulli(0.4)) {
                    raw[i][j] = raw[j][i] = 1.0;
                    a.at(i, j) = a.at(j, i) = 1.0;
                }
        Tensor got = normalize_adjacency(a);
        auto want = oracle::dense_normalize(raw);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) CHECK(std::abs(got.at(i, j) - want[static_cast<size_t>(i)][static_cast<size_t>(j)]) <= 1e-12);
    }
}

TEST_CASE("graph invariants over random sentences") {
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        int n_chars = 2 + static_cast<int>(rng.below(10));
        auto ms = random_matches(rng, n_chars);
        LexGraphSet set = build_graphs(ms, n_chars);

        CHECK(symmetric_zero_diag(set.adj_c));
        CHECK(symmetric_zero_diag(set.adj_t));
        CHECK(symmetric_zero_diag(set.adj_l));

        for (size_t w = 0; w < ms.size(); ++w) {
            int node = n_chars + static_cast<int>(w);
            CHECK(degree(set.adj_c, node) == static_cast<double>(ms[w].end - ms[w].start));
            CHECK(degree(set.adj_l, node) == 2.0);
        }
        // char chain present in T and L
        for (int k = 0; k + 1 < n_chars; ++k) {
            CHECK(set.adj_t.at(k, k + 1) == 1.0);
            CHECK(set.adj_l.at(k, k + 1) == 1.0);
        }
    }
}

TEST_CASE("normalized adjacency spectral radius <= 1") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 500);
        int n = 3 + static_cast<int>(rng.below(6));
        Tensor a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng.bernoulli(0.5)) a.at(i, j) = a.at(j, i) = 1.0;
        Tensor norm = normalize_adjacency(a);
        // power iteration
        std::vector<double> v(static_cast<size_t>(n), 1.0);
        double lambda = 0.0;
        for (int it = 0; it < 200; ++it) {
            std::vector<double> next(static_cast<size_t>(n), 0.0);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) next[static_cast<size_t>(i)] += norm.at(i, j) * v[static_cast<size_t>(j)];
            double mag = 0.0;
            for (double x : next) mag = std::max(mag, std::abs(x));
            if (mag == 0.0) break;
            for (auto& x : next) x /= mag;
            lambda = mag;
            v = next;
        }
        CHECK(lambda <= 1.0 + 1e-9);
    }
}
