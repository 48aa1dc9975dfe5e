#include <string>
#include <vector>

#include "doctest.h"
#include "lexner/corpus.hpp"
#include "oracles.hpp"

using namespace lexner;

TEST_CASE("parse_conll: empty input yields empty dataset") {
    Dataset d = parse_conll("");
    CHECK(d.sentences.empty());
}

TEST_CASE("parse_conll: blank-line separated blocks, ordinal ids") {
    Dataset d = parse_conll("tom B-PER\nleft O\n\nparis B-LOC");
    REQUIRE(d.sentences.size() == 2);
    CHECK(d.sentences[0].tokens == std::vector<std::string>{"tom", "left"});
    CHECK(d.sentences[0].labels == std::vector<std::string>{"B-PER", "O"});
    CHECK(d.sentences[0].id == "0");
    CHECK(d.sentences[1].labels == std::vector<std::string>{"B-LOC"});
    CHECK(d.sentences[1].id == "1");
}

TEST_CASE("parse_conll: headers, 4-column rows, domain tag") {
    Dataset d = parse_conll("# id x17 domain=ZH\nA _ _ B-LOC\nB _ _ I-LOC\n");
    REQUIRE(d.sentences.size() == 1);
    CHECK(d.sentences[0].id == "x17");
    CHECK(d.sentences[0].language == "ZH");
    CHECK(d.sentences[0].tokens == std::vector<std::string>{"A", "B"});
    CHECK(d.sentences[0].labels == std::vector<std::string>{"B-LOC", "I-LOC"});
}

TEST_CASE("parse_conll: errors carry line numbers") {
    CHECK_THROWS_WITH_AS(parse_conll("tom B-PER\nbroken\n"), "line 2: expected at least 2 columns, got 1",
                         ParseError);
    try {
        parse_conll("ok O\nx BPER\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
    }
    CHECK_THROWS_AS(parse_conll("x B-\n"), ParseError);
    CHECK_THROWS_AS(parse_conll("x Q-PER\n"), ParseError);
}

TEST_CASE("write_conll: format contract") {
    CHECK(write_conll(Dataset{}) == "");
    Dataset d;
    d.sentences.push_back({"0", "", {"a"}, {"O"}});
    CHECK(write_conll(d) == "# id 0\na\tO\n");
}

TEST_CASE("parse/write round trip is the identity") {
    Dataset d = oracle::random_corpus(7, 100);
    std::string text = write_conll(d);
    Dataset back = parse_conll(text);
    REQUIRE(back.sentences.size() == d.sentences.size());
    for (size_t i = 0; i < d.sentences.size(); ++i) {
        CHECK(back.sentences[i].id == d.sentences[i].id);
        CHECK(back.sentences[i].language == d.sentences[i].language);
        CHECK(back.sentences[i].tokens == d.sentences[i].tokens);
        CHECK(back.sentences[i].labels == d.sentences[i].labels);
    }
    CHECK(write_conll(back) == text);
}

TEST_CASE("validate_bio flags illegal continuations") {
    CHECK(validate_bio({"", "", {"a", "b", "c"}, {"O", "O", "O"}}).empty());
    CHECK(validate_bio({"", "", {"a", "b"}, {"O", "I-PER"}}) == std::vector<int>{1});
    CHECK(validate_bio({"", "", {"a", "b"}, {"B-PER", "I-LOC"}}) == std::vector<int>{1});
    CHECK(validate_bio({"", "", {"a", "b"}, {"B-PER", "I-PER"}}).empty());
    CHECK(validate_bio({"", "", {"a"}, {"I-PER"}}) == std::vector<int>{0});
}

TEST_CASE("extract_spans: rule traces") {
    CHECK(extract_spans(std::vector<std::string>{"O", "O"}).empty());
    auto s1 = extract_spans(std::vector<std::string>{"B-PER", "I-PER", "O", "B-LOC"});
    REQUIRE(s1.size() == 2);
    CHECK(s1[0] == EntitySpan{0, 2, "PER"});
    CHECK(s1[1] == EntitySpan{3, 4, "LOC"});
    auto s2 = extract_spans(std::vector<std::string>{"B-PER", "B-PER"});
    REQUIRE(s2.size() == 2);
    CHECK(s2[0] == EntitySpan{0, 1, "PER"});
    CHECK(s2[1] == EntitySpan{1, 2, "PER"});
    CHECK_THROWS_AS(extract_spans(std::vector<std::string>{"O", "I-PER"}), ValidationError);
}

TEST_CASE("repair_bio: illegal continuations become span starts") {
    std::vector<std::string> v1 = {"O", "I-PER"};
    repair_bio(v1);
    CHECK(v1 == std::vector<std::string>{"O", "B-PER"});
    std::vector<std::string> v2 = {"B-PER", "I-LOC", "I-LOC"};
    repair_bio(v2);
    CHECK(v2 == std::vector<std::string>{"B-PER", "B-LOC", "I-LOC"});
    std::vector<std::string> v3 = {"I-CW"};
    repair_bio(v3);
    CHECK(v3 == std::vector<std::string>{"B-CW"});
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Dataset d = oracle::random_corpus(seed, 10);
        PredictionSet noisy = oracle::corrupt_predictions(d, 0.5, seed, "n");
        for (auto labels : noisy.labels) {
            repair_bio(labels);
            CHECK(validate_bio({"", "", std::vector<std::string>(labels.size(), "x"), labels}).empty());
        }
    }
}

TEST_CASE("extract_spans: spans disjoint and sorted") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Dataset d = oracle::random_corpus(seed, 20);
        for (const auto& s : d.sentences) {
            auto spans = extract_spans(s);
            for (size_t i = 1; i < spans.size(); ++i) {
                CHECK(spans[i - 1].end <= spans[i].start);
                CHECK(spans[i - 1].start < spans[i].start);
            }
        }
    }
}

TEST_CASE("macro_f1: trivial and hand-counted cases") {
    Dataset gold;
    gold.sentences.push_back({"0", "", {"a", "b", "c", "d"}, {"B-PER", "I-PER", "O", "B-LOC"}});

    PredictionSet same = PredictionSet::from_dataset(gold);
    CHECK(macro_f1(gold, same).macro_f1 == doctest::Approx(1.0));

    PredictionSet pred = same;
    pred.labels[0] = {"B-PER", "I-PER", "O", "O"};
    EvalReport r = macro_f1(gold, pred);
    CHECK(r.per_class.at("PER").f1 == doctest::Approx(1.0));
    CHECK(r.per_class.at("LOC").f1 == doctest::Approx(0.0));
    CHECK(r.per_class.at("LOC").support == 1);
    CHECK(r.macro_f1 == doctest::Approx(0.5));
}

TEST_CASE("macro_f1: equals the naive enumeration scorer on random pairs") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Dataset gold = oracle::random_corpus(seed, 20);
        PredictionSet pred = oracle::corrupt_predictions(gold, 0.3, seed + 1000, "noisy");
        double got = macro_f1(gold, pred).macro_f1;
        double want = oracle::naive_macro_f1(gold, pred);
        CHECK(got == doctest::Approx(want).epsilon(1e-15));
    }
}

TEST_CASE("macro_f1: identity on gold and permutation invariance") {
    Dataset gold = oracle::random_corpus(3, 30);
    PredictionSet pred = oracle::corrupt_predictions(gold, 0.2, 99, "noisy");
    double base = macro_f1(gold, pred).macro_f1;
    CHECK(macro_f1(gold, PredictionSet::from_dataset(gold)).macro_f1 == doctest::Approx(1.0));

    // consistent reorder of sentences
    Dataset gold2 = gold;
    PredictionSet pred2 = pred;
    std::vector<size_t> order(gold.sentences.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = order.size() - 1 - i;
    for (size_t i = 0; i < order.size(); ++i) {
        gold2.sentences[i] = gold.sentences[order[i]];
        pred2.labels[i] = pred.labels[order[i]];
        pred2.ids[i] = pred.ids[order[i]];
        pred2.scores[i] = pred.scores[order[i]];
    }
    CHECK(macro_f1(gold2, pred2).macro_f1 == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("macro_f1: misalignment is an error") {
    Dataset gold = oracle::random_corpus(1, 5);
    PredictionSet pred = PredictionSet::from_dataset(gold);
    pred.labels.pop_back();
    CHECK_THROWS_AS(macro_f1(gold, pred), ValidationError);
    PredictionSet pred2 = PredictionSet::from_dataset(gold);
    pred2.labels[0].push_back("O");
    CHECK_THROWS_AS(macro_f1(gold, pred2), ValidationError);
}
