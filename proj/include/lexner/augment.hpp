#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lexner/corpus.hpp"
#include "lexner/util.hpp"

namespace lexner {

// Gold entity surface forms keyed by class, deduplicated in first-seen
// order. Source material for mention replacement.
struct MentionPool {
    std::map<std::string, std::vector<std::vector<std::string>>> by_class;

    bool empty() const { return by_class.empty(); }
};

struct AugmentConfig {
    std::string mode;       // bisent-uni | bisent-mix | mulsent-uni | mulsent-mix |
                            // mention-replace | shuffle-segments
    int max_len = 512;      // token budget for mulsent packing
    double rate = 1.0;      // per-entity (MR) / per-segment (SiS) selection probability
    uint64_t seed = 42;

    void validate() const {
        static const std::set<std::string> kModes = {"bisent-uni",      "bisent-mix",      "mulsent-uni",
                                                     "mulsent-mix",     "mention-replace", "shuffle-segments"};
        if (!kModes.count(mode)) throw ValidationError("unknown augmentation mode '" + mode + "'");
        if (max_len < 2) throw ValidationError("max_len must be >= 2");
        if (rate < 0.0 || rate > 1.0) throw ValidationError("rate must be in [0,1]");
    }
};

// Concatenation: tokens and labels in order, id "<id1>+<id2>", language kept
// when both agree, "MIX" otherwise. Labels stay valid BIO because a B- tag
// always opens the second part's first entity.
inline Sentence concat_pair(const Sentence& s1, const Sentence& s2) {
    Sentence out;
    out.id = s1.id + "+" + s2.id;
    out.language = s1.language == s2.language ? s1.language : "MIX";
    out.tokens = s1.tokens;
    out.tokens.insert(out.tokens.end(), s2.tokens.begin(), s2.tokens.end());
    out.labels = s1.labels;
    out.labels.insert(out.labels.end(), s2.labels.begin(), s2.labels.end());
    return out;
}

namespace augdetail {

inline std::map<std::string, std::vector<size_t>> group_by_language(const Dataset& d) {
    std::map<std::string, std::vector<size_t>> groups;
    for (size_t i = 0; i < d.sentences.size(); ++i) groups[d.sentences[i].language].push_back(i);
    return groups;
}

// Pair adjacent sentences of a shuffled index list; odd leftover passes
// through unchanged.
inline void pair_and_emit(const Dataset& d, const std::vector<size_t>& order, Dataset& out) {
    size_t i = 0;
    for (; i + 1 < order.size(); i += 2)
        out.sentences.push_back(concat_pair(d.sentences[order[i]], d.sentences[order[i + 1]]));
    if (i < order.size()) out.sentences.push_back(d.sentences[order[i]]);
}

// Greedy packing over the shuffled pool: a pack grows by the next
// admissible sentence and is emitted as soon as that sentence would
// overflow the token budget (no scanning past an overflow). `admissible`
// sees (pack_back, candidate) and gates the language constraint of the
// -mix modes.
template <class Admissible>
inline void pack_and_emit(const Dataset& d, std::vector<size_t> pool, int max_len, Admissible admissible,
                          Dataset& out) {
    while (!pool.empty()) {
        std::vector<size_t> pack = {pool.front()};
        pool.erase(pool.begin());
        int len = static_cast<int>(d.sentences[pack.back()].tokens.size());
        while (true) {
            size_t next = pool.size();
            for (size_t k = 0; k < pool.size(); ++k)
                if (admissible(d.sentences[pack.back()], d.sentences[pool[k]])) {
                    next = k;
                    break;
                }
            if (next == pool.size()) break;  // nothing admissible left
            int cand_len = static_cast<int>(d.sentences[pool[next]].tokens.size());
            if (len + cand_len > max_len) break;  // the next one would overflow
            pack.push_back(pool[next]);
            pool.erase(pool.begin() + static_cast<long>(next));
            len += cand_len;
        }
        Sentence merged = d.sentences[pack[0]];
        for (size_t k = 1; k < pack.size(); ++k) merged = concat_pair(merged, d.sentences[pack[k]]);
        out.sentences.push_back(std::move(merged));
    }
}

}  // namespace augdetail

// The four concatenation operators. Deterministic under cfg.seed; every
// source sentence lands in exactly one output sentence.
inline Dataset concat_augment(const Dataset& d, const AugmentConfig& cfg,
                              std::vector<std::string>* warnings = nullptr) {
    cfg.validate();
    if (cfg.mode != "bisent-uni" && cfg.mode != "bisent-mix" && cfg.mode != "mulsent-uni" &&
        cfg.mode != "mulsent-mix")
        throw ValidationError("concat_augment requires a concatenation mode, got '" + cfg.mode + "'");
    bool uni = cfg.mode == "bisent-uni" || cfg.mode == "mulsent-uni";
    bool pairwise = cfg.mode == "bisent-uni" || cfg.mode == "bisent-mix";

    Dataset out;
    out.name = d.name;
    Rng rng(mix_seed(cfg.seed, cfg.mode));

    if (uni) {
        auto groups = augdetail::group_by_language(d);
        for (auto& [lang, idx] : groups) {
            if (idx.size() < 2) {
                if (warnings)
                    warnings->push_back("language group '" + lang + "' has a single sentence; passed through");
                for (size_t i : idx) out.sentences.push_back(d.sentences[i]);
                continue;
            }
            std::vector<size_t> order = idx;
            rng.shuffle(order);
            if (pairwise)
                augdetail::pair_and_emit(d, order, out);
            else
                augdetail::pack_and_emit(d, order, cfg.max_len,
                                         [](const Sentence&, const Sentence&) { return true; }, out);
        }
    } else {
        auto groups = augdetail::group_by_language(d);
        if (groups.size() < 2) throw ValidationError("'-mix' modes need at least two languages");
        std::vector<size_t> order(d.sentences.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        if (pairwise) {
            // pair adjacent, re-draw the partner when languages collide
            std::vector<size_t> pool = order;
            while (!pool.empty()) {
                size_t first = pool.front();
                pool.erase(pool.begin());
                constexpr size_t kMaxScan = 16;
                size_t found = pool.size();
                for (size_t k = 0; k < pool.size() && k < kMaxScan; ++k)
                    if (d.sentences[pool[k]].language != d.sentences[first].language) {
                        found = k;
                        break;
                    }
                if (found == pool.size()) {
                    out.sentences.push_back(d.sentences[first]);  // no partner; pass through
                } else {
                    out.sentences.push_back(concat_pair(d.sentences[first], d.sentences[pool[found]]));
                    pool.erase(pool.begin() + static_cast<long>(found));
                }
            }
        } else {
            augdetail::pack_and_emit(
                d, order, cfg.max_len,
                [](const Sentence& back, const Sentence& cand) { return back.language != cand.language; }, out);
        }
    }
    return out;
}

// Every exact gold entity surface form, keyed by class, first-seen order.
inline MentionPool build_mention_pool(const Dataset& d) {
    MentionPool pool;
    std::map<std::string, std::set<std::string>> seen;
    for (const auto& s : d.sentences) {
        for (const auto& span : extract_spans(s)) {
            std::vector<std::string> mention(s.tokens.begin() + span.start, s.tokens.begin() + span.end);
            std::string key = join(mention, "\x1f");
            if (seen[span.cls].insert(key).second) pool.by_class[span.cls].push_back(std::move(mention));
        }
    }
    return pool;
}

// Mention replacement: each entity span is independently selected with
// probability `rate` and its tokens swapped for a same-class pool mention
// (never the identical one when an alternative exists). Non-entity tokens
// stay byte-identical.
inline Sentence mention_replace(const Sentence& s, const MentionPool& pool, double rate, uint64_t seed) {
    Rng rng(mix_seed(seed, "mention-replace"));
    Sentence out;
    out.id = s.id;
    out.language = s.language;
    std::vector<EntitySpan> spans = extract_spans(s);
    size_t span_i = 0;
    for (size_t t = 0; t < s.tokens.size();) {
        if (span_i < spans.size() && static_cast<int>(t) == spans[span_i].start) {
            const EntitySpan& span = spans[span_i];
            std::vector<std::string> mention(s.tokens.begin() + span.start, s.tokens.begin() + span.end);
            if (rng.bernoulli(rate)) {
                auto it = pool.by_class.find(span.cls);
                if (it != pool.by_class.end() && !it->second.empty()) {
                    std::vector<const std::vector<std::string>*> candidates;
                    for (const auto& m : it->second)
                        if (m != mention) candidates.push_back(&m);
                    if (!candidates.empty()) mention = *candidates[rng.below(candidates.size())];
                }
            }
            for (size_t k = 0; k < mention.size(); ++k) {
                out.tokens.push_back(mention[k]);
                out.labels.push_back((k == 0 ? "B-" : "I-") + span.cls);
            }
            t = static_cast<size_t>(span.end);
            ++span_i;
        } else {
            out.tokens.push_back(s.tokens[t]);
            out.labels.push_back(s.labels[t]);
            ++t;
        }
    }
    return out;
}

// Shuffle within segments: maximal O-runs are independently selected with
// probability `rate` and their tokens permuted; entity blocks and the whole
// label sequence stay put.
inline Sentence shuffle_within_segments(const Sentence& s, double rate, uint64_t seed) {
    Rng rng(mix_seed(seed, "shuffle-segments"));
    Sentence out = s;
    size_t t = 0;
    while (t < s.tokens.size()) {
        if (s.labels[t] != "O") {
            ++t;
            continue;
        }
        size_t end = t;
        while (end < s.tokens.size() && s.labels[end] == "O") ++end;
        if (rng.bernoulli(rate)) {
            std::vector<std::string> run(out.tokens.begin() + static_cast<long>(t),
                                         out.tokens.begin() + static_cast<long>(end));
            rng.shuffle(run);
            std::copy(run.begin(), run.end(), out.tokens.begin() + static_cast<long>(t));
        }
        t = end;
    }
    return out;
}

// Dataset-level application of the two per-sentence operators. Sentence
// seeds are derived from (seed, sentence index) so the result is a pure
// function of (dataset, config).
inline Dataset apply_augment(const Dataset& d, const AugmentConfig& cfg,
                             std::vector<std::string>* warnings = nullptr) {
    cfg.validate();
    if (cfg.mode == "mention-replace") {
        MentionPool pool = build_mention_pool(d);
        Dataset out;
        out.name = d.name;
        for (size_t i = 0; i < d.sentences.size(); ++i)
            out.sentences.push_back(mention_replace(d.sentences[i], pool, cfg.rate, mix_seed(cfg.seed, "mr", i)));
        return out;
    }
    if (cfg.mode == "shuffle-segments") {
        Dataset out;
        out.name = d.name;
        for (size_t i = 0; i < d.sentences.size(); ++i)
            out.sentences.push_back(shuffle_within_segments(d.sentences[i], cfg.rate, mix_seed(cfg.seed, "sis", i)));
        return out;
    }
    return concat_augment(d, cfg, warnings);
}

}  // namespace lexner
