#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "lexner/corpus.hpp"
#include "lexner/util.hpp"

namespace lexner {

namespace ensdetail {

inline void check_aligned(const std::vector<PredictionSet>& preds) {
    for (size_t k = 1; k < preds.size(); ++k) {
        if (preds[k].labels.size() != preds[0].labels.size())
            throw ValidationError("prediction sets misaligned: " + preds[k].model_id + " has " +
                                  std::to_string(preds[k].labels.size()) + " sentences, " + preds[0].model_id +
                                  " has " + std::to_string(preds[0].labels.size()));
        for (size_t s = 0; s < preds[0].labels.size(); ++s)
            if (preds[k].labels[s].size() != preds[0].labels[s].size())
                throw ValidationError("prediction sets misaligned at sentence " + std::to_string(s));
    }
}

}  // namespace ensdetail

// Token-level majority vote. Ties go to the label of the best model (by dev
// macro-F1, input order breaking exact score ties) among the tied labels.
// The voted sequence is BIO-repaired; scores are vote fractions.
inline PredictionSet vote(const std::vector<PredictionSet>& preds) {
    if (preds.empty()) throw ValidationError("vote needs at least one prediction set");
    ensdetail::check_aligned(preds);

    std::vector<size_t> priority(preds.size());
    std::iota(priority.begin(), priority.end(), size_t{0});
    std::stable_sort(priority.begin(), priority.end(),
                     [&](size_t a, size_t b) { return preds[a].dev_macro_f1 > preds[b].dev_macro_f1; });

    PredictionSet out;
    std::vector<std::string> member_ids;
    for (const auto& p : preds) member_ids.push_back(p.model_id);
    out.model_id = "vote(" + join(member_ids, ",") + ")";
    out.ids = preds[0].ids;

    for (size_t s = 0; s < preds[0].labels.size(); ++s) {
        size_t len = preds[0].labels[s].size();
        std::vector<std::string> voted(len);
        std::vector<double> scores(len);
        for (size_t t = 0; t < len; ++t) {
            std::map<std::string, int> counts;
            for (const auto& p : preds) ++counts[p.labels[s][t]];
            int best = 0;
            for (const auto& [label, c] : counts) best = std::max(best, c);
            std::set<std::string> tied;
            for (const auto& [label, c] : counts)
                if (c == best) tied.insert(label);
            std::string winner;
            if (tied.size() == 1) {
                winner = *tied.begin();
            } else {
                for (size_t rank : priority)
                    if (tied.count(preds[rank].labels[s][t])) {
                        winner = preds[rank].labels[s][t];
                        break;
                    }
            }
            voted[t] = winner;
            scores[t] = static_cast<double>(best) / static_cast<double>(preds.size());
        }
        repair_bio(voted);
        out.labels.push_back(std::move(voted));
        out.scores.push_back(std::move(scores));
    }
    return out;
}

// Sentences on which every model predicts the exact same label sequence,
// adopted as pseudo-labeled data. Order preserved.
inline Dataset select_pseudo(const Dataset& unlabeled, const std::vector<PredictionSet>& preds) {
    if (preds.size() < 2) throw ValidationError("select_pseudo needs at least two prediction sets");
    ensdetail::check_aligned(preds);
    if (preds[0].labels.size() != unlabeled.sentences.size())
        throw ValidationError("prediction sets not aligned with the unlabeled corpus");

    Dataset out;
    out.name = unlabeled.name + "-pseudo";
    for (size_t s = 0; s < unlabeled.sentences.size(); ++s) {
        if (unlabeled.sentences[s].tokens.size() != preds[0].labels[s].size())
            throw ValidationError("prediction length differs from corpus at sentence " + std::to_string(s));
        bool unanimous = true;
        for (size_t k = 1; k < preds.size() && unanimous; ++k)
            unanimous = preds[k].labels[s] == preds[0].labels[s];
        if (!unanimous) continue;
        Sentence chosen = unlabeled.sentences[s];
        chosen.labels = preds[0].labels[s];
        out.sentences.push_back(std::move(chosen));
    }
    return out;
}

// Concatenates train data with pseudo-labeled sentences. Pseudo ids get a
// "pseudo:" prefix as provenance; `pseudo_fraction` caps the pseudo count at
// floor(fraction * |train|) via a seeded subsample (original order kept).
inline Dataset merge_for_finetune(const Dataset& train, const Dataset& pseudo, double pseudo_fraction = 1.0,
                                  uint64_t seed = 42) {
    if (pseudo_fraction < 0.0 || pseudo_fraction > 1.0)
        throw ValidationError("pseudo_fraction must be in [0,1]");
    size_t cap = static_cast<size_t>(pseudo_fraction * static_cast<double>(train.sentences.size()));
    size_t take = std::min(pseudo.sentences.size(), cap);

    std::vector<size_t> chosen(pseudo.sentences.size());
    std::iota(chosen.begin(), chosen.end(), size_t{0});
    if (take < pseudo.sentences.size()) {
        Rng rng(mix_seed(seed, "pseudo-subsample"));
        rng.shuffle(chosen);
        chosen.resize(take);
        std::sort(chosen.begin(), chosen.end());
    }

    Dataset out = train;
    std::set<std::string> ids;
    for (const auto& s : train.sentences)
        if (!ids.insert(s.id).second) throw ValidationError("duplicate id in train set: " + s.id);
    for (size_t i : chosen) {
        Sentence s = pseudo.sentences[i];
        if (s.id.rfind("pseudo:", 0) != 0) s.id = "pseudo:" + s.id;
        if (!ids.insert(s.id).second) throw ValidationError("id collision while merging: " + s.id);
        out.sentences.push_back(std::move(s));
    }
    return out;
}

}  // namespace lexner
