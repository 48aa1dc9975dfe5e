#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lexner/util.hpp"

namespace lexner {

// One pre-tokenized sentence with BIO labels. `language` is a free-form tag
// ("ZH", "EN", "MIX", ...); empty means unspecified.
struct Sentence {
    std::string id;
    std::string language;
    std::vector<std::string> tokens;
    std::vector<std::string> labels;
};

struct Dataset {
    std::string name;
    std::vector<Sentence> sentences;

    size_t size() const { return sentences.size(); }
    bool empty() const { return sentences.empty(); }
};

// Half-open token span [start, end) of one entity.
struct EntitySpan {
    int start = 0;
    int end = 0;
    std::string cls;

    friend bool operator==(const EntitySpan& a, const EntitySpan& b) {
        return a.start == b.start && a.end == b.end && a.cls == b.cls;
    }
    friend bool operator<(const EntitySpan& a, const EntitySpan& b) {
        if (a.start != b.start) return a.start < b.start;
        if (a.end != b.end) return a.end < b.end;
        return a.cls < b.cls;
    }
};

// Per-sentence predicted label sequences aligned one-to-one with a dataset.
// `scores` holds the winning-class probability per token (1.0 when the
// predictions came from a plain CoNLL file with no score information).
struct PredictionSet {
    std::vector<std::string> ids;
    std::vector<std::vector<std::string>> labels;
    std::vector<std::vector<double>> scores;
    std::string model_id;
    double dev_macro_f1 = 0.0;

    static PredictionSet from_dataset(const Dataset& d, std::string model_id = "gold") {
        PredictionSet p;
        p.model_id = std::move(model_id);
        for (const auto& s : d.sentences) {
            p.ids.push_back(s.id);
            p.labels.push_back(s.labels);
            p.scores.emplace_back(s.tokens.size(), 1.0);
        }
        return p;
    }
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int support = 0;
};

struct EvalReport {
    std::map<std::string, ClassMetrics> per_class;
    double macro_f1 = 0.0;
};

// A tag is `O`, or `B-<CLASS>` / `I-<CLASS>` with a non-empty class name.
inline bool tag_well_formed(const std::string& tag) {
    if (tag == "O") return true;
    if (tag.size() < 3) return false;
    if (tag[0] != 'B' && tag[0] != 'I') return false;
    return tag[1] == '-';
}

inline std::string tag_class(const std::string& tag) {
    return tag == "O" ? std::string() : tag.substr(2);
}

// Indices where an `I-X` tag continues illegally (after nothing, after `O`,
// or after a tag of a different class). Empty result == valid BIO.
inline std::vector<int> validate_bio(const Sentence& s) {
    std::vector<int> bad;
    for (size_t i = 0; i < s.labels.size(); ++i) {
        const std::string& tag = s.labels[i];
        if (tag.empty() || tag[0] != 'I') continue;
        if (i == 0 || s.labels[i - 1] == "O" || tag_class(s.labels[i - 1]) != tag_class(tag))
            bad.push_back(static_cast<int>(i));
    }
    return bad;
}

// Maximal entity spans of a valid BIO sequence, sorted by start.
inline std::vector<EntitySpan> extract_spans(const std::vector<std::string>& labels) {
    std::vector<EntitySpan> spans;
    int start = -1;
    std::string cls;
    auto close = [&](int end) {
        if (start >= 0) spans.push_back({start, end, cls});
        start = -1;
        cls.clear();
    };
    for (size_t i = 0; i < labels.size(); ++i) {
        const std::string& tag = labels[i];
        if (tag == "O") {
            close(static_cast<int>(i));
        } else if (tag[0] == 'B') {
            close(static_cast<int>(i));
            start = static_cast<int>(i);
            cls = tag_class(tag);
        } else if (tag[0] == 'I') {
            if (start < 0 || tag_class(tag) != cls)
                throw ValidationError("invalid BIO at index " + std::to_string(i) +
                                      ": " + tag + " continues nothing");
        }
    }
    close(static_cast<int>(labels.size()));
    return spans;
}

inline std::vector<EntitySpan> extract_spans(const Sentence& s) { return extract_spans(s.labels); }

// In-place BIO repair: any illegally continuing `I-X` becomes `B-X`.
inline void repair_bio(std::vector<std::string>& labels) {
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].empty() || labels[i][0] != 'I') continue;
        if (i == 0 || labels[i - 1] == "O" || tag_class(labels[i - 1]) != tag_class(labels[i]))
            labels[i] = "B" + labels[i].substr(1);
    }
}

// CoNLL reader. Sentences are blank-line separated; `#` lines are headers
// carrying an optional `id <id>` and optional `domain=<language>`; token
// lines are whitespace-separated with the token in column 1 and the tag in
// the last column (2- and 4-column layouts both fine, middle columns are
// MultiCoNER placeholders).
inline Dataset parse_conll(std::string_view text, std::string name = "") {
    Dataset d;
    d.name = std::move(name);
    std::vector<std::string> lines = split_lines(text);

    Sentence cur;
    bool has_id = false;
    auto flush = [&]() {
        if (!cur.tokens.empty()) {
            if (!has_id) cur.id = std::to_string(d.sentences.size());
            d.sentences.push_back(std::move(cur));
        }
        cur = Sentence{};
        has_id = false;
    };

    for (size_t li = 0; li < lines.size(); ++li) {
        const std::string& line = lines[li];
        int lineno = static_cast<int>(li) + 1;
        if (is_blank(line)) {
            flush();
            continue;
        }
        if (line[0] == '#') {
            std::vector<std::string> parts = split_ws(std::string_view(line).substr(1));
            for (size_t k = 0; k < parts.size(); ++k) {
                if (parts[k] == "id" && k + 1 < parts.size()) {
                    cur.id = parts[k + 1];
                    has_id = true;
                } else if (parts[k].rfind("domain=", 0) == 0) {
                    cur.language = parts[k].substr(7);
                }
            }
            continue;
        }
        std::vector<std::string> cols = split_ws(line);
        if (cols.size() < 2) throw ParseError(lineno, "expected at least 2 columns, got " + std::to_string(cols.size()));
        const std::string& tag = cols.back();
        if (!tag_well_formed(tag)) throw ParseError(lineno, "malformed tag '" + tag + "'");
        cur.tokens.push_back(cols[0]);
        cur.labels.push_back(tag);
    }
    flush();
    return d;
}

// Byte-stable inverse of parse_conll. Languages ride along in the header as
// `domain=<language>` so the round trip is the identity.
inline std::string write_conll(const Dataset& d) {
    std::string out;
    for (size_t i = 0; i < d.sentences.size(); ++i) {
        const Sentence& s = d.sentences[i];
        if (i) out += '\n';
        out += "# id " + s.id;
        if (!s.language.empty()) out += " domain=" + s.language;
        out += '\n';
        for (size_t t = 0; t < s.tokens.size(); ++t) {
            out += s.tokens[t];
            out += '\t';
            out += s.labels[t];
            out += '\n';
        }
    }
    return out;
}

// Entity-level macro-F1 over exact (start, end, class) matches. Classes
// absent from both gold and prediction do not enter the average; an empty
// class set (no entities anywhere) counts as perfect agreement.
inline EvalReport macro_f1(const Dataset& gold, const PredictionSet& pred) {
    if (gold.sentences.size() != pred.labels.size())
        throw ValidationError("prediction/gold sentence counts differ: " +
                              std::to_string(pred.labels.size()) + " vs " +
                              std::to_string(gold.sentences.size()));
    std::map<std::string, int> tp, fp, fn;
    std::map<std::string, int> support;
    for (size_t i = 0; i < gold.sentences.size(); ++i) {
        const Sentence& g = gold.sentences[i];
        if (g.tokens.size() != pred.labels[i].size())
            throw ValidationError("sentence " + g.id + ": prediction length " +
                                  std::to_string(pred.labels[i].size()) + " != gold length " +
                                  std::to_string(g.tokens.size()));
        std::vector<EntitySpan> gs = extract_spans(g.labels);
        std::vector<EntitySpan> ps = extract_spans(pred.labels[i]);
        std::set<EntitySpan> gset(gs.begin(), gs.end());
        for (const auto& sp : gs) ++support[sp.cls];
        std::set<EntitySpan> pset(ps.begin(), ps.end());
        for (const auto& sp : gs) {
            if (pset.count(sp))
                ++tp[sp.cls];
            else
                ++fn[sp.cls];
        }
        for (const auto& sp : ps)
            if (!gset.count(sp)) ++fp[sp.cls];
    }
    std::set<std::string> classes;
    for (const auto& kv : tp) classes.insert(kv.first);
    for (const auto& kv : fp) classes.insert(kv.first);
    for (const auto& kv : fn) classes.insert(kv.first);

    EvalReport report;
    double sum = 0.0;
    for (const std::string& c : classes) {
        double t = tp.count(c) ? tp[c] : 0;
        double p_den = t + (fp.count(c) ? fp[c] : 0);
        double r_den = t + (fn.count(c) ? fn[c] : 0);
        ClassMetrics m;
        m.precision = p_den > 0 ? t / p_den : 0.0;
        m.recall = r_den > 0 ? t / r_den : 0.0;
        m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        m.support = support.count(c) ? support[c] : 0;
        report.per_class[c] = m;
        sum += m.f1;
    }
    report.macro_f1 = classes.empty() ? 1.0 : sum / static_cast<double>(classes.size());
    return report;
}

}  // namespace lexner
