#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lexner/compute.hpp"
#include "lexner/corpus.hpp"
#include "lexner/lexgraph.hpp"
#include "lexner/lexicon.hpp"
#include "lexner/util.hpp"

namespace lexner {

struct Vocab {
    std::vector<std::string> items;
    std::map<std::string, int> index;

    int add(const std::string& s) {
        auto it = index.find(s);
        if (it != index.end()) return it->second;
        int id = static_cast<int>(items.size());
        index[s] = id;
        items.push_back(s);
        return id;
    }
    int find(const std::string& s) const {
        auto it = index.find(s);
        return it == index.end() ? -1 : it->second;
    }
    int size() const { return static_cast<int>(items.size()); }
};

inline constexpr const char* kUnkChar = "<unk>";

struct ModelConfig {
    int hidden_dim = 64;
    int word_dim = 0;              // lexicon vector width; required by adapter/graphs
    bool adapter = false;
    int max_words_per_char = 5;    // longest-first cap on matches per unit
    std::string graphs;            // subset of "CTL", canonical order
    int gcn_layers = 2;
    bool pfe_sfe = false;
    double grl_lambda = 0.1;
    double rdrop_alpha = 0.1;
    double dropout = 0.2;
    bool use_positions = true;
    int max_positions = 512;
    bool t_graph_word_word = true;

    // vocab sizes, filled by build_model
    int n_chars = 0;
    int n_labels = 0;
    int n_languages = 0;

    bool needs_lexicon() const { return adapter || !graphs.empty(); }

    void validate() const {
        if (hidden_dim <= 0) throw ValidationError("hidden_dim must be positive");
        if (gcn_layers < 1) throw ValidationError("gcn_layers must be >= 1");
        if (max_words_per_char < 1) throw ValidationError("max_words_per_char must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout must be in [0,1)");
        if (rdrop_alpha < 0.0) throw ValidationError("rdrop_alpha must be >= 0");
        if (grl_lambda < 0.0) throw ValidationError("grl_lambda must be >= 0");
        if (max_positions < 1) throw ValidationError("max_positions must be >= 1");
        std::string seen;
        for (char g : graphs) {
            if (g != 'C' && g != 'T' && g != 'L')
                throw ValidationError(std::string("graphs may only contain C, T, L; got '") + g + "'");
            if (seen.find(g) != std::string::npos) throw ValidationError("duplicate graph in config");
            seen += g;
        }
        if (needs_lexicon() && word_dim <= 0)
            throw ValidationError("adapter/graphs need word_dim > 0 (load a lexicon)");
        if (pfe_sfe && hidden_dim % 2 != 0)
            throw ValidationError("pfe_sfe splits hidden_dim into equal shared/private halves; use an even dim");
    }
};

struct Model {
    ModelConfig config;
    Vocab chars;      // item 0 is <unk>
    Vocab labels;
    Vocab languages;
    ParamSet params;
};

namespace modeldetail {

inline void xavier_fill(Tensor& t, uint64_t seed) {
    double r = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    Rng rng(seed);
    t.fill_uniform(rng, -r, r);
}

}  // namespace modeldetail

// Parameter tensors, each initialized from a seed derived from its own name
// so the presence of optional modules never shifts another tensor's init.
inline ParamSet init_params(const ModelConfig& c, const Vocab& languages, uint64_t seed) {
    ParamSet p;
    auto weight = [&](const std::string& name, int rows, int cols) {
        Tensor& t = p.add(name, rows, cols);
        modeldetail::xavier_fill(t, mix_seed(seed, "init:" + name));
    };
    auto zeros = [&](const std::string& name, int rows, int cols) { p.add(name, rows, cols); };
    auto ones = [&](const std::string& name, int rows, int cols) {
        Tensor& t = p.add(name, rows, cols);
        for (auto& v : t.values()) v = 1.0;
    };

    const int d = c.hidden_dim;
    weight("char_emb", c.n_chars, d);
    if (c.use_positions) weight("pos_emb", c.max_positions, d);

    weight("enc.wq", d, d);
    weight("enc.wk", d, d);
    weight("enc.wv", d, d);
    weight("enc.wo", d, d);
    ones("enc.ln1.gain", 1, d);
    zeros("enc.ln1.bias", 1, d);
    weight("enc.ff.w1", d, d);
    zeros("enc.ff.b1", 1, d);
    weight("enc.ff.w2", d, d);
    zeros("enc.ff.b2", 1, d);
    ones("enc.ln2.gain", 1, d);
    zeros("enc.ln2.bias", 1, d);

    if (c.adapter) {
        weight("adapter.w1", c.word_dim, d);
        zeros("adapter.b1", 1, d);
        weight("adapter.w2", d, d);
        zeros("adapter.b2", 1, d);
        weight("adapter.wattn", d, d);
        ones("adapter.ln.gain", 1, d);
        zeros("adapter.ln.bias", 1, d);
    }
    if (!c.graphs.empty()) {
        weight("gcn.word_proj", c.word_dim, d);
        for (char g : c.graphs)
            for (int l = 0; l < c.gcn_layers; ++l)
                weight(std::string("gcn.") + g + ".w" + std::to_string(l), d, d);
        zeros("fusion.logits", 1, 1 + static_cast<int>(c.graphs.size()));
    }
    if (c.pfe_sfe) {
        const int half = d / 2;
        weight("sfe.w1", d, half);
        zeros("sfe.b1", 1, half);
        for (const auto& lang : languages.items) {
            weight("pfe." + lang + ".w1", d, half);
            zeros("pfe." + lang + ".b1", 1, half);
        }
        weight("disc.w1", half, half);
        zeros("disc.b1", 1, half);
        weight("disc.w2", half, c.n_languages);
        zeros("disc.b2", 1, c.n_languages);
    }
    weight("out.w", d, c.n_labels);
    zeros("out.b", 1, c.n_labels);
    return p;
}

// Vocabularies from the training corpus, then seeded parameters.
inline Model build_model(ModelConfig config, const Dataset& train, uint64_t seed) {
    Model m;
    m.chars.add(kUnkChar);
    for (const auto& s : train.sentences) {
        for (const auto& t : s.tokens) m.chars.add(t);
        for (const auto& l : s.labels) m.labels.add(l);
        m.languages.add(s.language);
    }
    config.n_chars = m.chars.size();
    config.n_labels = m.labels.size();
    config.n_languages = m.languages.size();
    config.validate();
    m.config = config;
    m.params = init_params(config, m.languages, seed);
    return m;
}

// One sentence in model coordinates. Lexicon-derived members are only
// populated when the adapter or a graph is active.
struct EncodedSentence {
    const Sentence* src = nullptr;
    std::vector<int> char_ids;
    std::vector<int> label_ids;   // -1 for labels outside the training vocab
    std::vector<int> positions;
    int language_id = 0;

    std::vector<MatchedSpan> matches;
    Tensor match_vecs;                         // n_matches x word_dim, constant
    std::vector<std::vector<int>> char_matches;  // per unit: capped match indices
    std::vector<Tensor> norm_adj;              // one normalized adjacency per active graph
};

struct Batch {
    std::vector<const EncodedSentence*> sentences;
};

inline std::vector<EncodedSentence> encode_dataset(const Model& m, const Dataset& d, const Lexicon* lexicon) {
    const ModelConfig& c = m.config;
    if (c.needs_lexicon() && lexicon == nullptr)
        throw ValidationError("model config uses the lexicon adapter/graphs but no lexicon was provided");
    if (c.needs_lexicon() && lexicon->dim != c.word_dim)
        throw ValidationError("lexicon dim " + std::to_string(lexicon->dim) + " != config word_dim " +
                              std::to_string(c.word_dim));

    std::vector<EncodedSentence> out;
    out.reserve(d.sentences.size());
    for (const auto& s : d.sentences) {
        EncodedSentence e;
        e.src = &s;
        for (const auto& tok : s.tokens) {
            int id = m.chars.find(tok);
            e.char_ids.push_back(id < 0 ? 0 : id);
        }
        for (const auto& lab : s.labels) e.label_ids.push_back(m.labels.find(lab));
        for (size_t i = 0; i < s.tokens.size(); ++i)
            e.positions.push_back(std::min(static_cast<int>(i), c.max_positions - 1));
        e.language_id = m.languages.find(s.language);
        if (e.language_id < 0) {
            if (c.pfe_sfe)
                throw ValidationError("unknown language '" + s.language + "' in sentence " + s.id +
                                      " (pfe_sfe has no extractor for it)");
            e.language_id = 0;
        }

        if (c.needs_lexicon()) {
            int n = static_cast<int>(s.tokens.size());
            e.matches = match_spans(*lexicon, s.tokens);
            if (!e.matches.empty()) {
                e.match_vecs = Tensor(static_cast<int>(e.matches.size()), c.word_dim);
                for (size_t w = 0; w < e.matches.size(); ++w) {
                    const auto& vec = lexicon->vector_of(e.matches[w].word_id);
                    for (int k = 0; k < c.word_dim; ++k) e.match_vecs.at(static_cast<int>(w), k) = vec[static_cast<size_t>(k)];
                }
            }
            if (c.adapter) {
                e.char_matches.assign(static_cast<size_t>(n), {});
                for (size_t w = 0; w < e.matches.size(); ++w)
                    for (int k = e.matches[w].start; k < e.matches[w].end; ++k)
                        e.char_matches[static_cast<size_t>(k)].push_back(static_cast<int>(w));
                for (auto& lst : e.char_matches) {
                    std::stable_sort(lst.begin(), lst.end(), [&](int a, int b) {
                        int la = e.matches[static_cast<size_t>(a)].end - e.matches[static_cast<size_t>(a)].start;
                        int lb = e.matches[static_cast<size_t>(b)].end - e.matches[static_cast<size_t>(b)].start;
                        return la != lb ? la > lb : a < b;  // longest first
                    });
                    if (static_cast<int>(lst.size()) > c.max_words_per_char) lst.resize(static_cast<size_t>(c.max_words_per_char));
                }
            }
            for (char g : c.graphs) {
                Tensor adj;
                switch (g) {
                    case 'C': adj = build_c_graph(e.matches, n); break;
                    case 'T': adj = build_t_graph(e.matches, n, c.t_graph_word_word); break;
                    case 'L': adj = build_l_graph(e.matches, n); break;
                }
                e.norm_adj.push_back(normalize_adjacency(adj));
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

struct ForwardOptions {
    bool training = false;        // gates dropout
    uint64_t seed = 0;            // dropout mask stream
    const Tensor* delta = nullptr;  // adversarial perturbation on the embedding output
};

struct ForwardPass {
    Tensor embedding;   // (total_tokens x d) pre-perturbation embedding output
    Tensor logits;      // total_tokens x n_labels
    Tensor probs;
    Tensor main_loss;   // token-mean cross entropy
    Tensor disc_loss;   // defined iff pfe_sfe
    std::vector<int> gold;
};

// Embedding output for the whole batch: per sentence, char embedding rows
// plus learned absolute position rows, stacked in batch order.
inline Tensor embed_batch(Tape& tape, const Model& m, const Batch& batch) {
    std::vector<Tensor> rows;
    for (const EncodedSentence* e : batch.sentences) {
        Tensor x = tape.gather_rows(m.params.get("char_emb"), e->char_ids);
        if (m.config.use_positions)
            x = tape.add(x, tape.gather_rows(m.params.get("pos_emb"), e->positions));
        rows.push_back(x);
    }
    return tape.concat_rows(rows);
}

// Single-head scaled dot-product self-attention block with residuals and
// layer norms, standing in for the pretrained encoder.
inline Tensor encode(Tape& tape, const ParamSet& p, const ModelConfig& c, Tensor x, Rng& drop_rng,
                     bool training) {
    Tensor q = tape.matmul(x, p.get("enc.wq"));
    Tensor k = tape.matmul(x, p.get("enc.wk"));
    Tensor v = tape.matmul(x, p.get("enc.wv"));
    Tensor scores = tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / std::sqrt(static_cast<double>(c.hidden_dim)));
    Tensor attn = tape.matmul(tape.matmul(tape.softmax(scores), v), p.get("enc.wo"));
    if (training && c.dropout > 0.0)
        attn = tape.dropout(attn, dropout_mask(attn.rows(), attn.cols(), c.dropout, drop_rng));
    Tensor h1 = tape.layer_norm(tape.add(x, attn), p.get("enc.ln1.gain"), p.get("enc.ln1.bias"));
    Tensor ff = tape.add_bias(
        tape.matmul(tape.tanh(tape.add_bias(tape.matmul(h1, p.get("enc.ff.w1")), p.get("enc.ff.b1"))),
                    p.get("enc.ff.w2")),
        p.get("enc.ff.b2"));
    if (training && c.dropout > 0.0)
        ff = tape.dropout(ff, dropout_mask(ff.rows(), ff.cols(), c.dropout, drop_rng));
    return tape.layer_norm(tape.add(h1, ff), p.get("enc.ln2.gain"), p.get("enc.ln2.bias"));
}

// Bilinear attention from each unit state to the vectors of its matched
// words, added back residually and layer-normed. Units without matches pass
// through the layer norm untouched.
inline Tensor lexicon_adapter(Tape& tape, const ParamSet& p, Tensor h, const EncodedSentence& e) {
    const Tensor& gain = p.get("adapter.ln.gain");
    const Tensor& bias = p.get("adapter.ln.bias");
    if (e.matches.empty()) return tape.layer_norm(h, gain, bias);

    Tensor projected = tape.add_bias(
        tape.matmul(tape.tanh(tape.add_bias(tape.matmul(e.match_vecs, p.get("adapter.w1")), p.get("adapter.b1"))),
                    p.get("adapter.w2")),
        p.get("adapter.b2"));  // n_matches x d

    Tensor zero_row(1, h.cols());
    std::vector<Tensor> z_rows;
    for (int i = 0; i < h.rows(); ++i) {
        const auto& lst = e.char_matches[static_cast<size_t>(i)];
        if (lst.empty()) {
            z_rows.push_back(zero_row);
            continue;
        }
        Tensor vi = tape.gather_rows(projected, lst);
        Tensor hi = tape.gather_rows(h, {i});
        Tensor scores = tape.matmul(tape.matmul(hi, p.get("adapter.wattn")), tape.transpose(vi));
        Tensor att = tape.softmax(scores);
        z_rows.push_back(tape.matmul(att, vi));
    }
    return tape.layer_norm(tape.add(h, tape.concat_rows(z_rows)), gain, bias);
}

// H^{l+1} = relu(A_hat H^l W^l); returns the unit-node rows only.
inline Tensor gcn_forward(Tape& tape, const ParamSet& p, const ModelConfig& c, char graph, Tensor char_states,
                          Tensor word_states, const Tensor& norm_adj) {
    Tensor h = word_states.defined() ? tape.concat_rows({char_states, word_states}) : char_states;
    if (norm_adj.rows() != h.rows())
        throw ValidationError("graph size " + std::to_string(norm_adj.rows()) + " != node count " +
                              std::to_string(h.rows()));
    for (int l = 0; l < c.gcn_layers; ++l)
        h = tape.relu(tape.matmul(tape.matmul(norm_adj, h), p.get(std::string("gcn.") + graph + ".w" + std::to_string(l))));
    if (!word_states.defined()) return h;
    std::vector<int> char_rows(static_cast<size_t>(char_states.rows()));
    for (size_t i = 0; i < char_rows.size(); ++i) char_rows[i] = static_cast<int>(i);
    return tape.gather_rows(h, char_rows);
}

// Softmax-weighted sum of same-shape paths.
inline Tensor fuse(Tape& tape, const std::vector<Tensor>& paths, Tensor logits) {
    if (paths.empty()) throw ValidationError("fuse needs at least one path");
    if (logits.numel() != paths.size()) throw ValidationError("fuse: one logit per path required");
    Tensor w = tape.softmax(logits);
    Tensor acc = tape.scale_by(paths[0], tape.select(w, 0, 0));
    for (size_t k = 1; k < paths.size(); ++k)
        acc = tape.add(acc, tape.scale_by(paths[k], tape.select(w, 0, static_cast<int>(k))));
    return acc;
}

// Shared + private feature extraction with a language discriminator fed
// through gradient reversal. Returns (features, discriminator logits).
inline std::pair<Tensor, Tensor> pfe_sfe(Tape& tape, const ParamSet& p, const ModelConfig& c, Tensor h,
                                         const std::string& language) {
    Tensor shared = tape.tanh(tape.add_bias(tape.matmul(h, p.get("sfe.w1")), p.get("sfe.b1")));
    Tensor priv = tape.tanh(
        tape.add_bias(tape.matmul(h, p.get("pfe." + language + ".w1")), p.get("pfe." + language + ".b1")));
    Tensor features = tape.concat_cols(shared, priv);
    Tensor disc_in = tape.grad_reverse(shared, c.grl_lambda);
    Tensor disc_h = tape.tanh(tape.add_bias(tape.matmul(disc_in, p.get("disc.w1")), p.get("disc.b1")));
    Tensor disc_logits = tape.add_bias(tape.matmul(disc_h, p.get("disc.w2")), p.get("disc.b2"));
    return {features, disc_logits};
}

// Per-sentence pipeline from embedding rows to label logits: encoder,
// optional adapter, optional GCN paths + fusion, optional pfe_sfe, feature
// dropout, decoder. Discriminator logits are appended to `disc_parts` when
// requested.
inline Tensor sentence_logits(Tape& tape, const Model& m, const EncodedSentence& e, Tensor xs, Rng& drop_rng,
                              bool training, std::vector<Tensor>* disc_parts = nullptr,
                              std::vector<int>* disc_targets = nullptr) {
    const ModelConfig& c = m.config;
    const ParamSet& p = m.params;
    Tensor h = encode(tape, p, c, xs, drop_rng, training);
    if (c.adapter) h = lexicon_adapter(tape, p, h, e);
    if (!c.graphs.empty()) {
        Tensor word_states;
        if (!e.matches.empty()) word_states = tape.matmul(e.match_vecs, p.get("gcn.word_proj"));
        std::vector<Tensor> paths = {h};
        for (size_t gi = 0; gi < c.graphs.size(); ++gi)
            paths.push_back(gcn_forward(tape, p, c, c.graphs[gi], h, word_states, e.norm_adj[gi]));
        h = fuse(tape, paths, p.get("fusion.logits"));
    }
    Tensor features = h;
    if (c.pfe_sfe) {
        if (disc_parts != nullptr) {
            auto [feat, disc_logits] = pfe_sfe(tape, p, c, h, m.languages.items[static_cast<size_t>(e.language_id)]);
            features = feat;
            disc_parts->push_back(disc_logits);
            for (size_t i = 0; i < e.char_ids.size(); ++i) disc_targets->push_back(e.language_id);
        } else {
            features = pfe_sfe(tape, p, c, h, m.languages.items[static_cast<size_t>(e.language_id)]).first;
        }
    }
    if (training && c.dropout > 0.0)
        features = tape.dropout(features, dropout_mask(features.rows(), features.cols(), c.dropout, drop_rng));
    return tape.add_bias(tape.matmul(features, p.get("out.w")), p.get("out.b"));
}

// Full forward from a (possibly perturbed) embedding-output tensor to the
// token-mean losses. `forward_index` separates the dropout streams of
// R-Drop's two passes.
inline ForwardPass forward_from_embedding(Tape& tape, const Model& m, const Batch& batch, Tensor x_used,
                                          const ForwardOptions& opts, int forward_index = 0) {
    Rng drop_rng(mix_seed(opts.seed, "dropout", static_cast<uint64_t>(forward_index)));

    ForwardPass fp;
    std::vector<Tensor> logits_parts, disc_parts;
    std::vector<int> disc_targets;
    int offset = 0;
    for (const EncodedSentence* e : batch.sentences) {
        int n = static_cast<int>(e->char_ids.size());
        std::vector<int> rows(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) rows[static_cast<size_t>(i)] = offset + i;
        offset += n;
        Tensor xs = tape.gather_rows(x_used, rows);
        logits_parts.push_back(sentence_logits(tape, m, *e, xs, drop_rng, opts.training, &disc_parts, &disc_targets));
        for (int i = 0; i < n; ++i) {
            int lid = e->label_ids[static_cast<size_t>(i)];
            if (lid < 0)
                throw ValidationError("sentence " + e->src->id + " has a label outside the training vocabulary");
            fp.gold.push_back(lid);
        }
    }
    fp.logits = tape.concat_rows(logits_parts);
    fp.probs = tape.softmax(fp.logits);
    fp.main_loss = tape.cross_entropy(fp.logits, fp.gold);
    if (m.config.pfe_sfe) fp.disc_loss = tape.cross_entropy(tape.concat_rows(disc_parts), disc_targets);
    return fp;
}

struct LossOptions {
    bool training = true;
    bool rdrop = false;
    uint64_t seed = 0;
    const Tensor* delta = nullptr;
};

struct LossParts {
    Tensor total;       // scalar on the tape
    Tensor embedding;   // shared embedding output (pre-perturbation)
    double main_value = 0.0;   // CE (+ R-Drop KL) component
    double disc_value = 0.0;   // discriminator component
    Tensor probs;       // token probabilities of the (first) forward
};

// Tagging loss: token-mean CE, plus the discriminator CE when pfe_sfe is
// on. With rdrop, two dropout-independent forwards share one embedding and
// the symmetric KL of their predictions is added, scaled by alpha:
//   total = (CE1+CE2)/2 + alpha * (KL(P1||P2)+KL(P2||P1))/2 + disc
inline LossParts model_loss(Tape& tape, const Model& m, const Batch& batch, const LossOptions& opts) {
    const ModelConfig& c = m.config;
    LossParts out;
    Tensor x = embed_batch(tape, m, batch);
    out.embedding = x;
    Tensor x_used = opts.delta != nullptr ? tape.add(x, *opts.delta) : x;

    ForwardOptions fwd{opts.training, opts.seed, nullptr};
    if (!opts.rdrop) {
        ForwardPass fp = forward_from_embedding(tape, m, batch, x_used, fwd, 0);
        out.probs = fp.probs;
        out.main_value = fp.main_loss.item();
        if (c.pfe_sfe) {
            out.disc_value = fp.disc_loss.item();
            out.total = tape.add(fp.main_loss, fp.disc_loss);
        } else {
            out.total = fp.main_loss;
        }
        return out;
    }

    ForwardPass fp1 = forward_from_embedding(tape, m, batch, x_used, fwd, 0);
    ForwardPass fp2 = forward_from_embedding(tape, m, batch, x_used, fwd, 1);
    Tensor ce = tape.scale(tape.add(fp1.main_loss, fp2.main_loss), 0.5);
    Tensor kl = tape.scale(tape.add(tape.kl_divergence(fp1.probs, fp2.probs),
                                    tape.kl_divergence(fp2.probs, fp1.probs)),
                           0.5 * c.rdrop_alpha);
    Tensor main = tape.add(ce, kl);
    out.probs = fp1.probs;
    out.main_value = main.item();
    if (c.pfe_sfe) {
        Tensor disc = tape.scale(tape.add(fp1.disc_loss, fp2.disc_loss), 0.5);
        out.disc_value = disc.item();
        out.total = tape.add(main, disc);
    } else {
        out.total = main;
    }
    return out;
}

// Greedy decode with dropout off, followed by BIO repair (illegal I-X
// becomes B-X). Scores are the winning-class probabilities.
inline PredictionSet predict(const Model& m, const Dataset& d, const Lexicon* lexicon,
                             const std::string& model_id = "model", int batch_size = 32) {
    std::vector<EncodedSentence> encoded = encode_dataset(m, d, lexicon);
    PredictionSet out;
    out.model_id = model_id;
    for (size_t begin = 0; begin < encoded.size(); begin += static_cast<size_t>(batch_size)) {
        Batch batch;
        size_t end = std::min(encoded.size(), begin + static_cast<size_t>(batch_size));
        for (size_t i = begin; i < end; ++i) batch.sentences.push_back(&encoded[i]);

        Tape tape;
        Tensor x = embed_batch(tape, m, batch);
        Rng drop_rng(0);  // unused: dropout off at inference
        std::vector<Tensor> probs_parts;
        int offset = 0;
        for (const EncodedSentence* e : batch.sentences) {
            int n = static_cast<int>(e->char_ids.size());
            std::vector<int> rows(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) rows[static_cast<size_t>(i)] = offset + i;
            offset += n;
            Tensor xs = tape.gather_rows(x, rows);
            probs_parts.push_back(tape.softmax(sentence_logits(tape, m, *e, xs, drop_rng, false)));
        }

        for (size_t i = begin; i < end; ++i) {
            const Tensor& probs = probs_parts[i - begin];
            std::vector<std::string> labels;
            std::vector<double> scores;
            for (int t = 0; t < probs.rows(); ++t) {
                int best = 0;
                for (int j = 1; j < probs.cols(); ++j)
                    if (probs.at(t, j) > probs.at(t, best)) best = j;
                labels.push_back(m.labels.items[static_cast<size_t>(best)]);
                scores.push_back(probs.at(t, best));
            }
            repair_bio(labels);
            out.ids.push_back(encoded[i].src->id);
            out.labels.push_back(std::move(labels));
            out.scores.push_back(std::move(scores));
        }
    }
    return out;
}

}  // namespace lexner
