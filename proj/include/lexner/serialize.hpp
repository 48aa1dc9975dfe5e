#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lexner/adversarial.hpp"
#include "lexner/augment.hpp"
#include "lexner/corpus.hpp"
#include "lexner/model.hpp"
#include "lexner/train.hpp"
#include "lexner/util.hpp"

namespace lexner {

using json = nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + path.string());
    out << content;
    if (!out) throw RuntimeFailure("write failed for " + path.string());
}

inline json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(what + ": " + e.what());
    }
}

namespace serdetail {

inline void check_keys(const json& j, const std::string& what, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ValidationError(what + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw ValidationError(what + ": unknown key '" + key + "'");
}

template <class T>
inline void load(const json& j, const char* key, T& into) {
    if (!j.contains(key)) return;
    try {
        into = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline std::string fixed6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace serdetail

// --- parameter checkpoints: a flat list of named arrays ---

inline json params_to_json(const ParamSet& p) {
    json arr = json::array();
    for (const auto& [name, t] : p.items)
        arr.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"values", t.values()}});
    return arr;
}

inline ParamSet params_from_json(const json& arr) {
    if (!arr.is_array()) throw ValidationError("checkpoint must be a JSON array of named arrays");
    ParamSet p;
    for (const auto& item : arr) {
        serdetail::check_keys(item, "checkpoint entry", {"name", "rows", "cols", "values"});
        std::string name = item.at("name").get<std::string>();
        int rows = item.at("rows").get<int>();
        int cols = item.at("cols").get<int>();
        std::vector<double> values = item.at("values").get<std::vector<double>>();
        Tensor& t = p.add(name, rows, cols);
        if (values.size() != t.numel())
            throw ValidationError("checkpoint entry '" + name + "' has " + std::to_string(values.size()) +
                                  " values for a " + std::to_string(rows) + "x" + std::to_string(cols) + " tensor");
        t.values() = std::move(values);
    }
    return p;
}

// --- configs ---

inline json model_config_to_json(const ModelConfig& c) {
    json graphs = json::array();
    for (char g : c.graphs) graphs.push_back(std::string(1, g));
    return {{"hidden_dim", c.hidden_dim},
            {"word_dim", c.word_dim},
            {"adapter", c.adapter},
            {"max_words_per_char", c.max_words_per_char},
            {"graphs", graphs},
            {"gcn_layers", c.gcn_layers},
            {"pfe_sfe", c.pfe_sfe},
            {"grl_lambda", c.grl_lambda},
            {"rdrop_alpha", c.rdrop_alpha},
            {"dropout", c.dropout},
            {"use_positions", c.use_positions},
            {"max_positions", c.max_positions},
            {"t_graph_word_word", c.t_graph_word_word},
            {"n_chars", c.n_chars},
            {"n_labels", c.n_labels},
            {"n_languages", c.n_languages}};
}

inline ModelConfig model_config_from_json(const json& j, ModelConfig base = ModelConfig{}) {
    serdetail::check_keys(j, "model config",
                          {"hidden_dim", "word_dim", "adapter", "max_words_per_char", "graphs", "gcn_layers",
                           "pfe_sfe", "grl_lambda", "rdrop_alpha", "dropout", "use_positions", "max_positions",
                           "t_graph_word_word", "n_chars", "n_labels", "n_languages"});
    ModelConfig c = base;
    serdetail::load(j, "hidden_dim", c.hidden_dim);
    serdetail::load(j, "word_dim", c.word_dim);
    serdetail::load(j, "adapter", c.adapter);
    serdetail::load(j, "max_words_per_char", c.max_words_per_char);
    if (j.contains("graphs")) {
        c.graphs.clear();
        std::string canon = "CTL";
        std::set<std::string> wanted;
        for (const auto& g : j.at("graphs")) wanted.insert(g.get<std::string>());
        for (char g : canon)
            if (wanted.count(std::string(1, g))) c.graphs += g;
        for (const auto& g : wanted)
            if (g.size() != 1 || canon.find(g[0]) == std::string::npos)
                throw ValidationError("unknown graph '" + g + "' (expected C, T or L)");
    }
    serdetail::load(j, "gcn_layers", c.gcn_layers);
    serdetail::load(j, "pfe_sfe", c.pfe_sfe);
    serdetail::load(j, "grl_lambda", c.grl_lambda);
    serdetail::load(j, "rdrop_alpha", c.rdrop_alpha);
    serdetail::load(j, "dropout", c.dropout);
    serdetail::load(j, "use_positions", c.use_positions);
    serdetail::load(j, "max_positions", c.max_positions);
    serdetail::load(j, "t_graph_word_word", c.t_graph_word_word);
    serdetail::load(j, "n_chars", c.n_chars);
    serdetail::load(j, "n_labels", c.n_labels);
    serdetail::load(j, "n_languages", c.n_languages);
    return c;
}

inline json adv_config_to_json(const AdvConfig& c) {
    return {{"method", c.method},
            {"fgm_eps", c.fgm_eps},
            {"pgd_eps", c.pgd_eps},
            {"pgd_alpha", c.pgd_alpha},
            {"pgd_k", c.pgd_k},
            {"freelb_adv_lr", c.freelb_adv_lr},
            {"freelb_mag", c.freelb_mag},
            {"freelb_k", c.freelb_k},
            {"pgd_accumulate_all", c.pgd_accumulate_all},
            {"per_token_norm", c.per_token_norm}};
}

inline AdvConfig adv_config_from_json(const json& j, AdvConfig base = AdvConfig{}) {
    serdetail::check_keys(j, "adversarial config",
                          {"method", "fgm_eps", "pgd_eps", "pgd_alpha", "pgd_k", "freelb_adv_lr", "freelb_mag",
                           "freelb_k", "pgd_accumulate_all", "per_token_norm"});
    AdvConfig c = base;
    serdetail::load(j, "method", c.method);
    serdetail::load(j, "fgm_eps", c.fgm_eps);
    serdetail::load(j, "pgd_eps", c.pgd_eps);
    serdetail::load(j, "pgd_alpha", c.pgd_alpha);
    serdetail::load(j, "pgd_k", c.pgd_k);
    serdetail::load(j, "freelb_adv_lr", c.freelb_adv_lr);
    serdetail::load(j, "freelb_mag", c.freelb_mag);
    serdetail::load(j, "freelb_k", c.freelb_k);
    serdetail::load(j, "pgd_accumulate_all", c.pgd_accumulate_all);
    serdetail::load(j, "per_token_norm", c.per_token_norm);
    return c;
}

inline json augment_config_to_json(const AugmentConfig& c) {
    return {{"mode", c.mode}, {"max_len", c.max_len}, {"rate", c.rate}, {"seed", c.seed}};
}

inline AugmentConfig augment_config_from_json(const json& j) {
    serdetail::check_keys(j, "augment config", {"mode", "max_len", "rate", "seed"});
    AugmentConfig c;
    serdetail::load(j, "mode", c.mode);
    serdetail::load(j, "max_len", c.max_len);
    serdetail::load(j, "rate", c.rate);
    serdetail::load(j, "seed", c.seed);
    c.validate();
    return c;
}

inline json train_config_to_json(const TrainConfig& c) {
    json augs = json::array();
    for (const auto& a : c.augment) augs.push_back(augment_config_to_json(a));
    return {{"lr", c.lr},
            {"warmup_proportion", c.warmup_proportion},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"adversarial", c.adversarial},
            {"adv", adv_config_to_json(c.adv)},
            {"rdrop", c.rdrop},
            {"augment", augs}};
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig base = TrainConfig{}) {
    serdetail::check_keys(j, "train config",
                          {"lr", "warmup_proportion", "batch_size", "epochs", "seed", "adversarial", "adv",
                           "rdrop", "augment"});
    TrainConfig c = base;
    serdetail::load(j, "lr", c.lr);
    serdetail::load(j, "warmup_proportion", c.warmup_proportion);
    serdetail::load(j, "batch_size", c.batch_size);
    serdetail::load(j, "epochs", c.epochs);
    serdetail::load(j, "seed", c.seed);
    serdetail::load(j, "adversarial", c.adversarial);
    if (j.contains("adv")) c.adv = adv_config_from_json(j.at("adv"), c.adv);
    serdetail::load(j, "rdrop", c.rdrop);
    if (j.contains("augment")) {
        c.augment.clear();
        const json& a = j.at("augment");
        if (a.is_null()) {
        } else if (a.is_array()) {
            for (const auto& item : a) c.augment.push_back(augment_config_from_json(item));
        } else {
            c.augment.push_back(augment_config_from_json(a));
        }
    }
    return c;
}

// --- model directory: checkpoint.json + model_config.json side by side ---

inline void save_model(const std::filesystem::path& dir, const Model& m) {
    std::filesystem::create_directories(dir);
    write_file(dir / "checkpoint.json", params_to_json(m.params).dump(2) + "\n");
    json meta = {{"model", model_config_to_json(m.config)},
                 {"vocab",
                  {{"chars", m.chars.items}, {"labels", m.labels.items}, {"languages", m.languages.items}}}};
    write_file(dir / "model_config.json", meta.dump(2) + "\n");
}

inline Model load_model(const std::filesystem::path& dir) {
    json meta = parse_json(read_file(dir / "model_config.json"), (dir / "model_config.json").string());
    serdetail::check_keys(meta, "model_config.json", {"model", "vocab"});
    Model m;
    m.config = model_config_from_json(meta.at("model"));
    const json& vocab = meta.at("vocab");
    serdetail::check_keys(vocab, "vocab", {"chars", "labels", "languages"});
    for (const auto& s : vocab.at("chars")) m.chars.add(s.get<std::string>());
    for (const auto& s : vocab.at("labels")) m.labels.add(s.get<std::string>());
    for (const auto& s : vocab.at("languages")) m.languages.add(s.get<std::string>());
    if (m.chars.size() != m.config.n_chars || m.labels.size() != m.config.n_labels ||
        m.languages.size() != m.config.n_languages)
        throw ValidationError("vocab sizes disagree with the model config in " + dir.string());
    m.params = params_from_json(parse_json(read_file(dir / "checkpoint.json"), "checkpoint.json"));
    for (auto& [name, t] : m.params.items) t.set_requires_grad(true);
    return m;
}

// --- evaluation report: fractions at fixed 6 decimal places ---

inline std::string eval_report_to_json(const EvalReport& r) {
    std::string out = "{\n  \"macro_f1\": " + serdetail::fixed6(r.macro_f1) + ",\n  \"per_class\": {";
    bool first = true;
    for (const auto& [cls, m] : r.per_class) {
        if (!first) out += ",";
        first = false;
        out += "\n    \"" + cls + "\": {\"precision\": " + serdetail::fixed6(m.precision) +
               ", \"recall\": " + serdetail::fixed6(m.recall) + ", \"f1\": " + serdetail::fixed6(m.f1) +
               ", \"support\": " + std::to_string(m.support) + "}";
    }
    out += first ? "}\n}\n" : "\n  }\n}\n";
    return out;
}

// --- training history CSV ---

inline std::string metrics_to_csv(const std::vector<EpochMetrics>& history) {
    std::string out = "epoch,train_loss,dev_macro_f1\n";
    char buf[96];
    for (const auto& h : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g\n", h.epoch, h.train_loss, h.dev_macro_f1);
        out += buf;
    }
    return out;
}

// --- prediction sidecar ---

inline std::string sidecar_to_json(const PredictionSet& p) {
    json j = {{"model_id", p.model_id}, {"dev_macro_f1", p.dev_macro_f1}};
    return j.dump(2) + "\n";
}

inline void load_sidecar(const std::filesystem::path& path, PredictionSet& p) {
    json j = parse_json(read_file(path), path.string());
    serdetail::check_keys(j, path.string(), {"model_id", "dev_macro_f1"});
    serdetail::load(j, "model_id", p.model_id);
    serdetail::load(j, "dev_macro_f1", p.dev_macro_f1);
}

}  // namespace lexner
