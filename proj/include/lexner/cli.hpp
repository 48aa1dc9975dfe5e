#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lexner/adversarial.hpp"
#include "lexner/augment.hpp"
#include "lexner/corpus.hpp"
#include "lexner/ensemble.hpp"
#include "lexner/lexgraph.hpp"
#include "lexner/lexicon.hpp"
#include "lexner/model.hpp"
#include "lexner/serialize.hpp"
#include "lexner/train.hpp"
#include "lexner/util.hpp"

namespace lexner::cli {

namespace fs = std::filesystem;

inline Dataset load_corpus(const fs::path& path) {
    return parse_conll(read_file(path), path.filename().string());
}

inline Lexicon load_lexicon_file(const fs::path& path, std::ostream& log = std::cerr) {
    LexiconLoadResult r = load_embeddings(read_file(path));
    if (r.duplicates > 0)
        log << "warning: " << r.duplicates << " duplicate word(s) in " << path.string() << ", first kept\n";
    return std::move(r.lexicon);
}

// ---- ingest ----

inline int cmd_ingest(const std::string& in, bool strict) {
    Dataset d = load_corpus(in);
    size_t tokens = 0, violations = 0;
    std::map<std::string, size_t> languages;
    std::map<std::string, size_t> spans;
    for (const auto& s : d.sentences) {
        tokens += s.tokens.size();
        ++languages[s.language.empty() ? "(none)" : s.language];
        std::vector<int> bad = validate_bio(s);
        violations += bad.size();
        for (int idx : bad)
            std::cerr << "BIO violation: sentence " << s.id << " index " << idx << " (" << s.labels[static_cast<size_t>(idx)]
                      << ")\n";
        if (bad.empty())
            for (const auto& sp : extract_spans(s)) ++spans[sp.cls];
    }
    json stats = {{"sentences", d.sentences.size()},
                  {"tokens", tokens},
                  {"languages", languages},
                  {"entity_spans", spans},
                  {"bio_violations", violations}};
    std::cout << stats.dump(2) << "\n";
    if (strict && violations > 0) {
        std::cerr << "error: corpus has " << violations << " BIO violation(s)\n";
        return 1;
    }
    return 0;
}

// ---- augment ----

inline int cmd_augment(const std::string& in, const std::string& out, AugmentConfig cfg,
                       const std::string& config_path) {
    if (!config_path.empty())
        cfg = augment_config_from_json(parse_json(read_file(config_path), config_path));
    cfg.validate();
    Dataset d = load_corpus(in);
    std::vector<std::string> warnings;
    Dataset augmented = apply_augment(d, cfg, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    write_file(out, write_conll(augmented));
    std::cerr << "wrote " << augmented.sentences.size() << " sentences to " << out << "\n";
    return 0;
}

// ---- lexicon ----

inline int cmd_lexicon(const std::string& lexicon_path, const std::string& corpus_path) {
    LexiconLoadResult r = load_embeddings(read_file(lexicon_path));
    json report = {{"words", r.lexicon.size()}, {"dim", r.lexicon.dim}, {"duplicates", r.duplicates}};
    if (!corpus_path.empty()) {
        Dataset d = load_corpus(corpus_path);
        size_t total_units = 0, covered_units = 0, total_matches = 0;
        for (const auto& s : d.sentences) {
            auto matches = match_spans(r.lexicon, s.tokens);
            total_matches += matches.size();
            auto cover = char_word_index(matches, static_cast<int>(s.tokens.size()));
            total_units += s.tokens.size();
            for (const auto& lst : cover)
                if (!lst.empty()) ++covered_units;
        }
        report["corpus"] = {{"sentences", d.sentences.size()},
                            {"units", total_units},
                            {"covered_units", covered_units},
                            {"coverage", total_units ? static_cast<double>(covered_units) / static_cast<double>(total_units) : 0.0},
                            {"matches", total_matches}};
    }
    std::cout << report.dump(2) << "\n";
    return 0;
}

// ---- graph dump ----

inline int cmd_graph(const std::string& lexicon_path, const std::string& corpus_path, int index,
                     const std::string& id, const std::string& graphs, bool t_word_word) {
    Lexicon lex = load_lexicon_file(lexicon_path);
    Dataset d = load_corpus(corpus_path);
    const Sentence* target = nullptr;
    if (!id.empty()) {
        for (const auto& s : d.sentences)
            if (s.id == id) target = &s;
        if (target == nullptr) throw ValidationError("no sentence with id '" + id + "'");
    } else {
        if (index < 0 || static_cast<size_t>(index) >= d.sentences.size())
            throw ValidationError("sentence index " + std::to_string(index) + " out of range");
        target = &d.sentences[static_cast<size_t>(index)];
    }

    auto matches = match_spans(lex, target->tokens);
    int n = static_cast<int>(target->tokens.size());
    json nodes = json::array();
    for (const auto& t : target->tokens) nodes.push_back(t);
    json words = json::array();
    for (const auto& m : matches)
        words.push_back({{"start", m.start}, {"end", m.end}, {"word", lex.words[static_cast<size_t>(m.word_id)]}});

    auto edges_of = [](const Tensor& a) {
        json edges = json::array();
        for (int i = 0; i < a.rows(); ++i)
            for (int j = i + 1; j < a.cols(); ++j)
                if (a.at(i, j) != 0.0) edges.push_back({i, j});
        return edges;
    };
    json out = {{"id", target->id}, {"chars", nodes}, {"words", words}, {"edges", json::object()}};
    for (char g : graphs) {
        switch (g) {
            case 'C': out["edges"]["C"] = edges_of(build_c_graph(matches, n)); break;
            case 'T': out["edges"]["T"] = edges_of(build_t_graph(matches, n, t_word_word)); break;
            case 'L': out["edges"]["L"] = edges_of(build_l_graph(matches, n)); break;
            default: throw ValidationError(std::string("unknown graph '") + g + "'");
        }
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ---- shared train/predict plumbing ----

struct TrainJob {
    fs::path train_path, dev_path, test_path;  // test optional
    fs::path out_dir;
    json model_json = json::object();
    json train_json = json::object();
    std::string lexicon_path;
    std::string model_id = "model";
    std::string init_from;  // model dir to fine-tune from
};

// Fine-tuning keeps the parent's vocabularies; parameters shared by name and
// shape carry over, newly enabled modules start from their seeded init.
inline Model finetune_model(const Model& parent, ModelConfig cfg, uint64_t seed) {
    cfg.n_chars = parent.chars.size();
    cfg.n_labels = parent.labels.size();
    cfg.n_languages = parent.languages.size();
    cfg.validate();
    Model m;
    m.config = cfg;
    m.chars = parent.chars;
    m.labels = parent.labels;
    m.languages = parent.languages;
    m.params = init_params(cfg, m.languages, seed);
    for (auto& [name, t] : m.params.items) {
        if (!parent.params.has(name)) continue;
        const Tensor& src = parent.params.get(name);
        if (src.rows() == t.rows() && src.cols() == t.cols()) t.values() = src.values();
    }
    return m;
}

struct TrainOutcome {
    double dev_macro_f1 = 0.0;
    int best_epoch = -1;
};

inline TrainOutcome run_train_job(const TrainJob& job, const Dataset* train_override = nullptr) {
    Dataset train_ds = train_override != nullptr ? *train_override : load_corpus(job.train_path);
    Dataset dev_ds = load_corpus(job.dev_path);

    std::optional<Lexicon> lexicon;
    if (!job.lexicon_path.empty()) lexicon = load_lexicon_file(job.lexicon_path);

    TrainConfig tc = train_config_from_json(job.train_json);

    Model model;
    if (!job.init_from.empty()) {
        Model parent = load_model(job.init_from);
        ModelConfig cfg = model_config_from_json(job.model_json, parent.config);
        if (cfg.needs_lexicon() && cfg.word_dim == 0 && lexicon) cfg.word_dim = lexicon->dim;
        model = finetune_model(parent, cfg, tc.seed);
    } else {
        ModelConfig cfg = model_config_from_json(job.model_json);
        if (cfg.needs_lexicon() && cfg.word_dim == 0 && lexicon) cfg.word_dim = lexicon->dim;
        model = build_model(cfg, train_ds, tc.seed);
    }

    TrainResult result = train(model, train_ds, dev_ds, tc, lexicon ? &*lexicon : nullptr);

    fs::create_directories(job.out_dir);
    save_model(job.out_dir, model);
    write_file(job.out_dir / "metrics.csv", metrics_to_csv(result.history));
    json meta = {{"model_id", job.model_id}, {"dev_macro_f1", result.best_dev_f1}, {"best_epoch", result.best_epoch}};
    write_file(job.out_dir / "meta.json", meta.dump(2) + "\n");

    PredictionSet dev_pred = predict(model, dev_ds, lexicon ? &*lexicon : nullptr, job.model_id);
    dev_pred.dev_macro_f1 = result.best_dev_f1;
    write_file(job.out_dir / "dev_eval.json", eval_report_to_json(macro_f1(dev_ds, dev_pred)));

    if (!job.test_path.empty()) {
        Dataset test_ds = load_corpus(job.test_path);
        PredictionSet test_pred = predict(model, test_ds, lexicon ? &*lexicon : nullptr, job.model_id);
        test_pred.dev_macro_f1 = result.best_dev_f1;
        Dataset pred_ds = test_ds;
        for (size_t s = 0; s < pred_ds.sentences.size(); ++s) pred_ds.sentences[s].labels = test_pred.labels[s];
        write_file(job.out_dir / "pred.conll", write_conll(pred_ds));
        write_file(job.out_dir / "pred.conll.meta.json", sidecar_to_json(test_pred));
    }
    return {result.best_dev_f1, result.best_epoch};
}

inline int cmd_train(const TrainJob& job) {
    TrainOutcome outcome = run_train_job(job);
    std::cerr << "best dev macro-F1 " << outcome.dev_macro_f1 << " at epoch " << outcome.best_epoch << "\n";
    return 0;
}

// ---- predict ----

inline int cmd_predict(const std::string& model_dir, const std::string& in, const std::string& out,
                       const std::string& lexicon_path) {
    Model model = load_model(model_dir);
    std::optional<Lexicon> lexicon;
    if (!lexicon_path.empty()) lexicon = load_lexicon_file(lexicon_path);
    if (model.config.needs_lexicon() && !lexicon)
        throw ValidationError("model uses the lexicon adapter/graphs; pass --lexicon");

    std::string model_id = "model";
    double dev_f1 = 0.0;
    fs::path meta_path = fs::path(model_dir) / "meta.json";
    if (fs::exists(meta_path)) {
        json meta = parse_json(read_file(meta_path), meta_path.string());
        if (meta.contains("model_id")) model_id = meta.at("model_id").get<std::string>();
        if (meta.contains("dev_macro_f1")) dev_f1 = meta.at("dev_macro_f1").get<double>();
    }

    Dataset d = load_corpus(in);
    PredictionSet pred = predict(model, d, lexicon ? &*lexicon : nullptr, model_id);
    pred.dev_macro_f1 = dev_f1;
    Dataset pred_ds = d;
    for (size_t s = 0; s < pred_ds.sentences.size(); ++s) pred_ds.sentences[s].labels = pred.labels[s];
    write_file(out, write_conll(pred_ds));
    write_file(out + ".meta.json", sidecar_to_json(pred));
    return 0;
}

// ---- eval ----

inline int cmd_eval(const std::string& gold_path, const std::string& pred_path, const std::string& out) {
    Dataset gold = load_corpus(gold_path);
    for (const auto& s : gold.sentences)
        if (!validate_bio(s).empty())
            throw ValidationError("gold corpus has invalid BIO in sentence " + s.id + "; repair it first");
    Dataset pred_ds = load_corpus(pred_path);
    size_t repaired = 0;
    for (auto& s : pred_ds.sentences) {
        size_t bad = validate_bio(s).size();
        if (bad > 0) {
            repaired += bad;
            repair_bio(s.labels);
        }
    }
    if (repaired > 0) std::cerr << "warning: repaired " << repaired << " illegal I- tag(s) in predictions\n";
    PredictionSet pred = PredictionSet::from_dataset(pred_ds, pred_path);
    std::string report = eval_report_to_json(macro_f1(gold, pred));
    if (out.empty())
        std::cout << report;
    else
        write_file(out, report);
    return 0;
}

// ---- vote / pseudo ----

inline std::vector<PredictionSet> load_prediction_files(const std::vector<std::string>& paths,
                                                        std::vector<Dataset>* datasets = nullptr) {
    std::vector<PredictionSet> preds;
    for (const auto& p : paths) {
        Dataset d = load_corpus(p);
        for (auto& s : d.sentences) repair_bio(s.labels);
        PredictionSet ps = PredictionSet::from_dataset(d, p);
        fs::path sidecar = p + ".meta.json";
        if (fs::exists(sidecar)) load_sidecar(sidecar, ps);
        if (datasets != nullptr) datasets->push_back(d);
        preds.push_back(std::move(ps));
    }
    return preds;
}

inline int cmd_vote(const std::vector<std::string>& pred_paths, const std::string& out) {
    std::vector<Dataset> datasets;
    std::vector<PredictionSet> preds = load_prediction_files(pred_paths, &datasets);
    for (size_t k = 1; k < datasets.size(); ++k)
        for (size_t s = 0; s < datasets[0].sentences.size() && s < datasets[k].sentences.size(); ++s)
            if (datasets[k].sentences[s].tokens != datasets[0].sentences[s].tokens)
                throw ValidationError("prediction files disagree on tokens at sentence " +
                                      datasets[0].sentences[s].id);
    PredictionSet voted = vote(preds);
    Dataset out_ds = datasets[0];
    for (size_t s = 0; s < out_ds.sentences.size(); ++s) out_ds.sentences[s].labels = voted.labels[s];
    write_file(out, write_conll(out_ds));
    write_file(out + ".meta.json", sidecar_to_json(voted));
    return 0;
}

inline int cmd_pseudo(const std::string& unlabeled_path, const std::vector<std::string>& pred_paths,
                      const std::string& out) {
    Dataset unlabeled = load_corpus(unlabeled_path);
    std::vector<PredictionSet> preds = load_prediction_files(pred_paths);
    Dataset selected = select_pseudo(unlabeled, preds);
    write_file(out, write_conll(selected));
    std::cerr << "selected " << selected.sentences.size() << " of " << unlabeled.sentences.size()
              << " sentences\n";
    return 0;
}

// ---- pipeline ----

struct StageSpec {
    std::string name;
    std::string kind;  // train | vote | pseudo
    std::string train, dev, test, gold, unlabeled, lexicon;
    std::string init_from;     // train/pseudo: stage whose best member seeds fine-tuning
    std::string members_from;  // vote/pseudo: stage whose member predictions are consumed
    double pseudo_fraction = 1.0;
    json model_json = json::object();
    json train_json = json::object();
    std::vector<json> members = {json::object()};
    json raw;
};

struct PipelineSpec {
    fs::path output_dir;
    int workers = 2;
    uint64_t seed = 42;
    std::vector<StageSpec> stages;
};

inline PipelineSpec pipeline_from_json(const json& j, const fs::path& config_dir) {
    serdetail::check_keys(j, "pipeline config", {"output_dir", "workers", "seed", "stages"});
    PipelineSpec spec;
    if (!j.contains("output_dir")) throw ValidationError("pipeline config needs output_dir");
    spec.output_dir = config_dir / j.at("output_dir").get<std::string>();
    serdetail::load(j, "workers", spec.workers);
    serdetail::load(j, "seed", spec.seed);
    if (!j.contains("stages") || !j.at("stages").is_array() || j.at("stages").empty())
        throw ValidationError("pipeline config needs a non-empty stages array");
    std::set<std::string> names;
    for (const auto& sj : j.at("stages")) {
        serdetail::check_keys(sj, "stage",
                              {"name", "kind", "train", "dev", "test", "gold", "unlabeled", "lexicon",
                               "init_from", "members_from", "pseudo_fraction", "model", "train_params", "members"});
        StageSpec s;
        s.raw = sj;
        serdetail::load(sj, "name", s.name);
        serdetail::load(sj, "kind", s.kind);
        if (s.name.empty() || s.kind.empty()) throw ValidationError("every stage needs a name and a kind");
        if (!names.insert(s.name).second) throw ValidationError("duplicate stage name '" + s.name + "'");
        if (s.kind != "train" && s.kind != "vote" && s.kind != "pseudo")
            throw ValidationError("stage kind must be train, vote or pseudo, got '" + s.kind + "'");
        auto path_of = [&](const char* key) {
            std::string v;
            serdetail::load(sj, key, v);
            return v.empty() ? v : (config_dir / v).string();
        };
        s.train = path_of("train");
        s.dev = path_of("dev");
        s.test = path_of("test");
        s.gold = path_of("gold");
        s.unlabeled = path_of("unlabeled");
        s.lexicon = path_of("lexicon");
        serdetail::load(sj, "init_from", s.init_from);
        serdetail::load(sj, "members_from", s.members_from);
        serdetail::load(sj, "pseudo_fraction", s.pseudo_fraction);
        if (sj.contains("model")) s.model_json = sj.at("model");
        if (sj.contains("train_params")) s.train_json = sj.at("train_params");
        if (sj.contains("members")) {
            s.members.clear();
            for (const auto& m : sj.at("members")) s.members.push_back(m);
            if (s.members.empty()) throw ValidationError("stage '" + s.name + "' has an empty members list");
        }
        spec.stages.push_back(std::move(s));
    }
    return spec;
}

struct StageState {
    fs::path dir;
    std::string hash;
    std::vector<fs::path> member_dirs;
    int best_member = -1;
};

inline std::string stage_hash(const StageSpec& s, const std::map<std::string, StageState>& done) {
    uint64_t h = fnv1a64(s.raw.dump());
    for (const std::string& p : {s.train, s.dev, s.test, s.gold, s.unlabeled, s.lexicon})
        if (!p.empty()) h = fnv1a64(read_file(p), h);
    for (const std::string& parent : {s.init_from, s.members_from})
        if (!parent.empty()) {
            auto it = done.find(parent);
            if (it == done.end())
                throw ValidationError("stage '" + s.name + "' references stage '" + parent +
                                      "' which does not precede it");
            h = fnv1a64(it->second.hash, h);
        }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline json merge_objects(const json& base, const json& overrides) {
    json out = base.is_object() ? base : json::object();
    if (overrides.is_object())
        for (const auto& [k, v] : overrides.items()) out[k] = v;
    return out;
}

// Runs the member list of a train-like stage with a bounded worker pool.
inline void run_members(const PipelineSpec& spec, const StageSpec& stage, StageState& state,
                        const std::map<std::string, StageState>& done, const Dataset* train_override) {
    int workers = spec.workers;
    if (const char* env = std::getenv("LEXNER_WORKERS")) workers = std::max(1, std::atoi(env));
    workers = std::max(1, std::min({workers, static_cast<int>(stage.members.size()), 64}));

    std::counting_semaphore<64> slots(workers);
    std::vector<std::future<void>> futures;
    for (size_t i = 0; i < stage.members.size(); ++i) {
        fs::path member_dir = state.dir / ("member-" + std::to_string(i));
        state.member_dirs.push_back(member_dir);
        TrainJob job;
        job.train_path = stage.train;
        job.dev_path = stage.dev;
        if (!stage.test.empty()) job.test_path = stage.test;
        job.out_dir = member_dir;
        job.model_json = stage.model_json;
        json tj = merge_objects(stage.train_json, stage.members[i]);
        if (!tj.contains("seed")) tj["seed"] = spec.seed;
        job.train_json = tj;
        job.lexicon_path = stage.lexicon;
        job.model_id = stage.name + "/member-" + std::to_string(i);
        if (!stage.init_from.empty()) {
            const StageState& parent = done.at(stage.init_from);
            job.init_from = parent.member_dirs[static_cast<size_t>(parent.best_member)].string();
        }
        slots.acquire();
        futures.push_back(std::async(std::launch::async, [job, train_override, &slots]() {
            struct Release {
                std::counting_semaphore<64>* s;
                ~Release() { s->release(); }
            } release{&slots};
            run_train_job(job, train_override);
        }));
    }
    for (auto& f : futures) f.get();

    double best = -1.0;
    for (size_t i = 0; i < state.member_dirs.size(); ++i) {
        json meta = parse_json(read_file(state.member_dirs[i] / "meta.json"), "meta.json");
        double f1 = meta.at("dev_macro_f1").get<double>();
        if (f1 > best) {
            best = f1;
            state.best_member = static_cast<int>(i);
        }
    }
}

inline void write_stage_eval(const StageSpec& stage, const fs::path& pred_file, const fs::path& out) {
    Dataset gold = load_corpus(stage.gold);
    Dataset pred_ds = load_corpus(pred_file);
    for (auto& s : pred_ds.sentences) repair_bio(s.labels);
    write_file(out, eval_report_to_json(macro_f1(gold, PredictionSet::from_dataset(pred_ds))));
}

inline int cmd_pipeline(const std::string& config_path) {
    json cfg = parse_json(read_file(config_path), config_path);
    PipelineSpec spec = pipeline_from_json(cfg, fs::path(config_path).parent_path());
    fs::create_directories(spec.output_dir);

    std::map<std::string, StageState> done;
    for (const StageSpec& stage : spec.stages) {
        StageState state;
        state.hash = stage_hash(stage, done);
        state.dir = spec.output_dir / (stage.name + "-" + state.hash);
        fs::path done_file = state.dir / "DONE";

        bool cached = fs::exists(done_file) && read_file(done_file) == state.hash + "\n";
        if (cached) {
            json sj = parse_json(read_file(state.dir / "stage.json"), "stage.json");
            for (const auto& m : sj.at("members")) state.member_dirs.push_back(state.dir / m.get<std::string>());
            state.best_member = sj.at("best_member").get<int>();
            std::cerr << "[stage " << stage.name << "] cached (" << state.hash << ")\n";
            done[stage.name] = state;
            continue;
        }
        std::error_code ec;
        fs::remove_all(state.dir, ec);
        fs::create_directories(state.dir);
        std::cerr << "[stage " << stage.name << "] running (" << state.hash << ")\n";

        if (stage.kind == "train") {
            if (stage.train.empty() || stage.dev.empty())
                throw ValidationError("train stage '" + stage.name + "' needs train and dev paths");
            run_members(spec, stage, state, done, nullptr);
            if (!stage.gold.empty() && !stage.test.empty())
                for (const auto& mdir : state.member_dirs)
                    write_stage_eval(stage, mdir / "pred.conll", mdir / "eval.json");
        } else if (stage.kind == "vote") {
            if (stage.members_from.empty())
                throw ValidationError("vote stage '" + stage.name + "' needs members_from");
            const StageState& parent = done.at(stage.members_from);
            std::vector<std::string> pred_paths;
            for (const auto& mdir : parent.member_dirs) {
                fs::path p = mdir / "pred.conll";
                if (!fs::exists(p))
                    throw ValidationError("stage '" + stage.members_from + "' has no test predictions in " +
                                          p.string());
                pred_paths.push_back(p.string());
            }
            std::vector<Dataset> datasets;
            std::vector<PredictionSet> preds = load_prediction_files(pred_paths, &datasets);
            PredictionSet voted = vote(preds);
            Dataset out_ds = datasets[0];
            for (size_t s = 0; s < out_ds.sentences.size(); ++s) out_ds.sentences[s].labels = voted.labels[s];
            write_file(state.dir / "pred.conll", write_conll(out_ds));
            write_file(state.dir / "pred.conll.meta.json", sidecar_to_json(voted));
            if (!stage.gold.empty()) write_stage_eval(stage, state.dir / "pred.conll", state.dir / "eval.json");
            state.best_member = 0;
        } else {  // pseudo
            if (stage.members_from.empty() || stage.unlabeled.empty() || stage.train.empty() || stage.dev.empty())
                throw ValidationError("pseudo stage '" + stage.name +
                                      "' needs members_from, unlabeled, train and dev");
            const StageState& parent = done.at(stage.members_from);
            Dataset unlabeled = load_corpus(stage.unlabeled);
            std::vector<PredictionSet> preds;
            for (const auto& mdir : parent.member_dirs) {
                Model member = load_model(mdir);
                std::optional<Lexicon> lexicon;
                if (!stage.lexicon.empty()) lexicon = load_lexicon_file(stage.lexicon);
                if (member.config.needs_lexicon() && !lexicon)
                    throw ValidationError("pseudo stage '" + stage.name + "' needs the lexicon used by " +
                                          mdir.string());
                preds.push_back(predict(member, unlabeled, lexicon ? &*lexicon : nullptr, mdir.filename().string()));
            }
            Dataset selected = select_pseudo(unlabeled, preds);
            write_file(state.dir / "pseudo.conll", write_conll(selected));
            Dataset train_ds = load_corpus(stage.train);
            Dataset merged = merge_for_finetune(train_ds, selected, stage.pseudo_fraction, spec.seed);
            write_file(state.dir / "merged_train.conll", write_conll(merged));

            StageSpec train_like = stage;
            if (train_like.init_from.empty()) train_like.init_from = stage.members_from;
            run_members(spec, train_like, state, done, &merged);
            if (!stage.gold.empty() && !stage.test.empty())
                for (const auto& mdir : state.member_dirs)
                    write_stage_eval(stage, mdir / "pred.conll", mdir / "eval.json");
        }

        json member_names = json::array();
        for (const auto& m : state.member_dirs) member_names.push_back(m.filename().string());
        json sj = {{"name", stage.name},
                   {"kind", stage.kind},
                   {"hash", state.hash},
                   {"members", member_names},
                   {"best_member", state.best_member}};
        write_file(state.dir / "stage.json", sj.dump(2) + "\n");
        write_file(done_file, state.hash + "\n");
        done[stage.name] = state;
    }
    return 0;
}

// ---- entry point ----

inline int run(std::vector<std::string> args) {
    CLI::App app{"desk-scale multilingual NER pipeline: corpora, augmentation, lexicon graphs, training, "
                 "ensembles"};
    app.require_subcommand(1);

    // ingest
    std::string in_path, out_path, config_path;
    bool strict = false;
    auto* ingest = app.add_subcommand("ingest", "parse a CoNLL corpus, validate BIO, print stats");
    ingest->add_option("--in", in_path, "corpus path")->required();
    ingest->add_flag("--strict", strict, "fail on BIO violations");

    // augment
    AugmentConfig aug_cfg;
    aug_cfg.mode = "mulsent-uni";
    auto* augment = app.add_subcommand("augment", "apply one augmentation operator, write CoNLL");
    augment->add_option("--in", in_path, "corpus path")->required();
    augment->add_option("--out", out_path, "output path")->required();
    augment->add_option("--mode", aug_cfg.mode,
                        "bisent-uni|bisent-mix|mulsent-uni|mulsent-mix|mention-replace|shuffle-segments");
    augment->add_option("--max-len", aug_cfg.max_len, "token budget for mulsent packing");
    augment->add_option("--rate", aug_cfg.rate, "per-entity / per-segment probability");
    augment->add_option("--seed", aug_cfg.seed, "rng seed");
    augment->add_option("--config", config_path, "JSON config {mode,max_len,rate,seed} (overrides flags)");

    // lexicon
    std::string lexicon_path, corpus_path;
    auto* lexicon = app.add_subcommand("lexicon", "load word embeddings, report corpus coverage");
    lexicon->add_option("--lexicon", lexicon_path, "embedding text file")->required();
    lexicon->add_option("--in", corpus_path, "corpus to measure coverage on");

    // graph
    int sent_index = 0;
    std::string sent_id, graphs = "CTL";
    bool no_t_ww = false;
    auto* graph = app.add_subcommand("graph", "dump C/T/L graphs of one sentence as JSON");
    graph->add_option("--lexicon", lexicon_path, "embedding text file")->required();
    graph->add_option("--in", in_path, "corpus path")->required();
    graph->add_option("--index", sent_index, "sentence index (default 0)");
    graph->add_option("--id", sent_id, "sentence id (overrides --index)");
    graph->add_option("--graphs", graphs, "subset of CTL to dump");
    graph->add_flag("--no-t-word-word", no_t_ww, "drop word-word transition edges from the T graph");

    // train
    std::string train_path, dev_path, test_path, model_dir, model_id = "model", init_from;
    auto* train_cmd = app.add_subcommand("train", "train one model, write checkpoint + metrics");
    train_cmd->add_option("--train", train_path, "training corpus")->required();
    train_cmd->add_option("--dev", dev_path, "dev corpus (model selection)")->required();
    train_cmd->add_option("--test", test_path, "optional corpus to predict after training");
    train_cmd->add_option("--out", model_dir, "output directory")->required();
    train_cmd->add_option("--config", config_path, "JSON config {\"model\":{...},\"train\":{...}}");
    train_cmd->add_option("--lexicon", lexicon_path, "embedding text file (adapter/graphs)");
    train_cmd->add_option("--model-id", model_id, "name recorded in meta.json");
    train_cmd->add_option("--init-from", init_from, "model directory to fine-tune from");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "checkpoint -> CoNLL predictions + sidecar");
    predict_cmd->add_option("--model", model_dir, "model directory")->required();
    predict_cmd->add_option("--in", in_path, "corpus path")->required();
    predict_cmd->add_option("--out", out_path, "prediction file")->required();
    predict_cmd->add_option("--lexicon", lexicon_path, "embedding text file");

    // eval
    std::string gold_path, pred_path;
    auto* eval_cmd = app.add_subcommand("eval", "gold + predictions -> macro-F1 report JSON");
    eval_cmd->add_option("--gold", gold_path, "gold corpus")->required();
    eval_cmd->add_option("--pred", pred_path, "prediction corpus")->required();
    eval_cmd->add_option("--out", out_path, "write the report here instead of stdout");

    // vote
    std::vector<std::string> pred_paths;
    auto* vote_cmd = app.add_subcommand("vote", "token-level majority vote over prediction files");
    vote_cmd->add_option("--pred", pred_paths, "prediction files (sidecars auto-discovered)")
        ->required()
        ->expected(-1);
    vote_cmd->add_option("--out", out_path, "voted prediction file")->required();

    // pseudo
    std::string unlabeled_path;
    auto* pseudo_cmd = app.add_subcommand("pseudo", "unanimously predicted sentences -> pseudo dataset");
    pseudo_cmd->add_option("--unlabeled", unlabeled_path, "unlabeled corpus")->required();
    pseudo_cmd->add_option("--pred", pred_paths, "prediction files")->required()->expected(-1);
    pseudo_cmd->add_option("--out", out_path, "pseudo dataset output")->required();

    // pipeline
    auto* pipeline_cmd = app.add_subcommand("pipeline", "run the staged fine-tuning recipe from a config");
    pipeline_cmd->add_option("--config", config_path, "pipeline JSON")->required();

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (ingest->parsed()) return cmd_ingest(in_path, strict);
        if (augment->parsed()) return cmd_augment(in_path, out_path, aug_cfg, config_path);
        if (lexicon->parsed()) return cmd_lexicon(lexicon_path, corpus_path);
        if (graph->parsed()) return cmd_graph(lexicon_path, in_path, sent_index, sent_id, graphs, !no_t_ww);
        if (train_cmd->parsed()) {
            TrainJob job;
            job.train_path = train_path;
            job.dev_path = dev_path;
            job.test_path = test_path;
            job.out_dir = model_dir;
            job.lexicon_path = lexicon_path;
            job.model_id = model_id;
            job.init_from = init_from;
            if (!config_path.empty()) {
                json cfg = parse_json(read_file(config_path), config_path);
                serdetail::check_keys(cfg, "train config file", {"model", "train"});
                if (cfg.contains("model")) job.model_json = cfg.at("model");
                if (cfg.contains("train")) job.train_json = cfg.at("train");
            }
            return cmd_train(job);
        }
        if (predict_cmd->parsed()) return cmd_predict(model_dir, in_path, out_path, lexicon_path);
        if (eval_cmd->parsed()) return cmd_eval(gold_path, pred_path, out_path);
        if (vote_cmd->parsed()) return cmd_vote(pred_paths, out_path);
        if (pseudo_cmd->parsed()) return cmd_pseudo(unlabeled_path, pred_paths, out_path);
        if (pipeline_cmd->parsed()) return cmd_pipeline(config_path);
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 2;
    }
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(std::move(args));
}

}  // namespace lexner::cli
