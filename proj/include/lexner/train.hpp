#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "lexner/adversarial.hpp"
#include "lexner/augment.hpp"
#include "lexner/model.hpp"
#include "lexner/util.hpp"

namespace lexner {

struct TrainConfig {
    double lr = 5e-3;                 // desk-scale default; the schedule shape follows warmup->decay
    double warmup_proportion = 0.06;
    int batch_size = 32;
    int epochs = 30;
    uint64_t seed = 42;
    std::string adversarial = "none";  // none | FGM | PGD | FreeLB
    AdvConfig adv;
    bool rdrop = false;
    std::vector<AugmentConfig> augment;  // re-applied every epoch with epoch-derived seeds

    void validate() const {
        if (lr <= 0.0) throw ValidationError("lr must be positive");
        if (warmup_proportion < 0.0 || warmup_proportion > 0.5)
            throw ValidationError("warmup_proportion must be in [0, 0.5]");
        if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
        if (epochs < 1) throw ValidationError("epochs must be >= 1");
        if (adversarial != "none") {
            AdvConfig check = adv;
            check.method = adversarial;
            check.validate();
        }
        for (const auto& a : augment) a.validate();
    }
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_macro_f1 = 0.0;
};

struct TrainResult {
    ParamSet best_params;
    int best_epoch = -1;
    double best_dev_f1 = -1.0;
    std::vector<EpochMetrics> history;
};

// Concatenation operators partition the corpus, so their output replaces
// the epoch's data; the per-sentence operators (MR, SiS) produce transformed
// copies that are appended to the originals.
inline Dataset augmented_epoch_data(const Dataset& train, const std::vector<AugmentConfig>& ops, uint64_t seed,
                                    int epoch) {
    Dataset data = train;
    for (size_t i = 0; i < ops.size(); ++i) {
        AugmentConfig cfg = ops[i];
        cfg.seed = mix_seed(mix_seed(cfg.seed ^ seed, "epoch", static_cast<uint64_t>(epoch)), cfg.mode, i);
        if (cfg.mode == "mention-replace" || cfg.mode == "shuffle-segments") {
            Dataset transformed = apply_augment(data, cfg);
            size_t base = data.sentences.size();
            for (size_t s = 0; s < transformed.sentences.size(); ++s) {
                Sentence copy = transformed.sentences[s];
                copy.id = "aug" + std::to_string(epoch) + "-" + std::to_string(i) + ":" + copy.id;
                data.sentences.push_back(std::move(copy));
            }
            (void)base;
        } else {
            data = apply_augment(data, cfg);
        }
    }
    return data;
}

// Seeded-shuffle mini-batch training with the Adam warmup-decay schedule.
// Records per-epoch train loss and dev macro-F1 and returns the best-dev
// checkpoint (first epoch wins ties).
inline TrainResult train(Model& model, const Dataset& train_ds, const Dataset& dev_ds, const TrainConfig& tc,
                         const Lexicon* lexicon = nullptr) {
    tc.validate();
    if (train_ds.sentences.empty()) throw ValidationError("empty training set");

    // schedule length from the first epoch's (augmented) size
    size_t epoch0_size = augmented_epoch_data(train_ds, tc.augment, tc.seed, 0).sentences.size();
    long steps_per_epoch = static_cast<long>((epoch0_size + tc.batch_size - 1) / static_cast<size_t>(tc.batch_size));
    AdamOptimizer opt(tc.lr, steps_per_epoch * tc.epochs, tc.warmup_proportion);

    TrainResult result;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        Dataset epoch_data = augmented_epoch_data(train_ds, tc.augment, tc.seed, epoch);
        std::vector<EncodedSentence> encoded = encode_dataset(model, epoch_data, lexicon);

        std::vector<size_t> order(encoded.size());
        std::iota(order.begin(), order.end(), size_t{0});
        Rng shuffle_rng(mix_seed(tc.seed, "shuffle", static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        long batches = 0;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(tc.batch_size)) {
            Batch batch;
            size_t end = std::min(order.size(), begin + static_cast<size_t>(tc.batch_size));
            for (size_t i = begin; i < end; ++i) batch.sentences.push_back(&encoded[order[i]]);

            model.params.zero_grads();
            LossOptions opts;
            opts.training = true;
            opts.rdrop = tc.rdrop;
            opts.seed = mix_seed(tc.seed, "step", static_cast<uint64_t>(epoch) * 1000003ull + static_cast<uint64_t>(batches));

            double step_loss;
            if (tc.adversarial == "none") {
                Tape tape;
                LossParts lp = model_loss(tape, model, batch, opts);
                step_loss = lp.total.item();
                tape.backward(lp.total);
            } else {
                AdvConfig adv = tc.adv;
                adv.method = tc.adversarial;
                step_loss = adv_train_step(model, batch, adv, opts).loss;
            }
            if (!std::isfinite(step_loss))
                throw RuntimeFailure("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(batches));
            opt.step(model.params);
            loss_sum += step_loss;
            ++batches;
        }

        PredictionSet dev_pred = predict(model, dev_ds, lexicon);
        double dev_f1 = macro_f1(dev_ds, dev_pred).macro_f1;
        result.history.push_back({epoch, batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0, dev_f1});
        if (dev_f1 > result.best_dev_f1) {
            result.best_dev_f1 = dev_f1;
            result.best_epoch = epoch;
            result.best_params = model.params.clone();
        }
    }
    model.params = result.best_params.clone();
    return result;
}

// Token accuracy of greedy predictions against a labeled corpus.
inline double token_accuracy(const Model& m, const Dataset& d, const Lexicon* lexicon = nullptr) {
    PredictionSet pred = predict(m, d, lexicon);
    size_t total = 0, hit = 0;
    for (size_t s = 0; s < d.sentences.size(); ++s)
        for (size_t t = 0; t < d.sentences[s].labels.size(); ++t) {
            ++total;
            if (d.sentences[s].labels[t] == pred.labels[s][t]) ++hit;
        }
    return total ? static_cast<double>(hit) / static_cast<double>(total) : 1.0;
}

}  // namespace lexner
