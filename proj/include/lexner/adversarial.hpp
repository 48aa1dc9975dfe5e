#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lexner/compute.hpp"
#include "lexner/model.hpp"
#include "lexner/util.hpp"

namespace lexner {

struct AdvConfig {
    std::string method = "PGD";  // FGM | PGD | FreeLB
    double fgm_eps = 0.8;
    double pgd_eps = 1.0;
    double pgd_alpha = 0.1;
    int pgd_k = 3;
    double freelb_adv_lr = 0.3;
    double freelb_mag = 0.05;
    int freelb_k = 3;
    bool pgd_accumulate_all = false;  // accumulate intermediate ascent gradients too
    bool per_token_norm = false;      // row-wise norms instead of one global Frobenius

    void validate() const {
        if (method != "FGM" && method != "PGD" && method != "FreeLB")
            throw ValidationError("adversarial method must be FGM, PGD or FreeLB, got '" + method + "'");
        if (fgm_eps <= 0.0 || pgd_eps <= 0.0 || pgd_alpha <= 0.0 || freelb_adv_lr <= 0.0 || freelb_mag <= 0.0)
            throw ValidationError("adversarial magnitudes must be positive");
        if (pgd_k < 1 || freelb_k < 1) throw ValidationError("adversarial step counts must be >= 1");
    }
};

namespace advdetail {

inline void normalize_direction(Tensor& g, bool per_token) {
    if (per_token) {
        for (int i = 0; i < g.rows(); ++i) {
            double n = 0.0;
            for (int j = 0; j < g.cols(); ++j) n += g.at(i, j) * g.at(i, j);
            n = std::sqrt(n);
            if (n == 0.0) continue;
            for (int j = 0; j < g.cols(); ++j) g.at(i, j) /= n;
        }
    } else {
        double n = g.frobenius_norm();
        if (n == 0.0) return;
        for (auto& v : g.values()) v /= n;
    }
}

}  // namespace advdetail

// Projects delta onto the L2 ball of radius eps (global, or per row).
inline void project_ball(Tensor& delta, double eps, bool per_token = false) {
    if (per_token) {
        for (int i = 0; i < delta.rows(); ++i) {
            double n = 0.0;
            for (int j = 0; j < delta.cols(); ++j) n += delta.at(i, j) * delta.at(i, j);
            n = std::sqrt(n);
            if (n <= eps || n == 0.0) continue;
            for (int j = 0; j < delta.cols(); ++j) delta.at(i, j) *= eps / n;
        }
    } else {
        double n = delta.frobenius_norm();
        if (n > eps && n > 0.0) {
            double s = eps / n;
            for (auto& v : delta.values()) v *= s;
        }
    }
}

// delta = eps * g / ||g||2; zero gradient gives zero perturbation.
inline Tensor fgm_delta(const Tensor& g, double eps, bool per_token = false) {
    Tensor delta = g.clone();
    advdetail::normalize_direction(delta, per_token);
    for (auto& v : delta.values()) v *= eps;
    return delta;
}

// One projected-gradient-ascent step: delta + alpha * g/||g||, then back
// onto the eps ball.
inline Tensor pgd_step(const Tensor& delta, const Tensor& g_delta, double alpha, double eps,
                       bool per_token = false) {
    Tensor dir = g_delta.clone();
    advdetail::normalize_direction(dir, per_token);
    Tensor next = delta.clone();
    for (size_t i = 0; i < next.numel(); ++i) next.values()[i] += alpha * dir.values()[i];
    project_ball(next, eps, per_token);
    return next;
}

struct StepStats {
    double loss = 0.0;       // clean total loss (FreeLB: first ascent-point loss)
    double main_loss = 0.0;
    double disc_loss = 0.0;
    double adv_loss = 0.0;   // loss at the final adversarial point
};

namespace advdetail {

inline std::vector<std::vector<double>> snapshot_grads(const ParamSet& p) {
    std::vector<std::vector<double>> out;
    out.reserve(p.items.size());
    for (const auto& [name, t] : p.items) out.push_back(t.grad());
    return out;
}

inline void add_grads(ParamSet& p, const std::vector<std::vector<double>>& saved) {
    for (size_t i = 0; i < p.items.size(); ++i) {
        auto& g = p.items[i].second.grad();
        for (size_t k = 0; k < g.size(); ++k) g[k] += saved[i][k];
    }
}

inline void scale_grads(ParamSet& p, double s) {
    for (auto& [name, t] : p.items)
        for (auto& g : t.grad()) g *= s;
}

inline Tensor grad_as_tensor(const Tensor& t) {
    return Tensor::from(t.grad(), t.rows(), t.cols());
}

}  // namespace advdetail

// Inner maximization of the adversarial objective, leaving the combined
// parameter gradients accumulated in model.params.
//
//   FGM    : clean backward kept, one extra backward at x + eps*g/||g||.
//   PGD    : clean backward kept aside, K projected ascent steps on delta,
//            final backward at x+delta_K added to the clean gradients.
//            (pgd_accumulate_all keeps the intermediate backwards too.)
//   FreeLB : K ascent steps, every backward accumulated, gradients averaged
//            over K; delta starts uniform in a data-scaled ball.
inline StepStats adv_train_step(Model& model, const Batch& batch, const AdvConfig& cfg, LossOptions opts) {
    cfg.validate();
    StepStats stats;
    ParamSet& params = model.params;

    if (cfg.method == "FGM") {
        Tape t1;
        LossParts clean = model_loss(t1, model, batch, opts);
        stats.loss = clean.total.item();
        stats.main_loss = clean.main_value;
        stats.disc_loss = clean.disc_value;
        t1.backward(clean.total);
        Tensor delta = fgm_delta(advdetail::grad_as_tensor(clean.embedding), cfg.fgm_eps, cfg.per_token_norm);
        LossOptions adv_opts = opts;
        adv_opts.delta = &delta;
        Tape t2;
        LossParts adv = model_loss(t2, model, batch, adv_opts);
        stats.adv_loss = adv.total.item();
        t2.backward(adv.total);  // accumulates onto the clean gradients
        return stats;
    }

    if (cfg.method == "PGD") {
        Tape t1;
        LossParts clean = model_loss(t1, model, batch, opts);
        stats.loss = clean.total.item();
        stats.main_loss = clean.main_value;
        stats.disc_loss = clean.disc_value;
        t1.backward(clean.total);
        std::vector<std::vector<double>> clean_grads;
        if (!cfg.pgd_accumulate_all) clean_grads = advdetail::snapshot_grads(params);

        Tensor zero(clean.embedding.rows(), clean.embedding.cols());
        Tensor delta = pgd_step(zero, advdetail::grad_as_tensor(clean.embedding), cfg.pgd_alpha, cfg.pgd_eps,
                                cfg.per_token_norm);
        for (int k = 1; k < cfg.pgd_k; ++k) {
            if (!cfg.pgd_accumulate_all) params.zero_grads();
            LossOptions step_opts = opts;
            step_opts.delta = &delta;
            Tape t;
            LossParts lp = model_loss(t, model, batch, step_opts);
            t.backward(lp.total);
            delta = pgd_step(delta, advdetail::grad_as_tensor(lp.embedding), cfg.pgd_alpha, cfg.pgd_eps,
                             cfg.per_token_norm);
        }
        if (!cfg.pgd_accumulate_all) params.zero_grads();
        LossOptions final_opts = opts;
        final_opts.delta = &delta;
        Tape tf;
        LossParts adv = model_loss(tf, model, batch, final_opts);
        stats.adv_loss = adv.total.item();
        tf.backward(adv.total);
        if (!cfg.pgd_accumulate_all) advdetail::add_grads(params, clean_grads);
        return stats;
    }

    // FreeLB
    Tensor probe;
    {
        Tape tp;
        probe = embed_batch(tp, model, batch);  // values only, tape dropped
    }
    double x_norm = probe.frobenius_norm();
    double numel = static_cast<double>(probe.numel());
    double init_radius = cfg.freelb_mag * x_norm / std::sqrt(numel);
    Tensor delta(probe.rows(), probe.cols());
    Rng rng(mix_seed(opts.seed, "freelb-init"));
    double amp = init_radius / std::sqrt(numel);  // elementwise bound keeps ||delta|| <= init_radius
    delta.fill_uniform(rng, -amp, amp);
    project_ball(delta, cfg.freelb_mag, cfg.per_token_norm);

    for (int k = 0; k < cfg.freelb_k; ++k) {
        LossOptions step_opts = opts;
        step_opts.delta = &delta;
        Tape t;
        LossParts lp = model_loss(t, model, batch, step_opts);
        if (k == 0) {
            stats.loss = lp.total.item();
            stats.main_loss = lp.main_value;
            stats.disc_loss = lp.disc_value;
        }
        stats.adv_loss = lp.total.item();
        t.backward(lp.total);  // gradients accumulate over ascent steps
        Tensor g = advdetail::grad_as_tensor(lp.embedding);
        advdetail::normalize_direction(g, cfg.per_token_norm);
        for (size_t i = 0; i < delta.numel(); ++i) delta.values()[i] += cfg.freelb_adv_lr * g.values()[i];
        project_ball(delta, cfg.freelb_mag, cfg.per_token_norm);
    }
    advdetail::scale_grads(params, 1.0 / static_cast<double>(cfg.freelb_k));
    return stats;
}

}  // namespace lexner
