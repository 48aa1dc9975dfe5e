#include <cmath>
#include <vector>

#include "doctest.h"
#include "lexner/adversarial.hpp"
#include "lexner/train.hpp"
#include "model_fd.hpp"

using namespace lexner;

TEST_CASE("fgm_delta: hand values and norm identity") {
    Tensor zero(1, 2);
    Tensor d0 = fgm_delta(zero, 1.0);
    CHECK(d0.values() == std::vector<double>{0.0, 0.0});

    Tensor g = Tensor::from({3.0, 4.0}, 1, 2);
    Tensor d = fgm_delta(g, 1.0);
    CHECK(d.at(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(d.at(0, 1) == doctest::Approx(0.8).epsilon(1e-12));

    for (uint64_t seed = 0; seed < 50; ++seed) {
        Tensor r(3, 4);
        Rng rng(seed);
        r.fill_uniform(rng, -2, 2);
        Tensor delta = fgm_delta(r, 0.8);
        CHECK(delta.frobenius_norm() == doctest::Approx(0.8).epsilon(1e-12));
    }
}

TEST_CASE("pgd_step: ascent and projection hand values") {
    Tensor zero(1, 2);
    Tensor g = Tensor::from({3.0, 4.0}, 1, 2);
    Tensor step = pgd_step(zero, g, 0.1, 1.0);
    CHECK(step.at(0, 0) == doctest::Approx(0.06).epsilon(1e-12));
    CHECK(step.at(0, 1) == doctest::Approx(0.08).epsilon(1e-12));

    // projection of (0.9, 1.2), norm 1.5, onto the unit ball
    Tensor big = Tensor::from({0.9, 1.2}, 1, 2);
    project_ball(big, 1.0);
    CHECK(big.at(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(big.at(0, 1) == doctest::Approx(0.8).epsilon(1e-12));

    // PGD(K=1, alpha >= eps) direction equals FGM's
    Tensor g2 = Tensor::from({1.0, -2.0, 0.5, 3.0}, 2, 2);
    Tensor pgd1 = pgd_step(Tensor(2, 2), g2, 1.5, 1.0);
    Tensor fgm1 = fgm_delta(g2, 1.0);
    for (size_t i = 0; i < pgd1.numel(); ++i) CHECK(pgd1.values()[i] == doctest::Approx(fgm1.values()[i]).epsilon(1e-12));
}

TEST_CASE("ball constraints hold over random pgd trajectories") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        double eps = 0.1 + rng.uniform();
        Tensor delta(2, 3);
        for (int step = 0; step < 20; ++step) {
            Tensor g(2, 3);
            g.fill_uniform(rng, -1, 1);
            delta = pgd_step(delta, g, 0.3, eps);
            CHECK(delta.frobenius_norm() <= eps + 1e-12);
        }
    }
}

TEST_CASE("pgd ascent increases a quadratic loss") {
    // L(x + delta) = ||x + delta||^2, ascended by PGD
    Tensor x = Tensor::from({0.4, -0.2, 0.3, 0.1, -0.5, 0.2}, 2, 3);
    auto loss_at = [&](const Tensor& delta) {
        Tape tape;
        Tensor xt = x.clone();
        xt.set_requires_grad(true);
        Tensor sum = tape.add(xt, delta);
        Tensor n = tape.l2_norm(sum);
        Tensor l = tape.scale_by(n, n);
        tape.backward(l);
        return std::make_pair(l.item(), Tensor::from(xt.grad(), 2, 3));
    };
    auto [clean, g0] = loss_at(Tensor(2, 3));
    Tensor delta = pgd_step(Tensor(2, 3), g0, 0.1, 1.0);
    double adv = 0.0;
    for (int k = 1; k < 3; ++k) {
        auto [lk, gk] = loss_at(delta);
        delta = pgd_step(delta, gk, 0.1, 1.0);
        adv = lk;
    }
    auto [final_loss, gf] = loss_at(delta);
    (void)gf;
    (void)adv;
    CHECK(final_loss >= clean);
}

namespace {

std::vector<std::vector<double>> grads_of(const ParamSet& p) {
    std::vector<std::vector<double>> out;
    for (const auto& [name, t] : p.items) out.push_back(t.grad());
    return out;
}

}  // namespace

TEST_CASE("degenerate ball: FGM/PGD give 2x clean gradients, FreeLB 1x") {
    auto w = oracle::micro_world(3, true, "CTL", true, false, 0.0);
    LossOptions opts;
    opts.training = true;
    opts.seed = 7;

    w.model.params.zero_grads();
    Tape tape;
    LossParts clean = model_loss(tape, w.model, w.batch, opts);
    tape.backward(clean.total);
    auto clean_grads = grads_of(w.model.params);

    const double tiny = 1e-300;  // collapses every perturbation to ~0
    for (const char* method : {"FGM", "PGD"}) {
        AdvConfig cfg;
        cfg.method = method;
        cfg.fgm_eps = tiny;
        cfg.pgd_eps = tiny;
        cfg.pgd_alpha = tiny;
        w.model.params.zero_grads();
        adv_train_step(w.model, w.batch, cfg, opts);
        auto got = grads_of(w.model.params);
        for (size_t i = 0; i < got.size(); ++i)
            for (size_t k = 0; k < got[i].size(); ++k)
                CHECK(got[i][k] == doctest::Approx(2.0 * clean_grads[i][k]).epsilon(1e-9));
    }

    AdvConfig freelb;
    freelb.method = "FreeLB";
    freelb.freelb_mag = tiny;
    freelb.freelb_adv_lr = tiny;
    w.model.params.zero_grads();
    adv_train_step(w.model, w.batch, freelb, opts);
    auto got = grads_of(w.model.params);
    for (size_t i = 0; i < got.size(); ++i)
        for (size_t k = 0; k < got[i].size(); ++k)
            CHECK(got[i][k] == doctest::Approx(clean_grads[i][k]).epsilon(1e-9));

    // accumulate-all variant keeps every backward: clean + (K-1) ascent + final
    AdvConfig pgd_all;
    pgd_all.method = "PGD";
    pgd_all.pgd_eps = tiny;
    pgd_all.pgd_alpha = tiny;
    pgd_all.pgd_k = 3;
    pgd_all.pgd_accumulate_all = true;
    w.model.params.zero_grads();
    adv_train_step(w.model, w.batch, pgd_all, opts);
    auto got_all = grads_of(w.model.params);
    for (size_t i = 0; i < got_all.size(); ++i)
        for (size_t k = 0; k < got_all[i].size(); ++k)
            CHECK(got_all[i][k] == doctest::Approx(4.0 * clean_grads[i][k]).epsilon(1e-9));
}

TEST_CASE("adversarial steps are deterministic under a fixed seed") {
    for (const char* method : {"FGM", "PGD", "FreeLB"}) {
        auto w1 = oracle::micro_world(5);
        auto w2 = oracle::micro_world(5);
        AdvConfig cfg;
        cfg.method = method;
        LossOptions opts;
        opts.training = true;
        opts.rdrop = true;
        opts.seed = 11;
        w1.model.params.zero_grads();
        adv_train_step(w1.model, w1.batch, cfg, opts);
        w2.model.params.zero_grads();
        adv_train_step(w2.model, w2.batch, cfg, opts);
        for (size_t i = 0; i < w1.model.params.items.size(); ++i)
            CHECK(w1.model.params.items[i].second.grad() == w2.model.params.items[i].second.grad());
    }
}

TEST_CASE("adv config validation") {
    AdvConfig bad;
    bad.method = "FGSM";
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = AdvConfig{};
    bad.pgd_k = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = AdvConfig{};
    bad.fgm_eps = -1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}
