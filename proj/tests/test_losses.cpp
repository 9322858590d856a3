#include <cmath>
#include <numeric>

#include "doctest.h"
#include "sag/losses.hpp"
#include "sag/rng.hpp"

using namespace sag;

namespace {

Eigen::VectorXd random_simplex(Rng& rng, int p) {
    Eigen::VectorXd v(p);
    double sum = 0.0;
    for (int i = 0; i < p; ++i) {
        v[i] = -std::log(1.0 - rng.uniform());
        sum += v[i];
    }
    return v / sum;
}

}  // namespace

TEST_CASE("loss_mse hand-computed values") {
    Eigen::VectorXd hg(2), ma(2);
    hg << 1, 0;
    ma << 0.5, 0.5;
    CHECK(loss_mse(hg, ma) == doctest::Approx(0.25));
    CHECK(loss_mse(hg, hg) == 0.0);

    Eigen::VectorXd hg4 = Eigen::VectorXd::Constant(4, 0.25);
    Eigen::VectorXd ma4(4);
    ma4 << 1, 0, 0, 0;
    CHECK(loss_mse(hg4, ma4) == doctest::Approx(0.1875));

    Eigen::VectorXd wrong(3);
    CHECK_THROWS_AS(loss_mse(hg, wrong), ShapeError);
}

TEST_CASE("loss_inout hand-computed values and extremes") {
    Eigen::VectorXd tg(2), ma(2);
    tg << 1, 0;
    ma << 0.7, 0.3;
    CHECK(loss_inout(tg, ma) == doctest::Approx(-0.2));

    Eigen::VectorXd all_in(4), tissue(4);
    tissue << 0.25, 0.25, 0.25, 0.25;
    all_in << 0.4, 0.3, 0.2, 0.1;
    CHECK(loss_inout(tissue, all_in) == doctest::Approx(-0.25));  // -1/p

    Eigen::VectorXd no_tissue = Eigen::VectorXd::Zero(4);
    CHECK(loss_inout(no_tissue, all_in) == doctest::Approx(0.25));  // +1/p
}

TEST_CASE("loss_inout closed-form identity on random simplex vectors") {
    Rng rng(8);
    for (int trial = 0; trial < 1000; ++trial) {
        const int p = rng.uniform_int(1, 24);
        const Eigen::VectorXd ma = random_simplex(rng, p);
        Eigen::VectorXd tg(p);
        double outside = 0.0;
        for (int i = 0; i < p; ++i) {
            tg[i] = rng.uniform() < 0.5 ? rng.uniform() : 0.0;
            if (tg[i] == 0.0) outside += ma[i];
        }
        CHECK(std::abs(loss_inout(tg, ma) - (2.0 * outside - 1.0) / p) < 1e-12);
    }
}

TEST_CASE("losses are invariant under simultaneous permutation") {
    Rng rng(9);
    const int p = 7;
    const Eigen::VectorXd ma = random_simplex(rng, p);
    Eigen::VectorXd hg = random_simplex(rng, p);
    Eigen::VectorXd tg(p);
    for (int i = 0; i < p; ++i) tg[i] = rng.uniform() < 0.5 ? rng.uniform() : 0.0;

    std::vector<int> perm(p);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Eigen::VectorXd ma_p(p), hg_p(p), tg_p(p);
    for (int i = 0; i < p; ++i) {
        ma_p[i] = ma[perm[i]];
        hg_p[i] = hg[perm[i]];
        tg_p[i] = tg[perm[i]];
    }
    CHECK(loss_mse(hg_p, ma_p) == doctest::Approx(loss_mse(hg, ma)).epsilon(1e-12));
    CHECK(loss_inout(tg_p, ma_p) == doctest::Approx(loss_inout(tg, ma)).epsilon(1e-12));
}

TEST_CASE("cross entropy values") {
    Eigen::VectorXd uniform4 = Eigen::VectorXd::Zero(4);
    CHECK(loss_cls(uniform4, 2) == doctest::Approx(std::log(4.0)));

    Eigen::VectorXd confident(2);
    confident << 10, -10;
    CHECK(loss_cls(confident, 0) == doctest::Approx(2.061e-9).epsilon(1e-3));

    // Monotone decrease toward the one-hot-certain limit.
    double prev = loss_cls(confident, 0);
    for (double t : {12.0, 16.0, 24.0}) {
        Eigen::VectorXd logits(2);
        logits << t, -10;
        const double cur = loss_cls(logits, 0);
        CHECK(cur < prev);
        prev = cur;
    }
    CHECK_THROWS_AS(loss_cls(confident, 2), std::out_of_range);
}

TEST_CASE("uncertainty weighting identities") {
    const Eigen::Vector3d zero = Eigen::Vector3d::Zero();
    CHECK(uncertainty_weighted_total(0.7, 0.2, -0.05, zero, true, true) ==
          0.7 + 0.2 + (-0.05));

    // Stationarity: s_k = ln L_k makes exp(-s_k) L_k == 1.
    const double l = 0.37;
    const double s = std::log(l);
    CHECK(std::exp(-s) * l == doctest::Approx(1.0).epsilon(1e-12));
    // The derivative wrt s is then zero: d/ds [exp(-s)L + s] = -exp(-s)L + 1.
    CHECK(-std::exp(-s) * l + 1.0 == doctest::Approx(0.0));

    // Doubling one log-variance changes the total by the closed form.
    const Eigen::Vector3d lv(0.0, 0.4, 0.0);
    const Eigen::Vector3d lv2(0.0, 0.8, 0.0);
    const double base = uncertainty_weighted_total(1.0, l, 0.0, lv, true, true);
    const double doubled = uncertainty_weighted_total(1.0, l, 0.0, lv2, true, true);
    CHECK(doubled - base ==
          doctest::Approx((std::exp(-0.8) - std::exp(-0.4)) * l + 0.4).epsilon(1e-12));
}

namespace {

// Minimal transformer record with controllable attention vectors.
ForwardResult make_record(const Model& model, const std::vector<Eigen::VectorXd>& head_mas,
                          const Eigen::VectorXd& logits) {
    ForwardResult fwd;
    fwd.logits = logits;
    fwd.record.transformer.assign(1, {head_mas});
    return fwd;
}

}  // namespace

TEST_CASE("sag_loss assembly") {
    Rng rng(10);
    const int p = 4;

    ModelConfig cfg;
    cfg.kind = ModelKind::Transformer;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.num_classes = 3;
    cfg.feature_dim = 6;
    cfg.hg_head_fraction = 1.0;
    const Model model(cfg);

    Bag bag;
    bag.grid = PatchGrid(2, 2, 4);
    bag.label = 1;
    bag.features = Eigen::MatrixXd::Zero(p, cfg.feature_dim);

    Eigen::VectorXd logits(3);
    logits << 0.3, 1.1, -0.4;
    const Eigen::VectorXd ma1 = random_simplex(rng, p);
    const Eigen::VectorXd ma2 = random_simplex(rng, p);

    SUBCASE("no guidance reduces to weighted cross entropy") {
        SupervisionSpec spec;
        spec.partition = select_supervised_heads(cfg);
        const Eigen::Vector3d lv(0.2, -0.1, 0.3);
        const ForwardResult fwd = make_record(model, {ma1, ma2}, logits);
        const SagLossResult res = sag_loss(model, fwd, {bag}, spec, lv);
        CHECK(res.breakdown.mse_skipped);
        CHECK(res.breakdown.inout_skipped);
        CHECK(res.breakdown.weighted_total ==
              doctest::Approx(std::exp(-0.2) * loss_cls(logits, 1) + 0.2).epsilon(1e-12));
        CHECK(res.dlog_vars[1] == 0.0);
        CHECK(res.dlog_vars[2] == 0.0);
    }

    SUBCASE("perfect attention match") {
        GuidanceWeights hg;
        hg.kind = GuidanceKind::HG;
        hg.weights.assign(ma1.data(), ma1.data() + p);
        GuidanceWeights tg;
        tg.kind = GuidanceKind::TG;
        tg.weights.assign(p, 0.25);  // everything is tissue
        bag.hg = hg;
        bag.tg = tg;
        SupervisionSpec spec;
        spec.use_hg = true;
        spec.use_tg = true;
        spec.partition = select_supervised_heads(cfg);
        const ForwardResult fwd = make_record(model, {ma1, ma1}, logits);
        const SagLossResult res = sag_loss(model, fwd, {bag}, spec, Eigen::Vector3d::Zero());
        CHECK(res.breakdown.l_mse == 0.0);
        CHECK(res.breakdown.l_inout == doctest::Approx(-1.0 / p));
        CHECK(res.breakdown.mse_terms == 2);
        CHECK(res.breakdown.inout_terms == 2);
    }

    SUBCASE("HG averaging over supervised heads") {
        GuidanceWeights hg;
        hg.kind = GuidanceKind::HG;
        const Eigen::VectorXd target = random_simplex(rng, p);
        hg.weights.assign(target.data(), target.data() + p);
        bag.hg = hg;
        SupervisionSpec spec;
        spec.use_hg = true;
        spec.partition = select_supervised_heads(cfg);
        const ForwardResult fwd = make_record(model, {ma1, ma2}, logits);
        const SagLossResult res = sag_loss(model, fwd, {bag}, spec, Eigen::Vector3d::Zero());
        const double a = loss_mse(target, ma1);
        const double b = loss_mse(target, ma2);
        CHECK(res.breakdown.l_mse == doctest::Approx((a + b) / 2.0).epsilon(1e-12));
    }

    SUBCASE("degenerate guidance is skipped") {
        GuidanceWeights hg;
        hg.kind = GuidanceKind::HG;
        hg.weights.assign(p, 0.0);
        hg.degenerate = true;
        bag.hg = hg;
        SupervisionSpec spec;
        spec.use_hg = true;
        spec.partition = select_supervised_heads(cfg);
        const ForwardResult fwd = make_record(model, {ma1, ma2}, logits);
        const SagLossResult res = sag_loss(model, fwd, {bag}, spec, Eigen::Vector3d::Zero());
        CHECK(res.breakdown.mse_skipped);
        CHECK(res.breakdown.mse_terms == 0);
    }

    SUBCASE("misaligned guidance raises") {
        GuidanceWeights hg;
        hg.kind = GuidanceKind::HG;
        hg.weights.assign(p + 1, 1.0 / (p + 1));
        bag.hg = hg;
        SupervisionSpec spec;
        spec.use_hg = true;
        spec.partition = select_supervised_heads(cfg);
        const ForwardResult fwd = make_record(model, {ma1, ma2}, logits);
        CHECK_THROWS_AS(sag_loss(model, fwd, {bag}, spec, Eigen::Vector3d::Zero()), ShapeError);
    }
}

TEST_CASE("loss gradients wrt attention match central differences") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const int p = rng.uniform_int(2, 8);
        const Eigen::VectorXd ma = random_simplex(rng, p);
        const Eigen::VectorXd hg = random_simplex(rng, p);
        Eigen::VectorXd tg(p);
        for (int i = 0; i < p; ++i) tg[i] = rng.uniform() < 0.6 ? rng.uniform() : 0.0;

        const Eigen::VectorXd g_mse = loss_mse_grad(hg, ma);
        const Eigen::VectorXd g_io = loss_inout_grad(tg);
        const double h = 1e-5;
        for (int i = 0; i < p; ++i) {
            Eigen::VectorXd up = ma, dn = ma;
            up[i] += h;
            dn[i] -= h;
            const double num_mse = (loss_mse(hg, up) - loss_mse(hg, dn)) / (2 * h);
            const double num_io = (loss_inout(tg, up) - loss_inout(tg, dn)) / (2 * h);
            CHECK(std::abs(g_mse[i] - num_mse) < 1e-4 * std::max(1.0, std::abs(num_mse)));
            CHECK(std::abs(g_io[i] - num_io) < 1e-4 * std::max(1.0, std::abs(num_io)));
        }
    }
}
