// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the exit code is the number of failures. argv[1] is the path to the `sag`
// CLI binary (used by the determinism check).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "sag/harness.hpp"
#include "sag/losses.hpp"
#include "sag/rng.hpp"

using namespace sag;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %d. %s — %s\n", ok ? "PASS" : "FAIL", index, name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

int worker_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 2 : static_cast<int>(hw);
}

ExperimentConfig experiment_base(ModelKind kind) {
    ExperimentConfig cfg;  // default synth spec: C=4, 4x4 grid, distractors on
    cfg.model.kind = kind;
    cfg.n_train = 200;
    cfg.n_val = 50;
    cfg.n_test = 100;
    cfg.seeds.clear();
    for (std::uint64_t s = 1; s <= 15; ++s) cfg.seeds.push_back(s);
    return cfg;
}

struct ArmResult {
    MetricsReport baseline, hg, hg_tg;
};

ArmResult run_arms(ModelKind kind) {
    ArmResult out;
    ExperimentConfig cfg = experiment_base(kind);
    out.baseline = run_experiment(cfg, nullptr, worker_count());
    cfg.use_hg = true;
    out.hg = run_experiment(cfg, nullptr, worker_count());
    cfg.use_tg = true;
    out.hg_tg = run_experiment(cfg, nullptr, worker_count());
    return out;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Eigen::VectorXd random_simplex(Rng& rng, int p) {
    Eigen::VectorXd v(p);
    double sum = 0.0;
    for (int i = 0; i < p; ++i) {
        v[i] = -std::log(1.0 - rng.uniform());
        sum += v[i];
    }
    return v / sum;
}

// --- criteria -------------------------------------------------------------

void criterion_accuracy_and_redirection() {
    const auto t0 = std::chrono::steady_clock::now();
    const ArmResult tr = run_arms(ModelKind::Transformer);
    const ArmResult mil = run_arms(ModelKind::Mil);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    auto gaps = [](const ArmResult& r) {
        return std::pair<double, double>{r.hg.mean.acc - r.baseline.mean.acc,
                                         r.hg_tg.mean.acc - r.hg.mean.acc};
    };
    const auto [tr_gain, tr_tg_delta] = gaps(tr);
    const auto [mil_gain, mil_tg_delta] = gaps(mil);
    const bool ok1 = tr_gain >= 0.03 && mil_gain >= 0.03 && tr_tg_delta >= -0.01 &&
                     mil_tg_delta >= -0.01;
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "transformer acc %.3f -> +HG %.3f -> +HG+TG %.3f; mil acc %.3f -> +HG %.3f "
                  "-> +HG+TG %.3f; 15 seeds, %.0f s",
                  tr.baseline.mean.acc, tr.hg.mean.acc, tr.hg_tg.mean.acc, mil.baseline.mean.acc,
                  mil.hg.mean.acc, mil.hg_tg.mean.acc, secs);
    report(1, "guidance improves accuracy by >= 3 points on both backbones", ok1, buf);

    const double aq_gain = tr.hg_tg.mean.attention_quality - tr.baseline.mean.attention_quality;
    std::snprintf(buf, sizeof(buf), "attention mass on lesion patches: baseline %.3f, guided %.3f (gain %.3f)",
                  tr.baseline.mean.attention_quality, tr.hg_tg.mean.attention_quality, aq_gain);
    report(2, "guided transformer redirects >= 0.15 attention mass to lesions", aq_gain >= 0.15,
           buf);
}

void criterion_simplex() {
    Rng rng(301);
    int bad = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int p = rng.uniform_int(1, 64);
        MaskAreaRatios ratios;
        ratios.values.resize(p);
        for (double& v : ratios.values) v = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
        const GuidanceWeights w = guidance_weights(ratios, GuidanceKind::HG);
        double sum = 0.0;
        bool ok = true;
        for (int i = 0; i < p; ++i) {
            sum += w.weights[i];
            if (w.weights[i] < 0.0) ok = false;
            if (ratios.values[i] == 0.0 && w.weights[i] != 0.0) ok = false;
        }
        if (w.degenerate) {
            if (sum != 0.0) ok = false;
        } else if (std::abs(sum - 1.0) > 1e-9) {
            ok = false;
        }
        // Scale invariance: doubling all ratios changes nothing.
        MaskAreaRatios scaled = ratios;
        for (double& v : scaled.values) v *= 2.0;
        const GuidanceWeights w2 = guidance_weights(scaled, GuidanceKind::HG);
        for (int i = 0; i < p; ++i) {
            if (std::abs(w2.weights[i] - w.weights[i]) > 1e-12) ok = false;
        }
        if (!ok) ++bad;
    }
    report(3, "simplex normalization holds on 10,000 random ratio vectors", bad == 0,
           std::to_string(bad) + " violations");
}

void criterion_inout_identity() {
    Rng rng(302);
    double worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int p = rng.uniform_int(1, 32);
        const Eigen::VectorXd ma = random_simplex(rng, p);
        Eigen::VectorXd tg(p);
        double outside = 0.0;
        for (int i = 0; i < p; ++i) {
            tg[i] = rng.uniform() < 0.5 ? rng.uniform() : 0.0;
            if (tg[i] == 0.0) outside += ma[i];
        }
        worst = std::max(worst, std::abs(loss_inout(tg, ma) - (2.0 * outside - 1.0) / p));
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "max deviation %.3e over 10,000 vectors", worst);
    report(4, "in&out loss equals (2*outside - 1)/p", worst <= 1e-12, buf);
}

void criterion_gradients() {
    Rng rng(303);
    int bags_checked = 0;
    double worst = 0.0;
    while (bags_checked < 100) {
        ModelConfig cfg;
        cfg.kind = bags_checked % 2 == 0 ? ModelKind::Transformer : ModelKind::Mil;
        cfg.num_classes = rng.uniform_int(2, 4);
        cfg.feature_dim = rng.uniform_int(3, 8);
        cfg.layers = rng.uniform_int(1, 2);
        cfg.heads = rng.uniform_int(1, 3);
        cfg.d_k = rng.uniform_int(1, 4);
        cfg.ffn_dim = rng.uniform_int(2, 5);
        cfg.mil_hidden = rng.uniform_int(2, 5);
        cfg.hg_head_fraction = 0.5;
        const PatchGrid grid(rng.uniform_int(1, 2), rng.uniform_int(1, 3), 2);  // p <= 6
        const Model model(cfg);

        MultiScaleBag bag(1);
        bag[0].grid = grid;
        bag[0].label = rng.uniform_int(0, cfg.num_classes - 1);
        bag[0].features = Eigen::MatrixXd::NullaryExpr(
            grid.patch_count(), cfg.feature_dim,
            [&](Eigen::Index, Eigen::Index) { return rng.normal(0, 1); });
        const int p = grid.patch_count();
        GuidanceWeights hg;
        hg.kind = GuidanceKind::HG;
        const Eigen::VectorXd hv = random_simplex(rng, p);
        hg.weights.assign(hv.data(), hv.data() + p);
        bag[0].hg = hg;
        GuidanceWeights tg;
        tg.kind = GuidanceKind::TG;
        tg.weights.assign(p, 1.0 / p);
        for (int i = 0; i < p; ++i) {
            if (rng.uniform() < 0.4) tg.weights[i] = 0.0;
        }
        bag[0].tg = tg;

        SupervisionSpec spec;
        spec.use_hg = true;
        spec.use_tg = true;
        spec.partition = select_supervised_heads(cfg);

        Eigen::VectorXd params = model.init_params(bags_checked + 1);
        for (int k = 0; k < 3; ++k) {
            params[model.log_var_offset() + k] = rng.uniform(-0.5, 0.5);
        }
        auto loss_at = [&](const Eigen::VectorXd& pv) {
            const ForwardResult fwd = model.forward(bag, pv);
            return sag_loss(model, fwd, bag, spec, model.log_vars(pv)).breakdown.weighted_total;
        };
        const ForwardResult fwd = model.forward(bag, params);
        const SagLossResult res = sag_loss(model, fwd, bag, spec, model.log_vars(params));
        Eigen::VectorXd grad = model.backward(fwd, bag, params, res.dlogits, res.dma);
        grad.segment<3>(model.log_var_offset()) += res.dlog_vars;

        const double h = 1e-5;
        for (int i = 0; i < params.size(); ++i) {
            Eigen::VectorXd up = params, dn = params;
            up[i] += h;
            dn[i] -= h;
            const double numeric = (loss_at(up) - loss_at(dn)) / (2 * h);
            const double denom = std::max({1.0, std::abs(numeric), std::abs(grad[i])});
            worst = std::max(worst, std::abs(grad[i] - numeric) / denom);
        }
        ++bags_checked;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "worst relative error %.3e on 100 bags", worst);
    report(5, "analytic gradients match central differences (rel 1e-4)", worst <= 1e-4, buf);
}

void criterion_oracles() {
    Rng rng(304);
    int bad = 0;
    for (int trial = 0; trial < 500; ++trial) {
        PointSet ps;
        const int n = rng.uniform_int(0, 12);
        for (int i = 0; i < n; ++i) ps.points.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});
        const double eps = rng.uniform(0.5, 4.0);
        const int min_samples = rng.uniform_int(1, 5);
        const ClusterLabeling got = dbscan(ps, eps, min_samples);
        const ClusterLabeling want = oracle::dbscan_brute_force(ps, eps, min_samples);
        if (got.labels != want.labels || got.num_clusters != want.num_clusters) ++bad;
    }
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<long long> hist(rng.uniform_int(2, 64));
        for (auto& h : hist) h = rng.uniform() < 0.3 ? 0 : rng.uniform_int(0, 50);
        hist[rng.uniform_int(0, static_cast<int>(hist.size()) - 1)] += rng.uniform_int(1, 50);
        const OtsuResult got = otsu_threshold_histogram(hist);
        const OtsuResult want = oracle::otsu_brute_force(hist);
        if (got.degenerate != want.degenerate || (!got.degenerate && got.threshold != want.threshold))
            ++bad;
    }
    for (int trial = 0; trial < 500; ++trial) {
        PointSet ps;
        const int n = rng.uniform_int(1, 30);
        for (int i = 0; i < n; ++i) ps.points.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5)});
        const ConvexPolygon hull = convex_hull(ps);
        if (!oracle::hull_contains_all(hull, ps) || !oracle::hull_is_convex(hull)) ++bad;
        PointSet verts;
        verts.points = hull.vertices;
        const ConvexPolygon again = convex_hull(verts);
        if (again.vertices.size() != hull.vertices.size()) ++bad;
    }
    report(6, "dbscan/otsu/hull match independent oracles on 500 cases each", bad == 0,
           std::to_string(bad) + " mismatches");
}

void criterion_head_partition() {
    ModelConfig cfg;
    cfg.kind = ModelKind::Transformer;
    cfg.heads = 8;
    cfg.layers = 2;
    cfg.num_classes = 4;
    cfg.feature_dim = 8;
    cfg.d_k = 2;
    cfg.ffn_dim = 4;
    cfg.hg_head_fraction = 0.5;
    const HeadPartition part = select_supervised_heads(cfg);

    const PatchGrid grid(2, 2, 4);
    const Model model(cfg);
    MultiScaleBag bag(1);
    bag[0].grid = grid;
    bag[0].label = 0;
    Rng rng(305);
    bag[0].features = Eigen::MatrixXd::NullaryExpr(
        grid.patch_count(), cfg.feature_dim,
        [&](Eigen::Index, Eigen::Index) { return rng.normal(0, 1); });
    GuidanceWeights hg;
    hg.kind = GuidanceKind::HG;
    hg.weights = {0.4, 0.3, 0.2, 0.1};
    bag[0].hg = hg;
    GuidanceWeights tg;
    tg.kind = GuidanceKind::TG;
    tg.weights = {0.25, 0.25, 0.25, 0.25};
    bag[0].tg = tg;

    SupervisionSpec spec;
    spec.use_hg = true;
    spec.use_tg = true;
    spec.partition = part;
    const ForwardResult fwd = model.forward(bag, model.init_params(1));
    const SagLossResult res = sag_loss(model, fwd, bag, spec, Eigen::Vector3d::Zero());

    const bool ok = part.hg_heads == 4 && res.breakdown.mse_terms == cfg.layers * 4 &&
                    res.breakdown.inout_terms == cfg.layers * 8;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "hg_heads=%d, mse terms=%d (want %d), inout terms=%d (want %d)",
                  part.hg_heads, res.breakdown.mse_terms, cfg.layers * 4,
                  res.breakdown.inout_terms, cfg.layers * 8);
    report(7, "h=8 fraction=0.5: 4 heads get HG, all 8 get TG", ok, buf);
}

void criterion_cli_determinism(const std::string& sag_bin) {
    if (sag_bin.empty()) {
        report(8, "two identical `train` runs produce bitwise-identical metrics JSON", false,
               "no CLI binary path supplied");
        return;
    }
    const fs::path work = fs::temp_directory_path() / "sag_acceptance_cli";
    fs::remove_all(work);
    fs::create_directories(work);
    const fs::path cfg_path = work / "config.json";
    {
        std::ofstream cfg(cfg_path);
        cfg << R"({
  "model": {"kind": "mil", "num_classes": 2, "feature_dim": 8, "mil_hidden": 6},
  "slide": {"num_classes": 2, "feature_dim": 8},
  "n_train": 16, "n_val": 8, "n_test": 8,
  "use_hg": true, "use_tg": true,
  "opt": {"epochs": 4},
  "seeds": [5, 6]
})";
    }
    bool ok = true;
    std::string detail;
    for (const char* run : {"runA", "runB"}) {
        const std::string cmd = "\"" + sag_bin + "\" train --config \"" + cfg_path.string() +
                                "\" --out \"" + (work / run).string() + "\" --force > /dev/null";
        if (std::system(cmd.c_str()) != 0) {
            ok = false;
            detail = "train exited nonzero";
        }
    }
    if (ok) {
        const std::string a = read_file(work / "runA" / "metrics.json");
        const std::string b = read_file(work / "runB" / "metrics.json");
        const std::string al = read_file(work / "runA" / "metrics.jsonl");
        const std::string bl = read_file(work / "runB" / "metrics.jsonl");
        ok = !a.empty() && a == b && al == bl;
        detail = ok ? "metrics.json and metrics.jsonl byte-identical"
                    : "outputs differ or are empty";
    }
    fs::remove_all(work);
    report(8, "two identical `train` runs produce bitwise-identical metrics JSON", ok, detail);
}

void criterion_ablation_identity() {
    ExperimentConfig cfg;
    cfg.model.kind = ModelKind::Transformer;
    cfg.model.num_classes = 2;
    cfg.model.feature_dim = 8;
    cfg.model.heads = 2;
    cfg.model.d_k = 2;
    cfg.model.ffn_dim = 4;
    cfg.slide.num_classes = 2;
    cfg.slide.feature_dim = 8;
    cfg.n_train = 12;
    cfg.n_val = 4;
    cfg.n_test = 4;
    cfg.opt.epochs = 5;
    cfg.use_hg = false;
    cfg.use_tg = false;

    Dataset ds = generate_dataset(cfg.slide, cfg.n_train, cfg.n_val, cfg.n_test, 21);
    std::vector<LabeledSlide> guided = ds.train;
    attach_guidance(guided, cfg);

    std::vector<double> trace_plain, trace_guided;
    const Eigen::VectorXd w_plain = train_seed(cfg, ds.train, ds.val, 21, [&](const EpochLog& e) {
        trace_plain.push_back(e.mean_loss.weighted_total);
    });
    const Eigen::VectorXd w_guided = train_seed(cfg, guided, ds.val, 21, [&](const EpochLog& e) {
        trace_guided.push_back(e.mean_loss.weighted_total);
    });
    const bool ok = trace_plain == trace_guided &&
                    (w_plain - w_guided).cwiseAbs().maxCoeff() == 0.0;
    report(9, "use_hg=use_tg=false reproduces the guidance-free loss trace exactly", ok,
           ok ? "loss trace and final parameters identical"
              : "trace or parameters diverged");
}

}  // namespace

int main(int argc, char** argv) {
    const std::string sag_bin = argc > 1 ? argv[1] : "";
    criterion_accuracy_and_redirection();
    criterion_simplex();
    criterion_inout_identity();
    criterion_gradients();
    criterion_oracles();
    criterion_head_partition();
    criterion_cli_determinism(sag_bin);
    criterion_ablation_identity();
    std::printf("%d of 9 criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
