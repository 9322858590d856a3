// sag: dataset generation, guidance building, training, evaluation, and
// attention-heatmap export for the synthetic slide-classification pipeline.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sag/harness.hpp"

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace sag;

namespace {

// --- config ---------------------------------------------------------------

void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw std::runtime_error("config: unknown key \"" + key + "\" in " + where);
        }
    }
}

template <typename T>
void assign(const json& obj, const char* key, T& field) {
    if (obj.contains(key)) field = obj.at(key).get<T>();
}

PatchGrid parse_grid(const json& g) {
    check_keys(g, {"rows", "cols", "patch_edge"}, "slide.scale_grids[]");
    int rows = 4, cols = 4, edge = 32;
    assign(g, "rows", rows);
    assign(g, "cols", cols);
    assign(g, "patch_edge", edge);
    return PatchGrid(rows, cols, edge);
}

ExperimentConfig parse_config(const json& root) {
    check_keys(root,
               {"model", "slide", "n_train", "n_val", "n_test", "use_hg", "use_tg", "opt",
                "seeds", "dbscan_eps", "dbscan_min_samples", "tissue_is_darker"},
               "top level");
    ExperimentConfig cfg;
    if (root.contains("model")) {
        const json& m = root.at("model");
        check_keys(m,
                   {"kind", "num_scales", "num_classes", "feature_dim", "layers", "heads", "d_k",
                    "ffn_dim", "mil_hidden", "hg_head_fraction", "supervise_last_layer_only"},
                   "model");
        if (m.contains("kind")) cfg.model.kind = model_kind_from_string(m.at("kind"));
        assign(m, "num_scales", cfg.model.num_scales);
        assign(m, "num_classes", cfg.model.num_classes);
        assign(m, "feature_dim", cfg.model.feature_dim);
        assign(m, "layers", cfg.model.layers);
        assign(m, "heads", cfg.model.heads);
        assign(m, "d_k", cfg.model.d_k);
        assign(m, "ffn_dim", cfg.model.ffn_dim);
        assign(m, "mil_hidden", cfg.model.mil_hidden);
        assign(m, "hg_head_fraction", cfg.model.hg_head_fraction);
        assign(m, "supervise_last_layer_only", cfg.model.supervise_last_layer_only);
    }
    if (root.contains("slide")) {
        const json& s = root.at("slide");
        check_keys(s,
                   {"scale_grids", "num_classes", "feature_dim", "tissue_blob_count",
                    "tissue_radius_min", "tissue_radius_max", "lesion_count", "lesion_radius_min",
                    "lesion_radius_max", "feature_contrast", "distractor_count",
                    "distractor_radius_min", "distractor_radius_max", "distractor_strength",
                    "lambda_in", "lambda_out", "noise_sigma", "raster_noise", "background_level",
                    "tissue_level", "lesion_level", "distractor_level"},
                   "slide");
        if (s.contains("scale_grids")) {
            cfg.slide.scale_grids.clear();
            for (const json& g : s.at("scale_grids")) cfg.slide.scale_grids.push_back(parse_grid(g));
        }
        assign(s, "num_classes", cfg.slide.num_classes);
        assign(s, "feature_dim", cfg.slide.feature_dim);
        assign(s, "tissue_blob_count", cfg.slide.tissue_blob_count);
        assign(s, "tissue_radius_min", cfg.slide.tissue_radius_min);
        assign(s, "tissue_radius_max", cfg.slide.tissue_radius_max);
        assign(s, "lesion_count", cfg.slide.lesion_count);
        assign(s, "lesion_radius_min", cfg.slide.lesion_radius_min);
        assign(s, "lesion_radius_max", cfg.slide.lesion_radius_max);
        assign(s, "feature_contrast", cfg.slide.feature_contrast);
        assign(s, "distractor_count", cfg.slide.distractor_count);
        assign(s, "distractor_radius_min", cfg.slide.distractor_radius_min);
        assign(s, "distractor_radius_max", cfg.slide.distractor_radius_max);
        assign(s, "distractor_strength", cfg.slide.distractor_strength);
        assign(s, "lambda_in", cfg.slide.lambda_in);
        assign(s, "lambda_out", cfg.slide.lambda_out);
        assign(s, "noise_sigma", cfg.slide.noise_sigma);
        assign(s, "raster_noise", cfg.slide.raster_noise);
        assign(s, "background_level", cfg.slide.background_level);
        assign(s, "tissue_level", cfg.slide.tissue_level);
        assign(s, "lesion_level", cfg.slide.lesion_level);
        assign(s, "distractor_level", cfg.slide.distractor_level);
    }
    assign(root, "n_train", cfg.n_train);
    assign(root, "n_val", cfg.n_val);
    assign(root, "n_test", cfg.n_test);
    assign(root, "use_hg", cfg.use_hg);
    assign(root, "use_tg", cfg.use_tg);
    if (root.contains("opt")) {
        const json& o = root.at("opt");
        check_keys(o, {"step_size", "momentum", "epochs"}, "opt");
        assign(o, "step_size", cfg.opt.step_size);
        assign(o, "momentum", cfg.opt.momentum);
        assign(o, "epochs", cfg.opt.epochs);
    }
    if (root.contains("seeds")) cfg.seeds = root.at("seeds").get<std::vector<std::uint64_t>>();
    assign(root, "dbscan_eps", cfg.dbscan_eps);
    assign(root, "dbscan_min_samples", cfg.dbscan_min_samples);
    assign(root, "tissue_is_darker", cfg.tissue_is_darker);
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    json grids = json::array();
    for (const PatchGrid& g : cfg.slide.scale_grids) {
        grids.push_back({{"rows", g.rows}, {"cols", g.cols}, {"patch_edge", g.patch_edge}});
    }
    return json{
        {"model",
         {{"kind", to_string(cfg.model.kind)},
          {"num_scales", cfg.model.num_scales},
          {"num_classes", cfg.model.num_classes},
          {"feature_dim", cfg.model.feature_dim},
          {"layers", cfg.model.layers},
          {"heads", cfg.model.heads},
          {"d_k", cfg.model.d_k},
          {"ffn_dim", cfg.model.ffn_dim},
          {"mil_hidden", cfg.model.mil_hidden},
          {"hg_head_fraction", cfg.model.hg_head_fraction},
          {"supervise_last_layer_only", cfg.model.supervise_last_layer_only}}},
        {"slide",
         {{"scale_grids", grids},
          {"num_classes", cfg.slide.num_classes},
          {"feature_dim", cfg.slide.feature_dim},
          {"tissue_blob_count", cfg.slide.tissue_blob_count},
          {"tissue_radius_min", cfg.slide.tissue_radius_min},
          {"tissue_radius_max", cfg.slide.tissue_radius_max},
          {"lesion_count", cfg.slide.lesion_count},
          {"lesion_radius_min", cfg.slide.lesion_radius_min},
          {"lesion_radius_max", cfg.slide.lesion_radius_max},
          {"feature_contrast", cfg.slide.feature_contrast},
          {"distractor_count", cfg.slide.distractor_count},
          {"distractor_radius_min", cfg.slide.distractor_radius_min},
          {"distractor_radius_max", cfg.slide.distractor_radius_max},
          {"distractor_strength", cfg.slide.distractor_strength},
          {"lambda_in", cfg.slide.lambda_in},
          {"lambda_out", cfg.slide.lambda_out},
          {"noise_sigma", cfg.slide.noise_sigma},
          {"raster_noise", cfg.slide.raster_noise},
          {"background_level", cfg.slide.background_level},
          {"tissue_level", cfg.slide.tissue_level},
          {"lesion_level", cfg.slide.lesion_level},
          {"distractor_level", cfg.slide.distractor_level}}},
        {"n_train", cfg.n_train},
        {"n_val", cfg.n_val},
        {"n_test", cfg.n_test},
        {"use_hg", cfg.use_hg},
        {"use_tg", cfg.use_tg},
        {"opt",
         {{"step_size", cfg.opt.step_size},
          {"momentum", cfg.opt.momentum},
          {"epochs", cfg.opt.epochs}}},
        {"seeds", cfg.seeds},
        {"dbscan_eps", cfg.dbscan_eps},
        {"dbscan_min_samples", cfg.dbscan_min_samples},
        {"tissue_is_darker", cfg.tissue_is_darker},
    };
}

// Dotted-path override: "opt.epochs=10", "model.kind=mil", "seeds=[1,2]".
void apply_override(json& root, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("override must be key=value: " + kv);
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;  // bare strings like "mil"
    }
    json* node = &root;
    size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw std::runtime_error("bad override path: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out;
    std::int64_t seed = -1;
    bool force = false;
    int workers = 0;
};

json load_config_json(const CommonOpts& opts) {
    json root = json::object();
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) throw std::runtime_error("cannot open config: " + opts.config_path);
        in >> root;
    }
    for (const std::string& kv : opts.overrides) apply_override(root, kv);
    return root;
}

fs::path resolve_out(const CommonOpts& opts, const std::string& fallback) {
    fs::path out = opts.out.empty() ? fs::path(fallback) : fs::path(opts.out);
    const char* env_root = std::getenv("SAG_OUT");
    if (env_root && out.is_relative()) out = fs::path(env_root) / out;
    return out;
}

void prepare_out_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force) {
            throw std::runtime_error("output directory not empty (use --force): " + dir.string());
        }
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
}

void write_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

void write_snapshot(const fs::path& dir, const ExperimentConfig& cfg) {
    write_atomic(dir / "resolved_config.json", config_to_json(cfg).dump(2) + "\n");
}

int effective_workers(const CommonOpts& opts) {
    if (opts.workers > 0) return opts.workers;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// --- gen-data ---------------------------------------------------------------

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

std::string features_csv(const Eigen::MatrixXd& f) {
    std::ostringstream out;
    out.precision(17);
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
        for (Eigen::Index c = 0; c < f.cols(); ++c) {
            if (c) out << ',';
            out << f(r, c);
        }
        out << '\n';
    }
    return out.str();
}

json write_slide_files(const fs::path& root, const LabeledSlide& slide, Split split) {
    const fs::path dir = root / "slides" / split_name(split) / std::to_string(slide.slide_id);
    fs::create_directories(dir);
    write_pgm((dir / "raster.pgm").string(), slide.raster);
    write_pgm((dir / "tissue.pgm").string(), slide.truth.tissue);
    write_pgm((dir / "lesion.pgm").string(), slide.truth.lesion);
    write_points_csv((dir / "cells.csv").string(), slide.truth.cells);
    json features = json::array();
    for (size_t s = 0; s < slide.bags.size(); ++s) {
        const std::string name = "features_s" + std::to_string(s) + ".csv";
        write_atomic(dir / name, features_csv(slide.bags[s].features));
        features.push_back((fs::path("slides") / split_name(split) /
                            std::to_string(slide.slide_id) / name)
                               .generic_string());
    }
    const fs::path rel = fs::path("slides") / split_name(split) / std::to_string(slide.slide_id);
    return json{{"id", slide.slide_id},
                {"split", split_name(split)},
                {"label", slide.truth.label},
                {"files",
                 {{"raster", (rel / "raster.pgm").generic_string()},
                  {"tissue", (rel / "tissue.pgm").generic_string()},
                  {"lesion", (rel / "lesion.pgm").generic_string()},
                  {"cells", (rel / "cells.csv").generic_string()},
                  {"features", features}}}};
}

int cmd_gen_data(const CommonOpts& opts) {
    const json root = load_config_json(opts);
    ExperimentConfig cfg = parse_config(root);
    const std::uint64_t seed = opts.seed >= 0 ? static_cast<std::uint64_t>(opts.seed)
                                              : (cfg.seeds.empty() ? 1 : cfg.seeds.front());
    const fs::path out = resolve_out(opts, "dataset");
    prepare_out_dir(out, opts.force);

    const Dataset ds = generate_dataset(cfg.slide, cfg.n_train, cfg.n_val, cfg.n_test, seed);
    json slides = json::array();
    for (const LabeledSlide& s : ds.train) slides.push_back(write_slide_files(out, s, Split::Train));
    for (const LabeledSlide& s : ds.val) slides.push_back(write_slide_files(out, s, Split::Val));
    for (const LabeledSlide& s : ds.test) slides.push_back(write_slide_files(out, s, Split::Test));
    write_atomic(out / "manifest.json",
                 json{{"seed", seed}, {"slides", slides}}.dump(2) + "\n");
    write_snapshot(out, cfg);
    std::cout << "wrote " << slides.size() << " slides to " << out.string() << "\n";
    return 0;
}

// --- build-guidance ---------------------------------------------------------

int cmd_build_guidance(const CommonOpts& opts, const std::string& data_dir,
                       const std::string& kind) {
    const fs::path data(data_dir);
    json root;
    {
        std::ifstream in(data / "resolved_config.json");
        if (!in) throw std::runtime_error("no resolved_config.json in " + data_dir);
        in >> root;
    }
    for (const std::string& kv : opts.overrides) apply_override(root, kv);
    const ExperimentConfig cfg = parse_config(root);

    json manifest;
    {
        std::ifstream in(data / "manifest.json");
        if (!in) throw std::runtime_error("no manifest.json in " + data_dir);
        in >> manifest;
    }
    const bool do_tg = kind == "tg" || kind == "both";
    const bool do_hg = kind == "hg" || kind == "both";
    if (!do_tg && !do_hg) throw std::runtime_error("kind must be tg, hg, or both");

    const std::vector<json>& entries = manifest.at("slides").get_ref<const json::array_t&>();
    const int workers = effective_workers(opts);
    std::vector<std::string> errors(entries.size());
    auto process = [&](size_t i) {
        try {
            const json& entry = entries[i];
            const fs::path dir = data / fs::path(entry.at("files").at("raster").get<std::string>())
                                            .parent_path();
            const GrayImage raster = read_gray_pgm((dir / "raster.pgm").string());
            const PointSet cells = read_points_csv((dir / "cells.csv").string());
            for (size_t s = 0; s < cfg.slide.scale_grids.size(); ++s) {
                const PatchGrid& grid = cfg.slide.scale_grids[s];
                if (do_tg) {
                    const GuidanceWeights tg = build_tg(raster, grid, cfg.tissue_is_darker);
                    write_guidance_json(
                        (dir / ("tg_s" + std::to_string(s) + ".json")).string(), tg, grid);
                }
                if (do_hg) {
                    const GuidanceWeights hg =
                        build_hg(cells, grid, cfg.dbscan_eps, cfg.dbscan_min_samples);
                    write_guidance_json(
                        (dir / ("hg_s" + std::to_string(s) + ".json")).string(), hg, grid);
                }
            }
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };
    for (size_t start = 0; start < entries.size(); start += workers) {
        std::vector<std::thread> pool;
        for (size_t i = start; i < std::min(entries.size(), start + workers); ++i) {
            pool.emplace_back(process, i);
        }
        for (auto& t : pool) t.join();
    }
    for (const std::string& e : errors) {
        if (!e.empty()) throw std::runtime_error(e);
    }
    std::cout << "built " << kind << " guidance for " << entries.size() << " slides\n";
    return 0;
}

// --- train / eval -----------------------------------------------------------

json seed_metrics_json(const SeedMetrics& m) {
    return json{{"seed", m.seed},          {"acc", m.acc},
                {"precision", m.precision}, {"recall", m.recall},
                {"auc", m.auc},            {"attention_quality", m.attention_quality}};
}

int cmd_train(const CommonOpts& opts) {
    json root = load_config_json(opts);
    if (opts.seed >= 0) root["seeds"] = json::array({opts.seed});
    const ExperimentConfig cfg = parse_config(root);
    const fs::path out = resolve_out(opts, "run");
    prepare_out_dir(out, opts.force);
    write_snapshot(out, cfg);

    std::ostringstream jsonl;
    const LogSink sink = [&jsonl](const EpochLog& log) {
        jsonl << json{{"seed", log.seed},
                      {"epoch", log.epoch},
                      {"l_cls", log.mean_loss.l_cls},
                      {"l_mse", log.mean_loss.l_mse},
                      {"l_inout", log.mean_loss.l_inout},
                      {"weighted_total", log.mean_loss.weighted_total},
                      {"s_cls", log.mean_loss.s_cls},
                      {"s_mse", log.mean_loss.s_mse},
                      {"s_inout", log.mean_loss.s_inout},
                      {"train_acc", log.train_acc},
                      {"val_acc", log.val_acc}}
                     .dump()
              << "\n";
    };
    std::vector<Eigen::VectorXd> params;
    const MetricsReport report = run_experiment(cfg, sink, effective_workers(opts), &params);

    write_atomic(out / "metrics.jsonl", jsonl.str());
    json per_seed = json::array();
    for (const SeedMetrics& m : report.per_seed) per_seed.push_back(seed_metrics_json(m));
    json mean = seed_metrics_json(report.mean);
    mean.erase("seed");
    write_atomic(out / "metrics.json", json{{"averaging", report.averaging},
                                            {"per_seed", per_seed},
                                            {"mean", mean},
                                            {"warnings", report.warnings}}
                                               .dump(2) +
                                           "\n");
    for (size_t i = 0; i < params.size(); ++i) {
        write_checkpoint((out / ("checkpoint_seed" + std::to_string(cfg.seeds[i]) + ".bin")).string(),
                         cfg.model, params[i]);
    }
    write_checkpoint((out / "model.ckpt").string(), cfg.model, params.front());
    std::cout << "mean acc " << report.mean.acc << " over " << cfg.seeds.size() << " seed(s); "
              << "outputs in " << out.string() << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint) {
    json root = load_config_json(opts);
    const ExperimentConfig cfg = parse_config(root);
    const auto [model_cfg, params] = read_checkpoint(checkpoint);
    const std::uint64_t seed = opts.seed >= 0 ? static_cast<std::uint64_t>(opts.seed)
                                              : (cfg.seeds.empty() ? 1 : cfg.seeds.front());
    const Dataset ds = generate_dataset(cfg.slide, 1, 1, cfg.n_test, seed);
    const Model model(model_cfg);
    std::vector<std::string> warnings;
    SeedMetrics m = evaluate(model, params, ds.test, &warnings);
    m.seed = seed;
    json result = json{{"averaging", "macro"},
                       {"metrics", seed_metrics_json(m)},
                       {"warnings", warnings}};
    const fs::path out = resolve_out(opts, "eval");
    fs::create_directories(out);
    write_atomic(out / "eval.json", result.dump(2) + "\n");
    write_snapshot(out, cfg);
    std::cout << result.dump(2) << "\n";
    return 0;
}

// --- render-attention ---------------------------------------------------------

// Min-max normalized patch weights painted as patch-edge blocks. A constant
// vector renders flat mid-gray.
GrayImage render_weights(const std::vector<double>& weights, const PatchGrid& grid) {
    GrayImage img(grid.height(), grid.width(), 256, 0);
    const double lo = *std::min_element(weights.begin(), weights.end());
    const double hi = *std::max_element(weights.begin(), weights.end());
    for (int i = 0; i < grid.patch_count(); ++i) {
        int level = 128;
        if (hi > lo) {
            level = static_cast<int>(std::lround((weights[i] - lo) / (hi - lo) * 255.0));
        }
        const PatchRect b = patch_bounds(grid, i);
        for (int r = b.row0; r < b.row1; ++r) {
            for (int c = b.col0; c < b.col1; ++c) img.at(r, c) = level;
        }
    }
    return img;
}

GrayImage hstack(const std::vector<const GrayImage*>& imgs) {
    int width = 0;
    for (const GrayImage* im : imgs) width += im->width;
    GrayImage out(imgs.front()->height, width, 256, 0);
    int col0 = 0;
    for (const GrayImage* im : imgs) {
        for (int r = 0; r < im->height; ++r) {
            for (int c = 0; c < im->width; ++c) out.at(r, col0 + c) = im->data[static_cast<size_t>(r) * im->width + c];
        }
        col0 += im->width;
    }
    return out;
}

int cmd_render(const CommonOpts& opts, const std::string& checkpoint, int slide_index) {
    json root = load_config_json(opts);
    const ExperimentConfig cfg = parse_config(root);
    const auto [model_cfg, params] = read_checkpoint(checkpoint);
    const std::uint64_t seed = opts.seed >= 0 ? static_cast<std::uint64_t>(opts.seed)
                                              : (cfg.seeds.empty() ? 1 : cfg.seeds.front());
    const Dataset ds = generate_dataset(cfg.slide, 1, 1, cfg.n_test, seed);
    if (slide_index < 0 || slide_index >= static_cast<int>(ds.test.size())) {
        throw std::runtime_error("slide index out of range");
    }
    const LabeledSlide& slide = ds.test[slide_index];
    const Model model(model_cfg);
    const ForwardResult fwd = model.forward(slide.bags, params);

    // Mean over every recorded attention vector at the first scale.
    const PatchGrid& grid = slide.bags[0].grid;
    std::vector<double> attention(grid.patch_count(), 0.0);
    int count = 0;
    if (!fwd.record.transformer.empty()) {
        for (const auto& layer : fwd.record.transformer[0]) {
            for (const auto& ma : layer) {
                for (int i = 0; i < grid.patch_count(); ++i) attention[i] += ma[i];
                ++count;
            }
        }
    }
    if (!fwd.record.mil.empty()) {
        for (int i = 0; i < grid.patch_count(); ++i) attention[i] += fwd.record.mil[0][i];
        ++count;
    }
    for (double& a : attention) a /= count;

    const GuidanceWeights hg =
        build_hg(slide.truth.cells, grid, cfg.dbscan_eps, cfg.dbscan_min_samples);

    const fs::path out = resolve_out(opts, "render");
    fs::create_directories(out);
    const GrayImage heatmap = render_weights(attention, grid);
    const GrayImage guidance = render_weights(hg.weights, grid);
    write_pgm((out / "heatmap.pgm").string(), heatmap);
    write_pgm((out / "guidance.pgm").string(), guidance);
    write_pgm((out / "side_by_side.pgm").string(), hstack({&slide.raster, &heatmap, &guidance}));
    write_snapshot(out, cfg);
    std::cout << "rendered slide " << slide.slide_id << " to " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semantics-aware attention guidance pipeline"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string data_dir, kind = "both", checkpoint;
    int slide_index = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "experiment config JSON");
        sub->add_option("--override", opts.overrides, "config override key=value (repeatable)");
        sub->add_option("--out", opts.out, "output directory (SAG_OUT overrides the root)");
        sub->add_option("--seed", opts.seed, "seed override");
        sub->add_option("--workers", opts.workers, "parallel workers (default: hardware)");
        sub->add_flag("--force", opts.force, "overwrite non-empty output directories");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen);
    CLI::App* guide = app.add_subcommand("build-guidance", "build TG/HG guidance for a dataset");
    add_common(guide);
    guide->add_option("--data", data_dir, "dataset directory from gen-data")->required();
    guide->add_option("--kind", kind, "tg, hg, or both");
    CLI::App* train = app.add_subcommand("train", "train and report multi-seed metrics");
    add_common(train);
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a fresh test split");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    CLI::App* render = app.add_subcommand("render-attention", "export attention heatmaps");
    add_common(render);
    render->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    render->add_option("--slide", slide_index, "test-slide index");

    CLI11_PARSE(app, argc, argv);
    try {
        if (gen->parsed()) return cmd_gen_data(opts);
        if (guide->parsed()) return cmd_build_guidance(opts, data_dir, kind);
        if (train->parsed()) return cmd_train(opts);
        if (eval_cmd->parsed()) return cmd_eval(opts, checkpoint);
        if (render->parsed()) return cmd_render(opts, checkpoint, slide_index);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
