#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sag/losses.hpp"
#include "sag/models.hpp"
#include "sag/synth.hpp"

namespace sag {

struct OptimizerConfig {
    double step_size = 0.05;
    double momentum = 0.0;
    int epochs = 30;
};

struct ExperimentConfig {
    ModelConfig model;
    SlideSpec slide;
    int n_train = 200;
    int n_val = 50;
    int n_test = 100;
    bool use_hg = false;
    bool use_tg = false;
    OptimizerConfig opt;
    std::vector<std::uint64_t> seeds{1};
    double dbscan_eps = 20.0;
    int dbscan_min_samples = 5;
    bool tissue_is_darker = true;
};

void validate(const ExperimentConfig& config);

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SeedMetrics {
    std::uint64_t seed = 0;
    double acc = 0.0;
    double precision = 0.0;  // macro over classes present in the test set
    double recall = 0.0;
    double auc = 0.0;  // macro one-vs-rest
    double attention_quality = 0.0;
};

struct MetricsReport {
    std::vector<SeedMetrics> per_seed;
    SeedMetrics mean;
    std::string averaging = "macro";  // P/R/AUC averaging convention
    std::vector<std::string> warnings;
};

struct EpochLog {
    std::uint64_t seed = 0;
    int epoch = 0;
    LossBreakdown mean_loss;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

using LogSink = std::function<void(const EpochLog&)>;

struct ClassificationMetrics {
    double acc = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_auc = 0.0;
    std::vector<std::string> warnings;
};

// Accuracy from argmax scores; macro P/R over classes present in the labels;
// macro one-vs-rest AUC, trapezoidal over thresholds (ties get half credit).
ClassificationMetrics compute_metrics(const std::vector<int>& labels,
                                      const std::vector<Eigen::VectorXd>& scores,
                                      int num_classes);

// Attention mass on truth-lesion patches, averaged over every recorded
// attention vector.
double attention_quality(const AttentionRecord& record,
                         const std::vector<MaskAreaRatios>& lesion_ratios_per_scale);

// Builds TG (Otsu on the raster) and HG (cell points through the clustering
// pipeline) for every slide in the split.
void attach_guidance(std::vector<LabeledSlide>& slides, const ExperimentConfig& config);

// Single-seed SGD training; deterministic given (config, data, seed).
Eigen::VectorXd train_seed(const ExperimentConfig& config, const std::vector<LabeledSlide>& train,
                           const std::vector<LabeledSlide>& val, std::uint64_t seed,
                           const LogSink& sink = nullptr);

SeedMetrics evaluate(const Model& model, const Eigen::VectorXd& params,
                     const std::vector<LabeledSlide>& test,
                     std::vector<std::string>* warnings = nullptr);

// Full protocol: per seed, regenerate the dataset, attach guidance, train,
// evaluate on the test split; report per-seed and mean metrics. Seeds may
// run on parallel workers; output order is by seed position either way.
// params_out, when given, receives the final parameter vector per seed.
MetricsReport run_experiment(const ExperimentConfig& config, const LogSink& sink = nullptr,
                             int workers = 1,
                             std::vector<Eigen::VectorXd>* params_out = nullptr);

}  // namespace sag
