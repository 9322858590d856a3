#include "sag/harness.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include "sag/rng.hpp"

namespace sag {

void validate(const ExperimentConfig& config) {
    validate(config.slide);
    if (config.model.num_scales != static_cast<int>(config.slide.scale_grids.size())) {
        throw std::invalid_argument("config: model.num_scales must match slide.scale_grids");
    }
    if (config.model.num_classes != config.slide.num_classes ||
        config.model.feature_dim != config.slide.feature_dim) {
        throw std::invalid_argument("config: model and slide class/feature dims must match");
    }
    if (config.n_train < 1 || config.n_val < 1 || config.n_test < 1) {
        throw std::invalid_argument("config: split sizes must be >= 1");
    }
    if (config.opt.epochs < 1 || config.opt.step_size <= 0.0) {
        throw std::invalid_argument("config: bad optimizer settings");
    }
    if (config.seeds.empty()) throw std::invalid_argument("config: need at least one seed");
    std::vector<std::uint64_t> sorted = config.seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw std::invalid_argument("config: seeds must be distinct");
    }
}

ClassificationMetrics compute_metrics(const std::vector<int>& labels,
                                      const std::vector<Eigen::VectorXd>& scores,
                                      int num_classes) {
    if (labels.size() != scores.size() || labels.empty()) {
        throw std::invalid_argument("compute_metrics: labels/scores size mismatch or empty");
    }
    for (const Eigen::VectorXd& s : scores) {
        if (s.size() != num_classes) {
            throw std::invalid_argument("compute_metrics: score vector width != num_classes");
        }
    }
    const int n = static_cast<int>(labels.size());
    ClassificationMetrics m;

    std::vector<int> preds(n);
    for (int i = 0; i < n; ++i) {
        Eigen::Index arg;
        scores[i].maxCoeff(&arg);
        preds[i] = static_cast<int>(arg);
    }
    int correct = 0;
    for (int i = 0; i < n; ++i) correct += preds[i] == labels[i];
    m.acc = static_cast<double>(correct) / n;

    double prec_sum = 0.0, rec_sum = 0.0, auc_sum = 0.0;
    int pr_classes = 0, auc_classes = 0;
    for (int c = 0; c < num_classes; ++c) {
        int tp = 0, fp = 0, fn = 0, pos = 0;
        for (int i = 0; i < n; ++i) {
            const bool is_pos = labels[i] == c;
            pos += is_pos;
            if (preds[i] == c) {
                if (is_pos) {
                    ++tp;
                } else {
                    ++fp;
                }
            } else if (is_pos) {
                ++fn;
            }
        }
        if (pos == 0) {
            m.warnings.push_back("class " + std::to_string(c) +
                                 " absent from test set; excluded from macro averages");
            continue;
        }
        prec_sum += (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        rec_sum += static_cast<double>(tp) / (tp + fn);
        ++pr_classes;

        const int neg = n - pos;
        if (neg == 0) continue;  // single-class test set, AUC undefined
        // Rank-based AUC equals the trapezoidal ROC integral with ties
        // contributing half credit.
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return scores[a][c] < scores[b][c]; });
        double rank_sum = 0.0;
        int i = 0;
        while (i < n) {
            int j = i;
            while (j < n && scores[order[j]][c] == scores[order[i]][c]) ++j;
            const double avg_rank = 0.5 * (i + 1 + j);  // 1-based average rank of the tie group
            for (int t = i; t < j; ++t) {
                if (labels[order[t]] == c) rank_sum += avg_rank;
            }
            i = j;
        }
        auc_sum += (rank_sum - 0.5 * pos * (pos + 1)) / (static_cast<double>(pos) * neg);
        ++auc_classes;
    }
    m.macro_precision = pr_classes > 0 ? prec_sum / pr_classes : 0.0;
    m.macro_recall = pr_classes > 0 ? rec_sum / pr_classes : 0.0;
    m.macro_auc = auc_classes > 0 ? auc_sum / auc_classes : 0.0;
    return m;
}

double attention_quality(const AttentionRecord& record,
                         const std::vector<MaskAreaRatios>& lesion_ratios_per_scale) {
    double sum = 0.0;
    int count = 0;
    auto mass = [](const Eigen::VectorXd& ma, const MaskAreaRatios& lesion) {
        if (ma.size() != static_cast<Eigen::Index>(lesion.values.size())) {
            throw ShapeError("attention_quality: attention/lesion length mismatch");
        }
        double v = 0.0;
        for (Eigen::Index i = 0; i < ma.size(); ++i) {
            if (lesion.values[i] > 0.0) v += ma[i];
        }
        return v;
    };
    for (size_t s = 0; s < record.transformer.size(); ++s) {
        for (const auto& layer : record.transformer[s]) {
            for (const auto& ma : layer) {
                sum += mass(ma, lesion_ratios_per_scale.at(s));
                ++count;
            }
        }
    }
    for (size_t s = 0; s < record.mil.size(); ++s) {
        sum += mass(record.mil[s], lesion_ratios_per_scale.at(s));
        ++count;
    }
    return count > 0 ? sum / count : 0.0;
}

void attach_guidance(std::vector<LabeledSlide>& slides, const ExperimentConfig& config) {
    for (LabeledSlide& slide : slides) {
        for (Bag& bag : slide.bags) {
            if (config.use_tg) {
                bag.tg = build_tg(slide.raster, bag.grid, config.tissue_is_darker);
            }
            if (config.use_hg) {
                bag.hg = build_hg(slide.truth.cells, bag.grid, config.dbscan_eps,
                                  config.dbscan_min_samples);
            }
        }
    }
}

namespace {

double split_accuracy(const Model& model, const Eigen::VectorXd& params,
                      const std::vector<LabeledSlide>& slides) {
    if (slides.empty()) return 0.0;
    int correct = 0;
    for (const LabeledSlide& slide : slides) {
        const ForwardResult fwd = model.forward(slide.bags, params);
        Eigen::Index arg;
        fwd.logits.maxCoeff(&arg);
        correct += static_cast<int>(arg) == slide.truth.label;
    }
    return static_cast<double>(correct) / slides.size();
}

}  // namespace

Eigen::VectorXd train_seed(const ExperimentConfig& config, const std::vector<LabeledSlide>& train,
                           const std::vector<LabeledSlide>& val, std::uint64_t seed,
                           const LogSink& sink) {
    const Model model(config.model);
    SupervisionSpec spec;
    spec.use_hg = config.use_hg;
    spec.use_tg = config.use_tg;
    spec.partition = select_supervised_heads(config.model);
    spec.last_layer_only = config.model.supervise_last_layer_only;

    Eigen::VectorXd params = model.init_params(seed);
    Eigen::VectorXd velocity = Eigen::VectorXd::Zero(params.size());
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.opt.epochs; ++epoch) {
        Rng shuffle_rng(Rng::derive(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        LossBreakdown epoch_mean;
        epoch_mean.mse_skipped = epoch_mean.inout_skipped = false;
        int train_correct = 0;
        for (int idx : order) {
            const LabeledSlide& slide = train[idx];
            const ForwardResult fwd = model.forward(slide.bags, params);
            if (!fwd.logits.allFinite()) {
                throw DivergenceError("training diverged: non-finite logits at epoch " +
                                      std::to_string(epoch) + ", seed " + std::to_string(seed));
            }
            const SagLossResult loss =
                sag_loss(model, fwd, slide.bags, spec, model.log_vars(params));
            if (!std::isfinite(loss.breakdown.weighted_total)) {
                throw DivergenceError("training diverged: non-finite loss at epoch " +
                                      std::to_string(epoch) + ", seed " + std::to_string(seed));
            }
            Eigen::VectorXd grad = model.backward(fwd, slide.bags, params, loss.dlogits, loss.dma);
            grad.segment<3>(model.log_var_offset()) += loss.dlog_vars;
            if (config.opt.momentum > 0.0) {
                velocity = config.opt.momentum * velocity - config.opt.step_size * grad;
                params += velocity;
            } else {
                params -= config.opt.step_size * grad;
            }
            // The in&out loss can sit at or below zero, where the +s term
            // drives its log-variance to -inf and exp(-s) explodes. Project
            // the log-variances onto a bounded box to keep training stable.
            for (int k = 0; k < 3; ++k) {
                double& s = params[model.log_var_offset() + k];
                s = std::clamp(s, -3.0, 3.0);
            }
            epoch_mean.l_cls += loss.breakdown.l_cls;
            epoch_mean.l_mse += loss.breakdown.l_mse;
            epoch_mean.l_inout += loss.breakdown.l_inout;
            epoch_mean.weighted_total += loss.breakdown.weighted_total;
            epoch_mean.mse_terms += loss.breakdown.mse_terms;
            epoch_mean.inout_terms += loss.breakdown.inout_terms;
            Eigen::Index arg;
            fwd.logits.maxCoeff(&arg);
            train_correct += static_cast<int>(arg) == slide.truth.label;
        }
        if (sink) {
            const double inv = 1.0 / static_cast<double>(train.size());
            epoch_mean.l_cls *= inv;
            epoch_mean.l_mse *= inv;
            epoch_mean.l_inout *= inv;
            epoch_mean.weighted_total *= inv;
            const Eigen::Vector3d lv = model.log_vars(params);
            epoch_mean.s_cls = lv[0];
            epoch_mean.s_mse = lv[1];
            epoch_mean.s_inout = lv[2];
            EpochLog log;
            log.seed = seed;
            log.epoch = epoch;
            log.mean_loss = epoch_mean;
            log.train_acc = static_cast<double>(train_correct) / train.size();
            log.val_acc = split_accuracy(model, params, val);
            sink(log);
        }
    }
    return params;
}

SeedMetrics evaluate(const Model& model, const Eigen::VectorXd& params,
                     const std::vector<LabeledSlide>& test, std::vector<std::string>* warnings) {
    std::vector<int> labels;
    std::vector<Eigen::VectorXd> scores;
    double quality_sum = 0.0;
    for (const LabeledSlide& slide : test) {
        const ForwardResult fwd = model.forward(slide.bags, params);
        labels.push_back(slide.truth.label);
        scores.push_back(fwd.logits);
        std::vector<MaskAreaRatios> lesion_ratios;
        for (const Bag& bag : slide.bags) {
            lesion_ratios.push_back(patchify(slide.truth.lesion, bag.grid));
        }
        quality_sum += attention_quality(fwd.record, lesion_ratios);
    }
    const ClassificationMetrics cm =
        compute_metrics(labels, scores, model.config().num_classes);
    if (warnings) {
        warnings->insert(warnings->end(), cm.warnings.begin(), cm.warnings.end());
    }
    SeedMetrics sm;
    sm.acc = cm.acc;
    sm.precision = cm.macro_precision;
    sm.recall = cm.macro_recall;
    sm.auc = cm.macro_auc;
    sm.attention_quality = quality_sum / static_cast<double>(test.size());
    return sm;
}

MetricsReport run_experiment(const ExperimentConfig& config, const LogSink& sink, int workers,
                             std::vector<Eigen::VectorXd>* params_out) {
    validate(config);
    const int n_seeds = static_cast<int>(config.seeds.size());
    MetricsReport report;
    report.per_seed.resize(n_seeds);
    if (params_out) params_out->assign(n_seeds, Eigen::VectorXd());
    std::vector<std::vector<EpochLog>> logs(n_seeds);
    std::vector<std::vector<std::string>> warnings(n_seeds);
    std::vector<std::string> failures(n_seeds);

    auto run_one = [&](int si) {
        try {
            const std::uint64_t seed = config.seeds[si];
            Dataset ds = generate_dataset(config.slide, config.n_train, config.n_val,
                                          config.n_test, seed);
            attach_guidance(ds.train, config);
            LogSink buffer = [&logs, si](const EpochLog& log) { logs[si].push_back(log); };
            const Eigen::VectorXd params = train_seed(config, ds.train, ds.val, seed, buffer);
            const Model model(config.model);
            report.per_seed[si] = evaluate(model, params, ds.test, &warnings[si]);
            report.per_seed[si].seed = seed;
            if (params_out) (*params_out)[si] = params;
        } catch (const std::exception& e) {
            failures[si] = e.what();
        }
    };

    workers = std::max(1, workers);
    for (int start = 0; start < n_seeds; start += workers) {
        std::vector<std::thread> pool;
        for (int si = start; si < std::min(n_seeds, start + workers); ++si) {
            pool.emplace_back(run_one, si);
        }
        for (auto& t : pool) t.join();
    }
    for (int si = 0; si < n_seeds; ++si) {
        if (!failures[si].empty()) throw DivergenceError(failures[si]);
        if (sink) {
            for (const EpochLog& log : logs[si]) sink(log);
        }
        for (const std::string& w : warnings[si]) {
            if (std::find(report.warnings.begin(), report.warnings.end(), w) ==
                report.warnings.end()) {
                report.warnings.push_back(w);
            }
        }
    }
    for (const SeedMetrics& sm : report.per_seed) {
        report.mean.acc += sm.acc;
        report.mean.precision += sm.precision;
        report.mean.recall += sm.recall;
        report.mean.auc += sm.auc;
        report.mean.attention_quality += sm.attention_quality;
    }
    const double inv = 1.0 / n_seeds;
    report.mean.acc *= inv;
    report.mean.precision *= inv;
    report.mean.recall *= inv;
    report.mean.auc *= inv;
    report.mean.attention_quality *= inv;
    return report;
}

}  // namespace sag
