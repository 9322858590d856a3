#pragma once

#include <Eigen/Dense>

#include "sag/guidance.hpp"
#include "sag/models.hpp"

namespace sag {

struct LossBreakdown {
    double l_cls = 0.0;
    double l_mse = 0.0;
    double l_inout = 0.0;
    double weighted_total = 0.0;
    double s_cls = 0.0, s_mse = 0.0, s_inout = 0.0;
    bool mse_skipped = true;    // no HG term contributed (flag off or degenerate)
    bool inout_skipped = true;  // same for TG
    int mse_terms = 0;          // (scale, layer, head) tuples that contributed
    int inout_terms = 0;
};

// Mean squared deviation between heuristic-guidance weights and attention.
double loss_mse(const Eigen::VectorXd& hg, const Eigen::VectorXd& ma);
Eigen::VectorXd loss_mse_grad(const Eigen::VectorXd& hg, const Eigen::VectorXd& ma);

// Signed in&out objective: attention mass outside tissue minus mass inside,
// scaled by 1/p. tg_weights > 0 marks tissue patches.
double loss_inout(const Eigen::VectorXd& tg_weights, const Eigen::VectorXd& ma);
Eigen::VectorXd loss_inout_grad(const Eigen::VectorXd& tg_weights);

// Cross-entropy of the true class under softmax(logits).
double loss_cls(const Eigen::VectorXd& logits, int label);
Eigen::VectorXd loss_cls_grad(const Eigen::VectorXd& logits, int label);

// Homoscedastic uncertainty weighting: sum_k exp(-s_k) L_k + s_k over the
// active tasks. Skipped tasks contribute neither loss nor regularizer.
double uncertainty_weighted_total(double l_cls, double l_mse, double l_inout,
                                  const Eigen::Vector3d& log_vars, bool has_mse,
                                  bool has_inout);

struct SupervisionSpec {
    bool use_hg = false;
    bool use_tg = false;
    HeadPartition partition;
    bool last_layer_only = false;
};

struct SagLossResult {
    LossBreakdown breakdown;
    Eigen::VectorXd dlogits;
    AttentionGrads dma;
    Eigen::Vector3d dlog_vars;
};

// Assembles the joint objective for one multi-scale bag: cross-entropy on
// the logits, MSE against HG on the supervised heads, in&out against TG on
// all heads, combined with uncertainty weighting. Gradients are returned
// with respect to the logits, each recorded attention vector, and the
// log-variances.
SagLossResult sag_loss(const Model& model, const ForwardResult& fwd, const MultiScaleBag& bag,
                       const SupervisionSpec& spec, const Eigen::Vector3d& log_vars);

}  // namespace sag
