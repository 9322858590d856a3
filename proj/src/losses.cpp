#include "sag/losses.hpp"

#include <cmath>

namespace sag {

double loss_mse(const Eigen::VectorXd& hg, const Eigen::VectorXd& ma) {
    if (hg.size() != ma.size()) throw ShapeError("loss_mse: length mismatch");
    if (hg.size() == 0) throw std::invalid_argument("loss_mse: empty vectors");
    return (hg - ma).squaredNorm() / static_cast<double>(hg.size());
}

Eigen::VectorXd loss_mse_grad(const Eigen::VectorXd& hg, const Eigen::VectorXd& ma) {
    if (hg.size() != ma.size()) throw ShapeError("loss_mse_grad: length mismatch");
    return 2.0 * (ma - hg) / static_cast<double>(hg.size());
}

double loss_inout(const Eigen::VectorXd& tg_weights, const Eigen::VectorXd& ma) {
    if (tg_weights.size() != ma.size()) throw ShapeError("loss_inout: length mismatch");
    if (tg_weights.size() == 0) throw std::invalid_argument("loss_inout: empty vectors");
    double inside = 0.0, outside = 0.0;
    for (Eigen::Index i = 0; i < ma.size(); ++i) {
        if (tg_weights[i] > 0.0) {
            inside += ma[i];
        } else {
            outside += ma[i];
        }
    }
    return (outside - inside) / static_cast<double>(ma.size());
}

Eigen::VectorXd loss_inout_grad(const Eigen::VectorXd& tg_weights) {
    const double p = static_cast<double>(tg_weights.size());
    Eigen::VectorXd g(tg_weights.size());
    for (Eigen::Index i = 0; i < tg_weights.size(); ++i) {
        g[i] = (tg_weights[i] > 0.0 ? -1.0 : 1.0) / p;
    }
    return g;
}

double loss_cls(const Eigen::VectorXd& logits, int label) {
    if (label < 0 || label >= logits.size()) {
        throw std::out_of_range("loss_cls: label out of range");
    }
    if (!logits.allFinite()) throw std::invalid_argument("loss_cls: non-finite logits");
    const double m = logits.maxCoeff();
    const double log_sum = std::log((logits.array() - m).exp().sum()) + m;
    return log_sum - logits[label];
}

Eigen::VectorXd loss_cls_grad(const Eigen::VectorXd& logits, int label) {
    if (label < 0 || label >= logits.size()) {
        throw std::out_of_range("loss_cls_grad: label out of range");
    }
    const double m = logits.maxCoeff();
    Eigen::VectorXd soft = (logits.array() - m).exp();
    soft /= soft.sum();
    soft[label] -= 1.0;
    return soft;
}

double uncertainty_weighted_total(double l_cls, double l_mse, double l_inout,
                                  const Eigen::Vector3d& log_vars, bool has_mse,
                                  bool has_inout) {
    if (!std::isfinite(l_cls) || !std::isfinite(l_mse) || !std::isfinite(l_inout)) {
        throw std::invalid_argument("uncertainty_weighted_total: non-finite loss part");
    }
    double total = std::exp(-log_vars[0]) * l_cls + log_vars[0];
    if (has_mse) total += std::exp(-log_vars[1]) * l_mse + log_vars[1];
    if (has_inout) total += std::exp(-log_vars[2]) * l_inout + log_vars[2];
    return total;
}

SagLossResult sag_loss(const Model& model, const ForwardResult& fwd, const MultiScaleBag& bag,
                       const SupervisionSpec& spec, const Eigen::Vector3d& log_vars) {
    const ModelConfig& c = model.config();
    const int p = bag.at(0).grid.patch_count();
    SagLossResult out;
    out.dma = model.zero_attention_grads(p);
    out.dlog_vars.setZero();

    LossBreakdown& bd = out.breakdown;
    bd.s_cls = log_vars[0];
    bd.s_mse = log_vars[1];
    bd.s_inout = log_vars[2];
    bd.l_cls = loss_cls(fwd.logits, bag.at(0).label);

    // Enumerate the supervised attention vectors along with their targets.
    struct Term {
        const Eigen::VectorXd* ma;
        Eigen::VectorXd* dma;
        const GuidanceWeights* hg;  // null unless HG-supervised
        const GuidanceWeights* tg;  // null unless TG-supervised
    };
    std::vector<Term> terms;
    auto usable = [](const std::optional<GuidanceWeights>& g) -> const GuidanceWeights* {
        return (g.has_value() && !g->degenerate) ? &*g : nullptr;
    };
    for (int s = 0; s < c.num_scales; ++s) {
        const GuidanceWeights* hg = spec.use_hg ? usable(bag.at(s).hg) : nullptr;
        const GuidanceWeights* tg = spec.use_tg ? usable(bag.at(s).tg) : nullptr;
        if (hg && static_cast<int>(hg->weights.size()) != bag.at(s).grid.patch_count()) {
            throw ShapeError("sag_loss: HG guidance length does not match grid");
        }
        if (tg && static_cast<int>(tg->weights.size()) != bag.at(s).grid.patch_count()) {
            throw ShapeError("sag_loss: TG guidance length does not match grid");
        }
        if (c.kind == ModelKind::Transformer) {
            for (int l = 0; l < c.layers; ++l) {
                if (spec.last_layer_only && l != c.layers - 1) continue;
                for (int h = 0; h < c.heads; ++h) {
                    terms.push_back(Term{&fwd.record.transformer[s][l][h],
                                         &out.dma.transformer[s][l][h],
                                         spec.partition.is_hg(h) ? hg : nullptr, tg});
                }
            }
        } else {
            terms.push_back(Term{&fwd.record.mil[s], &out.dma.mil[s],
                                 spec.partition.is_hg(0) ? hg : nullptr, tg});
        }
    }

    double mse_sum = 0.0, inout_sum = 0.0;
    for (const Term& t : terms) {
        if (t.hg) {
            const Eigen::VectorXd target =
                Eigen::Map<const Eigen::VectorXd>(t.hg->weights.data(), t.hg->weights.size());
            mse_sum += loss_mse(target, *t.ma);
            ++bd.mse_terms;
        }
        if (t.tg) {
            const Eigen::VectorXd target =
                Eigen::Map<const Eigen::VectorXd>(t.tg->weights.data(), t.tg->weights.size());
            inout_sum += loss_inout(target, *t.ma);
            ++bd.inout_terms;
        }
    }
    bd.mse_skipped = bd.mse_terms == 0;
    bd.inout_skipped = bd.inout_terms == 0;
    if (!bd.mse_skipped) bd.l_mse = mse_sum / bd.mse_terms;
    if (!bd.inout_skipped) bd.l_inout = inout_sum / bd.inout_terms;

    bd.weighted_total = uncertainty_weighted_total(bd.l_cls, bd.l_mse, bd.l_inout, log_vars,
                                                   !bd.mse_skipped, !bd.inout_skipped);

    // Gradients.
    out.dlogits = std::exp(-log_vars[0]) * loss_cls_grad(fwd.logits, bag.at(0).label);
    out.dlog_vars[0] = -std::exp(-log_vars[0]) * bd.l_cls + 1.0;
    const double mse_coeff =
        bd.mse_skipped ? 0.0 : std::exp(-log_vars[1]) / bd.mse_terms;
    const double inout_coeff =
        bd.inout_skipped ? 0.0 : std::exp(-log_vars[2]) / bd.inout_terms;
    for (const Term& t : terms) {
        if (t.hg && mse_coeff != 0.0) {
            const Eigen::VectorXd target =
                Eigen::Map<const Eigen::VectorXd>(t.hg->weights.data(), t.hg->weights.size());
            *t.dma += mse_coeff * loss_mse_grad(target, *t.ma);
        }
        if (t.tg && inout_coeff != 0.0) {
            const Eigen::VectorXd target =
                Eigen::Map<const Eigen::VectorXd>(t.tg->weights.data(), t.tg->weights.size());
            *t.dma += inout_coeff * loss_inout_grad(target);
        }
    }
    if (!bd.mse_skipped) out.dlog_vars[1] = -std::exp(-log_vars[1]) * bd.l_mse + 1.0;
    if (!bd.inout_skipped) out.dlog_vars[2] = -std::exp(-log_vars[2]) * bd.l_inout + 1.0;
    return out;
}

}  // namespace sag
