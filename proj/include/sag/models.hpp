#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sag/grid.hpp"
#include "sag/guidance.hpp"

namespace sag {

enum class ModelKind { Transformer, Mil };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct ModelConfig {
    ModelKind kind = ModelKind::Transformer;
    int num_scales = 1;
    int num_classes = 4;
    int feature_dim = 16;  // e
    int layers = 1;        // l
    int heads = 8;         // h
    int d_k = 4;
    int ffn_dim = 16;
    int mil_hidden = 16;
    double hg_head_fraction = 0.5;
    bool supervise_last_layer_only = false;
};

// One slide at one scale: the MIL unit of training.
struct Bag {
    Eigen::MatrixXd features;  // p x e
    int label = 0;
    PatchGrid grid;
    std::optional<GuidanceWeights> tg;
    std::optional<GuidanceWeights> hg;
    int scale_id = 0;
};

// All scales of one slide, indexed by scale_id.
using MultiScaleBag = std::vector<Bag>;

// Per-(scale, layer, head) mean attention for the transformer; per-scale
// vector for MIL. Every vector is nonnegative and sums to 1.
struct AttentionRecord {
    std::vector<std::vector<std::vector<Eigen::VectorXd>>> transformer;  // [scale][layer][head]
    std::vector<Eigen::VectorXd> mil;                                    // [scale]
};

// Gradient buffers mirroring AttentionRecord shapes.
struct AttentionGrads {
    std::vector<std::vector<std::vector<Eigen::VectorXd>>> transformer;
    std::vector<Eigen::VectorXd> mil;
};

// Which heads receive HG supervision (TG always covers all heads).
struct HeadPartition {
    int heads = 1;
    int hg_heads = 0;
    bool is_hg(int head) const { return head < hg_heads; }
};

HeadPartition select_supervised_heads(const ModelConfig& config);

// Eq.-style scaled dot-product attention: A = softmax(q k^T / sqrt(d_k)),
// mean attention received per patch is the column mean of A.
void transformer_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                           Eigen::MatrixXd& A, Eigen::VectorXd& ma);

Eigen::MatrixXd sinusoidal_positional_encoding(const PatchGrid& grid, int dim);

// Deterministic per-patch descriptors standing in for a pretrained
// extractor: mean intensity, optional planted signal channels, positional
// encodings, seeded noise.
Eigen::MatrixXd feature_source(const GrayImage& raster, const PatchGrid& grid, int dim,
                               const Eigen::MatrixXd* planted_signal, double noise_sigma,
                               std::uint64_t seed);

struct ForwardCache;  // opaque intermediates for the backward pass

struct ForwardResult {
    Eigen::VectorXd logits;
    AttentionRecord record;
    std::shared_ptr<const ForwardCache> cache;
};

// Small trainable backbones with hand-written reverse-mode gradients. All
// learnable state (including the three loss log-variances) lives in one
// flat parameter vector so finite-difference checks and checkpoints are
// trivial.
class Model {
public:
    explicit Model(ModelConfig config);

    const ModelConfig& config() const { return config_; }
    int param_count() const { return param_count_; }

    // Log-variance slots (s_cls, s_mse, s_inout) at the tail of the vector.
    int log_var_offset() const { return param_count_ - 3; }
    Eigen::Vector3d log_vars(const Eigen::VectorXd& params) const {
        return params.segment<3>(log_var_offset());
    }

    Eigen::VectorXd init_params(std::uint64_t seed) const;

    ForwardResult forward(const MultiScaleBag& bag, const Eigen::VectorXd& params,
                          const Eigen::MatrixXd* pe_override = nullptr) const;

    // Accumulates d(loss)/d(params) given upstream gradients on the logits
    // and on each recorded attention vector. Log-variance slots are left
    // zero; the loss assembly owns those.
    Eigen::VectorXd backward(const ForwardResult& fwd, const MultiScaleBag& bag,
                             const Eigen::VectorXd& params, const Eigen::VectorXd& dlogits,
                             const AttentionGrads& dma) const;

    AttentionGrads zero_attention_grads(int p) const;

private:
    ModelConfig config_;
    int param_count_ = 0;
};

// Checkpoint: JSON header line (config, count, FNV-1a checksum) followed by
// little-endian doubles with a length prefix.
void write_checkpoint(const std::string& path, const ModelConfig& config,
                      const Eigen::VectorXd& params);
std::pair<ModelConfig, Eigen::VectorXd> read_checkpoint(const std::string& path);

}  // namespace sag
