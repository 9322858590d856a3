#include "sag/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sag/rng.hpp"

namespace sag {

std::string to_string(ModelKind kind) {
    return kind == ModelKind::Transformer ? "transformer" : "mil";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "transformer") return ModelKind::Transformer;
    if (s == "mil") return ModelKind::Mil;
    throw std::invalid_argument("unknown model kind: " + s);
}

HeadPartition select_supervised_heads(const ModelConfig& config) {
    if (config.hg_head_fraction < 0.0 || config.hg_head_fraction > 1.0) {
        throw std::invalid_argument("hg_head_fraction must be in [0, 1]");
    }
    HeadPartition part;
    if (config.kind == ModelKind::Transformer) {
        part.heads = config.heads;
        part.hg_heads = static_cast<int>(std::floor(part.heads * config.hg_head_fraction));
    } else {
        // MIL has a single attention vector; any positive fraction supervises it.
        part.heads = 1;
        part.hg_heads = config.hg_head_fraction > 0.0 ? 1 : 0;
    }
    return part;
}

void transformer_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                           Eigen::MatrixXd& A, Eigen::VectorXd& ma) {
    if (q.rows() != k.rows() || q.cols() != k.cols() || q.cols() < 1) {
        throw ShapeError("transformer_attention: q and k must share a p x d_k shape");
    }
    if (!q.allFinite() || !k.allFinite()) {
        throw std::invalid_argument("transformer_attention: non-finite input");
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    A = q * k.transpose() * scale;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        const double m = A.row(i).maxCoeff();
        A.row(i) = (A.row(i).array() - m).exp();
        A.row(i) /= A.row(i).sum();
    }
    ma = A.colwise().mean();
}

Eigen::MatrixXd sinusoidal_positional_encoding(const PatchGrid& grid, int dim) {
    const int p = grid.patch_count();
    Eigen::MatrixXd pe(p, dim);
    for (int i = 0; i < p; ++i) {
        const double row = i / grid.cols;
        const double col = i % grid.cols;
        for (int d = 0; d < dim; ++d) {
            const double pos = (d % 2 == 0) ? row : col;
            const double freq = std::pow(10000.0, -static_cast<double>(d / 2) / std::max(1, dim / 2));
            pe(i, d) = (d % 4 < 2) ? std::sin(pos * freq) : std::cos(pos * freq);
        }
    }
    return pe;
}

Eigen::MatrixXd feature_source(const GrayImage& raster, const PatchGrid& grid, int dim,
                               const Eigen::MatrixXd* planted_signal, double noise_sigma,
                               std::uint64_t seed) {
    if (raster.height != grid.height() || raster.width != grid.width()) {
        throw ShapeError("feature_source: raster does not match grid");
    }
    const int p = grid.patch_count();
    if (dim < 1) throw std::invalid_argument("feature_source: dim must be positive");
    if (planted_signal && (planted_signal->rows() != p || planted_signal->cols() != dim)) {
        throw ShapeError("feature_source: planted signal must be p x e");
    }
    Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(p, dim);
    const double denom = static_cast<double>(grid.patch_edge) * grid.patch_edge *
                         (raster.levels - 1);
    for (int i = 0; i < p; ++i) {
        const PatchRect b = patch_bounds(grid, i);
        long long sum = 0;
        for (int r = b.row0; r < b.row1; ++r) {
            for (int c = b.col0; c < b.col1; ++c) sum += raster.at(r, c);
        }
        feats(i, 0) = static_cast<double>(sum) / denom;
    }
    if (planted_signal) feats += *planted_signal;
    if (noise_sigma > 0.0) {
        Rng rng(Rng::derive(seed, "features"));
        for (int i = 0; i < p; ++i) {
            for (int d = 1; d < dim; ++d) feats(i, d) += rng.normal(0.0, noise_sigma);
        }
    }
    return feats;
}

// ---------------------------------------------------------------------------
// Parameter layout

namespace {

struct Offsets {
    // transformer, indexed (scale*layers + layer)*heads + head
    std::vector<int> wq, wk, wv;
    // transformer, indexed scale*layers + layer
    std::vector<int> wo, bo, w1, b1, w2, b2;
    // mil, indexed by scale
    std::vector<int> v, bv, w;
    int wc = 0, bc = 0, log_vars = 0;
    int total = 0;
};

Offsets compute_offsets(const ModelConfig& c) {
    Offsets o;
    int off = 0;
    auto take = [&off](int n) {
        const int at = off;
        off += n;
        return at;
    };
    if (c.kind == ModelKind::Transformer) {
        for (int s = 0; s < c.num_scales; ++s) {
            for (int l = 0; l < c.layers; ++l) {
                for (int h = 0; h < c.heads; ++h) {
                    o.wq.push_back(take(c.feature_dim * c.d_k));
                    o.wk.push_back(take(c.feature_dim * c.d_k));
                    o.wv.push_back(take(c.feature_dim * c.d_k));
                }
                o.wo.push_back(take(c.heads * c.d_k * c.feature_dim));
                o.bo.push_back(take(c.feature_dim));
                o.w1.push_back(take(c.feature_dim * c.ffn_dim));
                o.b1.push_back(take(c.ffn_dim));
                o.w2.push_back(take(c.ffn_dim * c.feature_dim));
                o.b2.push_back(take(c.feature_dim));
            }
        }
    } else {
        for (int s = 0; s < c.num_scales; ++s) {
            o.v.push_back(take(c.feature_dim * c.mil_hidden));
            o.bv.push_back(take(c.mil_hidden));
            o.w.push_back(take(c.mil_hidden));
        }
    }
    o.wc = take(c.num_scales * c.feature_dim * c.num_classes);
    o.bc = take(c.num_classes);
    o.log_vars = take(3);
    o.total = off;
    return o;
}

using CMap = Eigen::Map<const Eigen::MatrixXd>;
using MMap = Eigen::Map<Eigen::MatrixXd>;
using CVec = Eigen::Map<const Eigen::VectorXd>;
using MVec = Eigen::Map<Eigen::VectorXd>;

}  // namespace

struct ForwardCache {
    struct Layer {
        Eigen::MatrixXd x_in;                 // p x e
        std::vector<Eigen::MatrixXd> q, k, v; // per head, p x d_k
        std::vector<Eigen::MatrixXd> a;       // per head, p x p
        Eigen::MatrixXd h_cat;                // p x (heads*d_k)
        Eigen::MatrixXd x1;                   // p x e, post-attention residual
        Eigen::MatrixXd f;                    // p x ffn_dim
    };
    struct Scale {
        std::vector<Layer> layers;
        Eigen::MatrixXd x_final;  // transformer output, p x e
        Eigen::VectorXd pool;     // transformer pooling weights (mean MA)
        Eigen::MatrixXd t;        // MIL tanh activations, p x m
        Eigen::VectorXd ma;       // MIL attention
    };
    std::vector<Scale> scales;
    Eigen::VectorXd z_cat;
};

Model::Model(ModelConfig config) : config_(std::move(config)) {
    if (config_.num_scales < 1 || config_.num_classes < 2 || config_.feature_dim < 1 ||
        config_.layers < 1 || config_.heads < 1 || config_.d_k < 1 || config_.ffn_dim < 1 ||
        config_.mil_hidden < 1) {
        throw std::invalid_argument("ModelConfig: all architecture sizes must be positive");
    }
    param_count_ = compute_offsets(config_).total;
}

Eigen::VectorXd Model::init_params(std::uint64_t seed) const {
    const Offsets o = compute_offsets(config_);
    Eigen::VectorXd params = Eigen::VectorXd::Zero(param_count_);
    Rng rng(Rng::derive(seed, "init"));
    auto fill = [&](int offset, int rows, int cols, double scale) {
        const double bound = scale / std::sqrt(static_cast<double>(rows));
        MMap m(params.data() + offset, rows, cols);
        for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = rng.uniform(-bound, bound);
    };
    const ModelConfig& c = config_;
    if (c.kind == ModelKind::Transformer) {
        int idx = 0;
        for (int s = 0; s < c.num_scales; ++s) {
            for (int l = 0; l < c.layers; ++l) {
                for (int h = 0; h < c.heads; ++h, ++idx) {
                    // Small q/k keeps attention near-uniform at init.
                    fill(o.wq[idx], c.feature_dim, c.d_k, 0.1);
                    fill(o.wk[idx], c.feature_dim, c.d_k, 0.1);
                    fill(o.wv[idx], c.feature_dim, c.d_k, 1.0);
                }
                const int li = s * c.layers + l;
                fill(o.wo[li], c.heads * c.d_k, c.feature_dim, 1.0);
                fill(o.w1[li], c.feature_dim, c.ffn_dim, 1.0);
                fill(o.w2[li], c.ffn_dim, c.feature_dim, 1.0);
            }
        }
    } else {
        for (int s = 0; s < c.num_scales; ++s) {
            fill(o.v[s], c.feature_dim, c.mil_hidden, 1.0);
            fill(o.w[s], c.mil_hidden, 1, 1.0);
        }
    }
    fill(o.wc, c.num_scales * c.feature_dim, c.num_classes, 1.0);
    return params;
}

AttentionGrads Model::zero_attention_grads(int p) const {
    AttentionGrads g;
    if (config_.kind == ModelKind::Transformer) {
        g.transformer.assign(
            config_.num_scales,
            std::vector<std::vector<Eigen::VectorXd>>(
                config_.layers,
                std::vector<Eigen::VectorXd>(config_.heads, Eigen::VectorXd::Zero(p))));
    } else {
        g.mil.assign(config_.num_scales, Eigen::VectorXd::Zero(p));
    }
    return g;
}

namespace {

void check_bag(const MultiScaleBag& bag, const ModelConfig& c) {
    if (static_cast<int>(bag.size()) != c.num_scales) {
        throw ShapeError("bag has " + std::to_string(bag.size()) + " scales, config expects " +
                         std::to_string(c.num_scales));
    }
    for (const Bag& b : bag) {
        if (b.features.rows() != b.grid.patch_count() || b.features.cols() != c.feature_dim) {
            throw ShapeError("bag features must be p x e with p matching the grid");
        }
        if (!b.features.allFinite()) throw std::invalid_argument("bag features must be finite");
        if (b.label < 0 || b.label >= c.num_classes) {
            throw std::invalid_argument("bag label out of range");
        }
    }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
    Eigen::VectorXd out = (v.array() - v.maxCoeff()).exp();
    out /= out.sum();
    return out;
}

}  // namespace

ForwardResult Model::forward(const MultiScaleBag& bag, const Eigen::VectorXd& params,
                             const Eigen::MatrixXd* pe_override) const {
    check_bag(bag, config_);
    if (params.size() != param_count_) throw ShapeError("wrong parameter vector length");
    const ModelConfig& c = config_;
    const Offsets o = compute_offsets(c);
    const double* base = params.data();

    auto cache = std::make_shared<ForwardCache>();
    cache->scales.resize(c.num_scales);
    cache->z_cat = Eigen::VectorXd::Zero(c.num_scales * c.feature_dim);

    ForwardResult result;
    if (c.kind == ModelKind::Transformer) {
        result.record.transformer.resize(c.num_scales);
    } else {
        result.record.mil.resize(c.num_scales);
    }

    for (int s = 0; s < c.num_scales; ++s) {
        const Bag& b = bag[s];
        const int p = b.grid.patch_count();
        ForwardCache::Scale& sc = cache->scales[s];
        if (c.kind == ModelKind::Transformer) {
            Eigen::MatrixXd x = b.features;
            if (pe_override) {
                if (pe_override->rows() != p || pe_override->cols() != c.feature_dim) {
                    throw ShapeError("positional encoding override must be p x e");
                }
                x += *pe_override;
            } else {
                x += sinusoidal_positional_encoding(b.grid, c.feature_dim);
            }
            result.record.transformer[s].resize(c.layers);
            sc.layers.resize(c.layers);
            for (int l = 0; l < c.layers; ++l) {
                const int li = s * c.layers + l;
                ForwardCache::Layer& lc = sc.layers[l];
                lc.x_in = x;
                lc.q.resize(c.heads);
                lc.k.resize(c.heads);
                lc.v.resize(c.heads);
                lc.a.resize(c.heads);
                lc.h_cat.resize(p, c.heads * c.d_k);
                result.record.transformer[s][l].resize(c.heads);
                for (int h = 0; h < c.heads; ++h) {
                    const int hi = li * c.heads + h;
                    CMap wq(base + o.wq[hi], c.feature_dim, c.d_k);
                    CMap wk(base + o.wk[hi], c.feature_dim, c.d_k);
                    CMap wv(base + o.wv[hi], c.feature_dim, c.d_k);
                    lc.q[h] = x * wq;
                    lc.k[h] = x * wk;
                    lc.v[h] = x * wv;
                    Eigen::VectorXd ma;
                    transformer_attention(lc.q[h], lc.k[h], lc.a[h], ma);
                    result.record.transformer[s][l][h] = ma;
                    lc.h_cat.block(0, h * c.d_k, p, c.d_k) = lc.a[h] * lc.v[h];
                }
                CMap wo(base + o.wo[li], c.heads * c.d_k, c.feature_dim);
                CVec bo(base + o.bo[li], c.feature_dim);
                lc.x1 = x + lc.h_cat * wo;
                lc.x1.rowwise() += bo.transpose();
                CMap w1(base + o.w1[li], c.feature_dim, c.ffn_dim);
                CVec b1(base + o.b1[li], c.ffn_dim);
                CMap w2(base + o.w2[li], c.ffn_dim, c.feature_dim);
                CVec b2(base + o.b2[li], c.feature_dim);
                Eigen::MatrixXd pre = lc.x1 * w1;
                pre.rowwise() += b1.transpose();
                lc.f = pre.array().tanh();
                x = lc.x1 + lc.f * w2;
                x.rowwise() += b2.transpose();
            }
            sc.x_final = x;
            // Scale embedding pools patches by the attention they receive
            // (mean MA over layers and heads), so supervised attention feeds
            // straight into the classifier.
            sc.pool = Eigen::VectorXd::Zero(p);
            for (int l = 0; l < c.layers; ++l) {
                for (int h = 0; h < c.heads; ++h) {
                    sc.pool += result.record.transformer[s][l][h];
                }
            }
            sc.pool /= static_cast<double>(c.layers) * c.heads;
            cache->z_cat.segment(s * c.feature_dim, c.feature_dim) = x.transpose() * sc.pool;
        } else {
            CMap v(base + o.v[s], c.feature_dim, c.mil_hidden);
            CVec bv(base + o.bv[s], c.mil_hidden);
            CVec w(base + o.w[s], c.mil_hidden);
            Eigen::MatrixXd pre = b.features * v;
            pre.rowwise() += bv.transpose();
            sc.t = pre.array().tanh();
            sc.ma = softmax(sc.t * w);
            result.record.mil[s] = sc.ma;
            cache->z_cat.segment(s * c.feature_dim, c.feature_dim) =
                b.features.transpose() * sc.ma;
        }
    }

    CMap wc(base + o.wc, c.num_scales * c.feature_dim, c.num_classes);
    CVec bc(base + o.bc, c.num_classes);
    result.logits = wc.transpose() * cache->z_cat + bc;
    result.cache = cache;
    return result;
}

Eigen::VectorXd Model::backward(const ForwardResult& fwd, const MultiScaleBag& bag,
                                const Eigen::VectorXd& params, const Eigen::VectorXd& dlogits,
                                const AttentionGrads& dma) const {
    const ModelConfig& c = config_;
    const Offsets o = compute_offsets(c);
    const double* base = params.data();
    const ForwardCache& cache = *fwd.cache;

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(param_count_);
    double* gbase = grad.data();

    CMap wc(base + o.wc, c.num_scales * c.feature_dim, c.num_classes);
    MMap dwc(gbase + o.wc, c.num_scales * c.feature_dim, c.num_classes);
    MVec dbc(gbase + o.bc, c.num_classes);
    dwc += cache.z_cat * dlogits.transpose();
    dbc += dlogits;
    const Eigen::VectorXd dz_cat = wc * dlogits;

    for (int s = 0; s < c.num_scales; ++s) {
        const Bag& b = bag[s];
        const int p = b.grid.patch_count();
        const Eigen::VectorXd dz = dz_cat.segment(s * c.feature_dim, c.feature_dim);
        const ForwardCache::Scale& sc = cache.scales[s];

        if (c.kind == ModelKind::Transformer) {
            // z_s = x_final^T * pool; pool is the mean MA over layers/heads,
            // so dz flows both into x_final and into every attention map.
            Eigen::MatrixXd dx = sc.pool * dz.transpose();
            const Eigen::VectorXd dpool =
                sc.x_final * dz / (static_cast<double>(c.layers) * c.heads);
            for (int l = c.layers - 1; l >= 0; --l) {
                const int li = s * c.layers + l;
                const ForwardCache::Layer& lc = sc.layers[l];
                CMap w1(base + o.w1[li], c.feature_dim, c.ffn_dim);
                CMap w2(base + o.w2[li], c.ffn_dim, c.feature_dim);
                CMap wo(base + o.wo[li], c.heads * c.d_k, c.feature_dim);
                MMap dw1(gbase + o.w1[li], c.feature_dim, c.ffn_dim);
                MVec db1(gbase + o.b1[li], c.ffn_dim);
                MMap dw2(gbase + o.w2[li], c.ffn_dim, c.feature_dim);
                MVec db2(gbase + o.b2[li], c.feature_dim);
                MMap dwo(gbase + o.wo[li], c.heads * c.d_k, c.feature_dim);
                MVec dbo(gbase + o.bo[li], c.feature_dim);

                const Eigen::MatrixXd df = dx * w2.transpose();
                const Eigen::MatrixXd dg =
                    (df.array() * (1.0 - lc.f.array().square())).matrix();
                dw2 += lc.f.transpose() * dx;
                db2 += dx.colwise().sum();
                Eigen::MatrixXd dx1 = dx + dg * w1.transpose();
                dw1 += lc.x1.transpose() * dg;
                db1 += dg.colwise().sum();

                dwo += lc.h_cat.transpose() * dx1;
                dbo += dx1.colwise().sum();
                const Eigen::MatrixXd dh_cat = dx1 * wo.transpose();
                Eigen::MatrixXd dx_in = dx1;  // residual path

                const double scale = 1.0 / std::sqrt(static_cast<double>(c.d_k));
                for (int h = 0; h < c.heads; ++h) {
                    const int hi = li * c.heads + h;
                    CMap wq(base + o.wq[hi], c.feature_dim, c.d_k);
                    CMap wk(base + o.wk[hi], c.feature_dim, c.d_k);
                    CMap wv(base + o.wv[hi], c.feature_dim, c.d_k);
                    MMap dwq(gbase + o.wq[hi], c.feature_dim, c.d_k);
                    MMap dwk(gbase + o.wk[hi], c.feature_dim, c.d_k);
                    MMap dwv(gbase + o.wv[hi], c.feature_dim, c.d_k);

                    const Eigen::MatrixXd dh = dh_cat.block(0, h * c.d_k, p, c.d_k);
                    Eigen::MatrixXd da = dh * lc.v[h].transpose();
                    const Eigen::MatrixXd dv = lc.a[h].transpose() * dh;
                    // Mean attention is the column mean of A; it feeds both
                    // the guidance losses and the pooling weights.
                    const Eigen::VectorXd dma_h = dma.transformer[s][l][h] + dpool;
                    da += Eigen::MatrixXd::Ones(p, 1) * dma_h.transpose() / p;
                    // Row-softmax backward.
                    Eigen::MatrixXd dzm(p, p);
                    for (int i = 0; i < p; ++i) {
                        const double dot = da.row(i).dot(lc.a[h].row(i));
                        dzm.row(i) =
                            lc.a[h].row(i).array() * (da.row(i).array() - dot);
                    }
                    const Eigen::MatrixXd dq = dzm * lc.k[h] * scale;
                    const Eigen::MatrixXd dk = dzm.transpose() * lc.q[h] * scale;
                    dwq += lc.x_in.transpose() * dq;
                    dwk += lc.x_in.transpose() * dk;
                    dwv += lc.x_in.transpose() * dv;
                    dx_in += dq * wq.transpose() + dk * wk.transpose() + dv * wv.transpose();
                }
                dx = dx_in;
            }
        } else {
            CMap v(base + o.v[s], c.feature_dim, c.mil_hidden);
            CVec w(base + o.w[s], c.mil_hidden);
            MMap dv(gbase + o.v[s], c.feature_dim, c.mil_hidden);
            MVec dbv(gbase + o.bv[s], c.mil_hidden);
            MVec dw(gbase + o.w[s], c.mil_hidden);

            Eigen::VectorXd dma_total = b.features * dz + dma.mil[s];
            const double dot = sc.ma.dot(dma_total);
            const Eigen::VectorXd da = (sc.ma.array() * (dma_total.array() - dot)).matrix();
            dw += sc.t.transpose() * da;
            const Eigen::MatrixXd dt = da * w.transpose();
            const Eigen::MatrixXd dpre = (dt.array() * (1.0 - sc.t.array().square())).matrix();
            dv += b.features.transpose() * dpre;
            dbv += dpre.colwise().sum();
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

std::uint64_t fnv1a(const unsigned char* bytes, size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"kind", to_string(c.kind)},
            {"num_scales", c.num_scales},
            {"num_classes", c.num_classes},
            {"feature_dim", c.feature_dim},
            {"layers", c.layers},
            {"heads", c.heads},
            {"d_k", c.d_k},
            {"ffn_dim", c.ffn_dim},
            {"mil_hidden", c.mil_hidden},
            {"hg_head_fraction", c.hg_head_fraction},
            {"supervise_last_layer_only", c.supervise_last_layer_only}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.kind = model_kind_from_string(j.at("kind").get<std::string>());
    c.num_scales = j.at("num_scales").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.d_k = j.at("d_k").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.mil_hidden = j.at("mil_hidden").get<int>();
    c.hg_head_fraction = j.at("hg_head_fraction").get<double>();
    c.supervise_last_layer_only = j.at("supervise_last_layer_only").get<bool>();
    return c;
}

}  // namespace

void write_checkpoint(const std::string& path, const ModelConfig& config,
                      const Eigen::VectorXd& params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(params.data());
    const size_t nbytes = static_cast<size_t>(params.size()) * sizeof(double);
    nlohmann::json header = {{"format", "sag-checkpoint-v1"},
                             {"config", config_to_json(config)},
                             {"param_count", params.size()},
                             {"checksum", fnv1a(bytes, nbytes)}};
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_checkpoint: cannot open " + path);
    f << header.dump() << "\n";
    const std::uint64_t count = static_cast<std::uint64_t>(params.size());
    f.write(reinterpret_cast<const char*>(&count), sizeof(count));
    f.write(reinterpret_cast<const char*>(bytes), static_cast<std::streamsize>(nbytes));
    if (!f) throw std::runtime_error("write_checkpoint: write failed for " + path);
}

std::pair<ModelConfig, Eigen::VectorXd> read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_checkpoint: cannot open " + path);
    std::string header_line;
    std::getline(f, header_line);
    const nlohmann::json header = nlohmann::json::parse(header_line);
    if (header.at("format").get<std::string>() != "sag-checkpoint-v1") {
        throw std::runtime_error("read_checkpoint: unknown format in " + path);
    }
    const ModelConfig config = config_from_json(header.at("config"));
    std::uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (static_cast<std::int64_t>(count) != header.at("param_count").get<std::int64_t>()) {
        throw std::runtime_error("read_checkpoint: length prefix mismatch in " + path);
    }
    Eigen::VectorXd params(static_cast<Eigen::Index>(count));
    f.read(reinterpret_cast<char*>(params.data()),
           static_cast<std::streamsize>(count * sizeof(double)));
    if (!f) throw std::runtime_error("read_checkpoint: truncated file " + path);
    const auto* bytes = reinterpret_cast<const unsigned char*>(params.data());
    if (fnv1a(bytes, count * sizeof(double)) != header.at("checksum").get<std::uint64_t>()) {
        throw std::runtime_error("read_checkpoint: checksum mismatch in " + path);
    }
    return {config, std::move(params)};
}

}  // namespace sag
