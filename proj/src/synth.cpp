#include "sag/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sag/rng.hpp"

namespace sag {

namespace {

struct Disk {
    double cx, cy, r;
    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        return dx * dx + dy * dy <= r * r;
    }
};

void paint_disk(BinaryMask& mask, const Disk& d) {
    const int r0 = std::max(0, static_cast<int>(std::floor(d.cy - d.r)));
    const int r1 = std::min(mask.height - 1, static_cast<int>(std::ceil(d.cy + d.r)));
    const int c0 = std::max(0, static_cast<int>(std::floor(d.cx - d.r)));
    const int c1 = std::min(mask.width - 1, static_cast<int>(std::ceil(d.cx + d.r)));
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            if (d.contains(c + 0.5, r + 0.5)) mask.at(r, c) = 1;
        }
    }
}

}  // namespace

void validate(const SlideSpec& spec) {
    if (spec.scale_grids.empty()) throw GenerationError("SlideSpec: need at least one scale grid");
    const int h = spec.scale_grids[0].height();
    const int w = spec.scale_grids[0].width();
    for (const PatchGrid& g : spec.scale_grids) {
        if (g.height() != h || g.width() != w) {
            throw GenerationError("SlideSpec: all scale grids must span the same raster");
        }
    }
    if (spec.num_classes < 2) throw GenerationError("SlideSpec: need at least two classes");
    if (spec.feature_dim < 2 + spec.num_classes) {
        throw GenerationError("SlideSpec: feature_dim must fit intensity + class channels");
    }
    if (spec.tissue_blob_count < 1 || spec.tissue_radius_min <= 0.0 ||
        spec.tissue_radius_max < spec.tissue_radius_min) {
        throw GenerationError("SlideSpec: bad tissue blob parameters");
    }
    if (spec.lesion_count < 0 || spec.lesion_radius_min <= 0.0 ||
        spec.lesion_radius_max < spec.lesion_radius_min) {
        throw GenerationError("SlideSpec: bad lesion parameters");
    }
    if (spec.lesion_radius_max > spec.tissue_radius_min) {
        throw GenerationError("SlideSpec: lesion larger than the smallest tissue blob");
    }
    if (2.0 * spec.tissue_radius_max > std::min(h, w)) {
        throw GenerationError("SlideSpec: tissue blob does not fit the raster");
    }
    if (spec.lambda_in <= spec.lambda_out) {
        throw GenerationError("SlideSpec: lambda_in must exceed lambda_out");
    }
}

LabeledSlide generate_slide(const SlideSpec& spec, std::uint64_t seed, int label) {
    validate(spec);
    if (label < 0 || label >= spec.num_classes) throw GenerationError("label out of range");
    const int H = spec.scale_grids[0].height();
    const int W = spec.scale_grids[0].width();

    LabeledSlide slide;
    slide.slide_id = seed;
    slide.truth.label = label;

    // Tissue blobs, kept apart so lesion-borne cell clusters stay separable.
    Rng tissue_rng(Rng::derive(seed, "tissue"));
    std::vector<Disk> blobs;
    for (int b = 0; b < spec.tissue_blob_count; ++b) {
        Disk best{0, 0, 0};
        double best_sep = -1.0;
        for (int attempt = 0; attempt < 64; ++attempt) {
            Disk d;
            d.r = tissue_rng.uniform(spec.tissue_radius_min, spec.tissue_radius_max);
            d.cx = tissue_rng.uniform(d.r, W - d.r);
            d.cy = tissue_rng.uniform(d.r, H - d.r);
            double sep = 1e18;
            for (const Disk& other : blobs) {
                sep = std::min(sep, std::hypot(d.cx - other.cx, d.cy - other.cy));
            }
            if (sep > best_sep) {
                best_sep = sep;
                best = d;
            }
            if (blobs.empty() || sep >= 2.2 * spec.tissue_radius_max) break;
        }
        blobs.push_back(best);
    }
    slide.truth.tissue = BinaryMask(H, W);
    for (const Disk& d : blobs) paint_disk(slide.truth.tissue, d);

    // Lesions live fully inside tissue blobs, round-robin over blobs.
    Rng lesion_rng(Rng::derive(seed, "lesion"));
    std::vector<Disk> lesions;
    for (int j = 0; j < spec.lesion_count; ++j) {
        const Disk& blob = blobs[j % blobs.size()];
        Disk d;
        d.r = lesion_rng.uniform(spec.lesion_radius_min,
                                 std::min(spec.lesion_radius_max, blob.r));
        const double max_off = blob.r - d.r;
        const double ang = lesion_rng.uniform(0.0, 6.283185307179586);
        const double off = max_off * std::sqrt(lesion_rng.uniform());
        d.cx = blob.cx + off * std::cos(ang);
        d.cy = blob.cy + off * std::sin(ang);
        lesions.push_back(d);
    }
    slide.truth.lesion = BinaryMask(H, W);
    for (const Disk& d : lesions) paint_disk(slide.truth.lesion, d);

    // Distractors: salient regions in tissue, each carrying a random
    // (label-independent) class pattern.
    Rng distractor_rng(Rng::derive(seed, "distractor"));
    std::vector<Disk> distractors;
    std::vector<int> distractor_class;
    for (int j = 0; j < spec.distractor_count; ++j) {
        const Disk& blob = blobs[distractor_rng.uniform_int(0, static_cast<int>(blobs.size()) - 1)];
        Disk d;
        d.r = distractor_rng.uniform(spec.distractor_radius_min,
                                     std::min(spec.distractor_radius_max, blob.r));
        const double max_off = blob.r - d.r;
        const double ang = distractor_rng.uniform(0.0, 6.283185307179586);
        const double off = max_off * std::sqrt(distractor_rng.uniform());
        d.cx = blob.cx + off * std::cos(ang);
        d.cy = blob.cy + off * std::sin(ang);
        distractors.push_back(d);
        distractor_class.push_back(distractor_rng.uniform_int(0, spec.num_classes - 1));
    }
    std::vector<BinaryMask> distractor_masks;
    for (const Disk& d : distractors) {
        BinaryMask m(H, W);
        paint_disk(m, d);
        // Distractor texture stays out of lesions so the planted signal is clean.
        for (size_t i = 0; i < m.data.size(); ++i) {
            if (slide.truth.lesion.data[i]) m.data[i] = 0;
        }
        distractor_masks.push_back(std::move(m));
    }

    // Raster: white background, darker tissue, darkest lesion/distractor.
    Rng raster_rng(Rng::derive(seed, "raster"));
    slide.raster = GrayImage(H, W, 256, spec.background_level);
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            int level = spec.background_level;
            if (slide.truth.tissue.at(r, c)) level = spec.tissue_level;
            for (size_t j = 0; j < distractor_masks.size(); ++j) {
                if (distractor_masks[j].at(r, c)) level = spec.distractor_level;
            }
            if (slide.truth.lesion.at(r, c)) level = spec.lesion_level;
            const int jitter = static_cast<int>(
                std::lround(raster_rng.uniform(-spec.raster_noise, spec.raster_noise)));
            slide.raster.at(r, c) = std::clamp(level + jitter, 0, 255);
        }
    }

    // Cell point process: lambda_in per lesion, lambda_out in tissue background.
    Rng cell_rng(Rng::derive(seed, "cells"));
    for (const Disk& d : lesions) {
        const int n = cell_rng.poisson(spec.lambda_in);
        for (int i = 0; i < n; ++i) {
            const double ang = cell_rng.uniform(0.0, 6.283185307179586);
            const double rad = d.r * std::sqrt(cell_rng.uniform());
            slide.truth.cells.points.push_back(
                Point2d{d.cx + rad * std::cos(ang), d.cy + rad * std::sin(ang)});
        }
    }
    const int n_bg = cell_rng.poisson(spec.lambda_out);
    for (int i = 0; i < n_bg; ++i) {
        for (int attempt = 0; attempt < 256; ++attempt) {
            const double x = cell_rng.uniform(0.0, static_cast<double>(W));
            const double y = cell_rng.uniform(0.0, static_cast<double>(H));
            const int r = std::min(H - 1, static_cast<int>(y));
            const int c = std::min(W - 1, static_cast<int>(x));
            if (slide.truth.tissue.at(r, c) && !slide.truth.lesion.at(r, c)) {
                slide.truth.cells.points.push_back(Point2d{x, y});
                break;
            }
        }
    }

    // Per-scale bags: label-dependent signal only in lesion-overlapping patches.
    for (size_t s = 0; s < spec.scale_grids.size(); ++s) {
        const PatchGrid& grid = spec.scale_grids[s];
        const int p = grid.patch_count();
        Eigen::MatrixXd signal = Eigen::MatrixXd::Zero(p, spec.feature_dim);
        const MaskAreaRatios lesion_ratios = patchify(slide.truth.lesion, grid);
        for (int i = 0; i < p; ++i) {
            signal(i, 1 + label) += spec.feature_contrast * lesion_ratios.values[i];
        }
        for (size_t j = 0; j < distractor_masks.size(); ++j) {
            const MaskAreaRatios dr = patchify(distractor_masks[j], grid);
            for (int i = 0; i < p; ++i) {
                signal(i, 1 + distractor_class[j]) += spec.distractor_strength * dr.values[i];
            }
        }
        Bag bag;
        bag.grid = grid;
        bag.label = label;
        bag.scale_id = static_cast<int>(s);
        bag.features = feature_source(slide.raster, grid, spec.feature_dim, &signal,
                                      spec.noise_sigma, Rng::derive(seed, "features", s));
        slide.bags.push_back(std::move(bag));
    }
    return slide;
}

Dataset generate_dataset(const SlideSpec& spec, int n_train, int n_val, int n_test,
                         std::uint64_t seed) {
    if (n_train < 1 || n_val < 1 || n_test < 1) {
        throw GenerationError("generate_dataset: split sizes must be >= 1");
    }
    Dataset ds;
    std::set<std::uint64_t> ids;
    auto make_split = [&](const char* stream, int n, std::vector<LabeledSlide>& out) {
        for (int i = 0; i < n; ++i) {
            const std::uint64_t slide_seed = Rng::derive(seed, stream, static_cast<std::uint64_t>(i));
            out.push_back(generate_slide(spec, slide_seed, i % spec.num_classes));
            if (!ids.insert(out.back().slide_id).second) {
                throw GenerationError("generate_dataset: slide id collision across splits");
            }
        }
    };
    make_split("split-train", n_train, ds.train);
    make_split("split-val", n_val, ds.val);
    make_split("split-test", n_test, ds.test);
    return ds;
}

}  // namespace sag
