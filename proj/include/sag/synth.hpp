#pragma once

#include <cstdint>
#include <vector>

#include "sag/grid.hpp"
#include "sag/guidance.hpp"
#include "sag/models.hpp"

namespace sag {

// Generator recipe for synthetic slides with known ground truth. Feature
// channel layout: channel 0 carries mean patch intensity, channels
// [1, 1+num_classes) carry the planted class signal, the last channels are
// noise-only.
struct SlideSpec {
    std::vector<PatchGrid> scale_grids{PatchGrid(4, 4, 32)};  // all spanning the same raster
    int num_classes = 4;
    int feature_dim = 16;

    int tissue_blob_count = 2;
    double tissue_radius_min = 24.0;
    double tissue_radius_max = 36.0;

    int lesion_count = 2;
    double lesion_radius_min = 9.0;
    double lesion_radius_max = 14.0;
    double feature_contrast = 2.0;  // delta: class-signal magnitude in lesion patches

    int distractor_count = 3;
    double distractor_radius_min = 6.0;
    double distractor_radius_max = 10.0;
    double distractor_strength = 2.0;  // salient but label-independent signal

    double lambda_in = 40.0;  // expected cell points per lesion
    double lambda_out = 4.0;  // expected background cell points per slide

    double noise_sigma = 0.25;  // feature noise
    double raster_noise = 5.0;  // gray-level jitter

    int background_level = 235;
    int tissue_level = 175;
    int lesion_level = 120;
    int distractor_level = 110;
};

struct SlideTruth {
    BinaryMask tissue;
    BinaryMask lesion;
    PointSet cells;
    int label = 0;
};

struct LabeledSlide {
    std::uint64_t slide_id = 0;
    GrayImage raster;
    MultiScaleBag bags;  // one Bag per scale, guidance unset
    SlideTruth truth;
};

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void validate(const SlideSpec& spec);

LabeledSlide generate_slide(const SlideSpec& spec, std::uint64_t seed, int label);

enum class Split { Train, Val, Test };

struct Dataset {
    std::vector<LabeledSlide> train, val, test;
};

// Class-balanced round-robin labels; disjoint seed streams per split.
Dataset generate_dataset(const SlideSpec& spec, int n_train, int n_val, int n_test,
                         std::uint64_t seed);

}  // namespace sag
