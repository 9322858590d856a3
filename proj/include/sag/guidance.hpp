#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sag/grid.hpp"

namespace sag {

enum class GuidanceKind { TG, HG };

std::string to_string(GuidanceKind kind);
GuidanceKind guidance_kind_from_string(const std::string& s);

// Normalized per-patch attention supervision. For non-degenerate input the
// weights are nonnegative and sum to 1; degenerate (all-zero) input keeps a
// zero vector and sets the flag.
struct GuidanceWeights {
    GuidanceKind kind = GuidanceKind::TG;
    std::vector<double> weights;
    bool degenerate = false;
};

struct Point2d {
    double x = 0.0;
    double y = 0.0;
};

struct PointSet {
    std::vector<Point2d> points;
};

// Per-point labels: -1 noise, 0..K-1 clusters.
struct ClusterLabeling {
    std::vector<int> labels;
    int num_clusters = 0;
};

// Counterclockwise vertex list. Degenerate hulls (point or segment) keep
// 1 or 2 vertices and are rasterized as thickened primitives.
struct ConvexPolygon {
    std::vector<Point2d> vertices;
};

struct OtsuResult {
    int threshold = 0;
    bool degenerate = false;  // constant image, nothing to split
};

// Threshold maximizing between-class variance of {<t} vs {>=t}; smallest
// maximizer wins ties.
OtsuResult otsu_threshold(const GrayImage& gray);
OtsuResult otsu_threshold_histogram(const std::vector<long long>& histogram);

// Binary tissue mask via Otsu. With tissue_is_darker (the default for H&E on
// white slides) pixels below the threshold become 1.
BinaryMask tissue_mask(const GrayImage& image, const PatchGrid& grid,
                       bool tissue_is_darker = true, bool* degenerate = nullptr);

// Classical DBSCAN over Euclidean distance; the eps-neighborhood count
// includes the point itself. Border points reachable from several clusters
// go to the cluster of the lowest-indexed core point in scan order.
ClusterLabeling dbscan(const PointSet& points, double eps, int min_samples);

ConvexPolygon convex_hull(const PointSet& cluster);

// Pixel set to 1 iff its center (col+0.5, row+0.5) lies inside or on any
// hull; degenerate hulls cover pixels whose centers lie within 0.5 px.
BinaryMask rasterize_hulls(const std::vector<ConvexPolygon>& hulls, const PatchGrid& grid);

// Eq.-style simplex normalization of mask-area ratios.
GuidanceWeights guidance_weights(const MaskAreaRatios& ratios, GuidanceKind kind);

// Full heuristic-guidance pipeline: cluster points, hull each cluster,
// rasterize, patchify, normalize. Noise points contribute nothing.
GuidanceWeights build_hg(const PointSet& points, const PatchGrid& grid,
                         double eps, int min_samples);

GuidanceWeights build_tg(const GrayImage& image, const PatchGrid& grid,
                         bool tissue_is_darker = true);

// CSV with header "x,y".
PointSet read_points_csv(const std::string& path);
void write_points_csv(const std::string& path, const PointSet& points);

// JSON object {kind, grid:{rows,cols,patch_edge}, weights:[...], degenerate}.
void write_guidance_json(const std::string& path, const GuidanceWeights& gw,
                         const PatchGrid& grid);
GuidanceWeights read_guidance_json(const std::string& path, PatchGrid* grid_out = nullptr);

}  // namespace sag
