#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sag/guidance.hpp"
#include "sag/harness.hpp"
#include "sag/losses.hpp"
#include "sag/models.hpp"
#include "sag/synth.hpp"

namespace py = pybind11;
using namespace sag;

namespace {

BinaryMask mask_from_rows(const std::vector<std::vector<int>>& rows) {
    const int h = static_cast<int>(rows.size());
    const int w = h > 0 ? static_cast<int>(rows[0].size()) : 0;
    BinaryMask mask(h, w);
    for (int r = 0; r < h; ++r) {
        if (static_cast<int>(rows[r].size()) != w) {
            throw std::invalid_argument("mask rows must have equal length");
        }
        for (int c = 0; c < w; ++c) mask.at(r, c) = rows[r][c] ? 1 : 0;
    }
    return mask;
}

PointSet points_from_pairs(const std::vector<std::pair<double, double>>& pts) {
    PointSet ps;
    for (const auto& [x, y] : pts) ps.points.push_back({x, y});
    return ps;
}

}  // namespace

PYBIND11_MODULE(sagcore, m) {
    m.doc() = "core operations: patch grids, guidance generation, losses, models";

    py::class_<PatchGrid>(m, "PatchGrid")
        .def(py::init<int, int, int>(), py::arg("rows"), py::arg("cols"), py::arg("patch_edge"))
        .def_readonly("rows", &PatchGrid::rows)
        .def_readonly("cols", &PatchGrid::cols)
        .def_readonly("patch_edge", &PatchGrid::patch_edge)
        .def("patch_count", &PatchGrid::patch_count)
        .def("height", &PatchGrid::height)
        .def("width", &PatchGrid::width);

    py::class_<GuidanceWeights>(m, "GuidanceWeights")
        .def_property_readonly("kind",
                               [](const GuidanceWeights& g) { return to_string(g.kind); })
        .def_readonly("weights", &GuidanceWeights::weights)
        .def_readonly("degenerate", &GuidanceWeights::degenerate);

    m.def(
        "patchify",
        [](const std::vector<std::vector<int>>& mask, const PatchGrid& grid) {
            return patchify(mask_from_rows(mask), grid).values;
        },
        py::arg("mask"), py::arg("grid"),
        "per-patch fraction of set pixels for a row-major binary mask");

    m.def(
        "otsu_threshold",
        [](const std::vector<long long>& histogram) {
            const OtsuResult r = otsu_threshold_histogram(histogram);
            return py::make_tuple(r.threshold, r.degenerate);
        },
        py::arg("histogram"), "(threshold, degenerate) maximizing between-class variance");

    m.def(
        "dbscan",
        [](const std::vector<std::pair<double, double>>& points, double eps, int min_samples) {
            return dbscan(points_from_pairs(points), eps, min_samples).labels;
        },
        py::arg("points"), py::arg("eps"), py::arg("min_samples"),
        "per-point cluster labels, -1 for noise");

    m.def(
        "convex_hull",
        [](const std::vector<std::pair<double, double>>& points) {
            std::vector<std::pair<double, double>> out;
            for (const Point2d& v : convex_hull(points_from_pairs(points)).vertices) {
                out.emplace_back(v.x, v.y);
            }
            return out;
        },
        py::arg("points"), "counterclockwise hull vertices");

    m.def(
        "guidance_weights",
        [](const std::vector<double>& ratios, const std::string& kind) {
            MaskAreaRatios r;
            r.values = ratios;
            return guidance_weights(r, guidance_kind_from_string(kind));
        },
        py::arg("ratios"), py::arg("kind"), "simplex-normalized mask-area ratios");

    m.def(
        "build_hg",
        [](const std::vector<std::pair<double, double>>& points, const PatchGrid& grid,
           double eps, int min_samples) {
            return build_hg(points_from_pairs(points), grid, eps, min_samples);
        },
        py::arg("points"), py::arg("grid"), py::arg("eps") = 20.0, py::arg("min_samples") = 5,
        "heuristic guidance from point detections");

    m.def(
        "transformer_attention",
        [](const Eigen::MatrixXd& q, const Eigen::MatrixXd& k) {
            Eigen::MatrixXd A;
            Eigen::VectorXd ma;
            transformer_attention(q, k, A, ma);
            return py::make_tuple(A, ma);
        },
        py::arg("q"), py::arg("k"), "(attention matrix, mean attention per patch)");

    m.def("loss_mse", &loss_mse, py::arg("hg"), py::arg("ma"));
    m.def("loss_inout", &loss_inout, py::arg("tg"), py::arg("ma"));
    m.def(
        "uncertainty_weighted_total",
        [](double l_cls, double l_mse, double l_inout, const Eigen::Vector3d& log_vars) {
            return uncertainty_weighted_total(l_cls, l_mse, l_inout, log_vars, true, true);
        },
        py::arg("l_cls"), py::arg("l_mse"), py::arg("l_inout"), py::arg("log_vars"));

    m.def(
        "generate_slide_summary",
        [](std::uint64_t seed, int label) {
            const SlideSpec spec;
            const LabeledSlide slide = generate_slide(spec, seed, label);
            long long lesion_px = 0;
            for (auto v : slide.truth.lesion.data) lesion_px += v;
            return py::dict(py::arg("label") = slide.truth.label,
                            py::arg("cells") = slide.truth.cells.points.size(),
                            py::arg("lesion_pixels") = lesion_px,
                            py::arg("patches") = slide.bags[0].grid.patch_count(),
                            py::arg("feature_dim") = slide.bags[0].features.cols());
        },
        py::arg("seed"), py::arg("label"), "quick stats for a default-spec synthetic slide");
}
