#include "sag/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace sag {

std::string to_string(GuidanceKind kind) {
    return kind == GuidanceKind::TG ? "TG" : "HG";
}

GuidanceKind guidance_kind_from_string(const std::string& s) {
    if (s == "TG" || s == "tg") return GuidanceKind::TG;
    if (s == "HG" || s == "hg") return GuidanceKind::HG;
    throw std::invalid_argument("unknown guidance kind: " + s);
}

OtsuResult otsu_threshold_histogram(const std::vector<long long>& histogram) {
    if (histogram.empty()) throw std::invalid_argument("otsu: empty histogram");
    const int levels = static_cast<int>(histogram.size());
    long long total = 0;
    double total_sum = 0.0;
    for (int v = 0; v < levels; ++v) {
        if (histogram[v] < 0) throw std::invalid_argument("otsu: negative histogram count");
        total += histogram[v];
        total_sum += static_cast<double>(v) * histogram[v];
    }
    if (total == 0) throw std::invalid_argument("otsu: histogram has no pixels");

    // Split {<t} vs {>=t}; between-class variance w0*w1*(mu0-mu1)^2.
    int best_t = 0;
    double best_var = 0.0;
    long long w0 = 0;
    double sum0 = 0.0;
    for (int t = 1; t < levels; ++t) {
        w0 += histogram[t - 1];
        sum0 += static_cast<double>(t - 1) * histogram[t - 1];
        const long long w1 = total - w0;
        if (w0 == 0 || w1 == 0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (total_sum - sum0) / w1;
        const double var = (static_cast<double>(w0) / total) *
                           (static_cast<double>(w1) / total) * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    if (best_var == 0.0) return OtsuResult{0, true};
    return OtsuResult{best_t, false};
}

OtsuResult otsu_threshold(const GrayImage& gray) {
    std::vector<long long> hist(gray.levels, 0);
    for (int v : gray.data) {
        if (v < 0 || v >= gray.levels) throw std::invalid_argument("otsu: pixel out of range");
        ++hist[v];
    }
    return otsu_threshold_histogram(hist);
}

BinaryMask tissue_mask(const GrayImage& image, const PatchGrid& grid,
                       bool tissue_is_darker, bool* degenerate) {
    if (image.height != grid.height() || image.width != grid.width()) {
        std::ostringstream msg;
        msg << "tissue_mask: image is " << image.height << "x" << image.width
            << " but grid expects " << grid.height() << "x" << grid.width();
        throw ShapeError(msg.str());
    }
    const OtsuResult otsu = otsu_threshold(image);
    if (degenerate) *degenerate = otsu.degenerate;
    BinaryMask mask(image.height, image.width, 0);
    if (otsu.degenerate) return mask;
    for (size_t i = 0; i < image.data.size(); ++i) {
        const bool dark = image.data[i] < otsu.threshold;
        mask.data[i] = (dark == tissue_is_darker) ? 1 : 0;
    }
    return mask;
}

namespace {

double sqdist(const Point2d& a, const Point2d& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return dx * dx + dy * dy;
}

}  // namespace

ClusterLabeling dbscan(const PointSet& points, double eps, int min_samples) {
    if (eps <= 0.0) throw std::invalid_argument("dbscan: eps must be positive");
    if (min_samples < 1) throw std::invalid_argument("dbscan: min_samples must be >= 1");
    const int n = static_cast<int>(points.points.size());
    ClusterLabeling out;
    out.labels.assign(n, -1);
    if (n == 0) return out;

    const double eps2 = eps * eps;
    std::vector<std::vector<int>> neighbors(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (sqdist(points.points[i], points.points[j]) <= eps2) neighbors[i].push_back(j);
        }
    }
    std::vector<bool> core(n);
    for (int i = 0; i < n; ++i) core[i] = static_cast<int>(neighbors[i].size()) >= min_samples;

    // Clusters = connected components of core points under eps-reachability,
    // numbered by first core point in scan order.
    int next_cluster = 0;
    for (int i = 0; i < n; ++i) {
        if (!core[i] || out.labels[i] != -1) continue;
        const int cid = next_cluster++;
        std::deque<int> queue{i};
        out.labels[i] = cid;
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop_front();
            for (int v : neighbors[u]) {
                if (core[v] && out.labels[v] == -1) {
                    out.labels[v] = cid;
                    queue.push_back(v);
                }
            }
        }
    }
    // Border points join the cluster of their lowest-indexed core neighbor.
    for (int i = 0; i < n; ++i) {
        if (core[i]) continue;
        for (int j : neighbors[i]) {
            if (core[j]) {
                out.labels[i] = out.labels[j];
                break;
            }
        }
    }
    out.num_clusters = next_cluster;
    return out;
}

namespace {

double cross(const Point2d& o, const Point2d& a, const Point2d& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

ConvexPolygon convex_hull(const PointSet& cluster) {
    std::vector<Point2d> pts = cluster.points;
    std::sort(pts.begin(), pts.end(), [](const Point2d& a, const Point2d& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Point2d& a, const Point2d& b) {
                              return a.x == b.x && a.y == b.y;
                          }),
              pts.end());
    ConvexPolygon poly;
    if (pts.size() <= 2) {
        poly.vertices = pts;
        return poly;
    }
    // Andrew monotone chain; strict turns drop collinear interior points.
    const int n = static_cast<int>(pts.size());
    std::vector<Point2d> hull(2 * n);
    int k = 0;
    for (int i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    const int lower = k + 1;
    for (int i = n - 2; i >= 0; --i) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    if (hull.size() < 3) {
        // All input points collinear: keep the two extremes.
        poly.vertices = {pts.front(), pts.back()};
        return poly;
    }
    poly.vertices = std::move(hull);
    return poly;
}

namespace {

constexpr double kOnBoundaryTol = 1e-9;

bool inside_convex(const ConvexPolygon& poly, double x, double y) {
    const auto& v = poly.vertices;
    const int n = static_cast<int>(v.size());
    for (int i = 0; i < n; ++i) {
        const Point2d& a = v[i];
        const Point2d& b = v[(i + 1) % n];
        // CCW polygon with y-down coordinates still works: consistent sign.
        const double c = (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x);
        if (c < -kOnBoundaryTol) return false;
    }
    return true;
}

double dist_point_segment(double x, double y, const Point2d& a, const Point2d& b) {
    const double vx = b.x - a.x;
    const double vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp(((x - a.x) * vx + (y - a.y) * vy) / len2, 0.0, 1.0);
    const double px = a.x + t * vx;
    const double py = a.y + t * vy;
    return std::hypot(x - px, y - py);
}

}  // namespace

BinaryMask rasterize_hulls(const std::vector<ConvexPolygon>& hulls, const PatchGrid& grid) {
    const int H = grid.height();
    const int W = grid.width();
    BinaryMask mask(H, W, 0);
    for (const auto& hull : hulls) {
        if (hull.vertices.empty()) continue;
        double min_x = hull.vertices[0].x, max_x = min_x;
        double min_y = hull.vertices[0].y, max_y = min_y;
        for (const auto& v : hull.vertices) {
            if (v.x < 0 || v.x > W || v.y < 0 || v.y > H) {
                throw std::out_of_range("rasterize_hulls: hull vertex outside raster bounds");
            }
            min_x = std::min(min_x, v.x);
            max_x = std::max(max_x, v.x);
            min_y = std::min(min_y, v.y);
            max_y = std::max(max_y, v.y);
        }
        const double pad = hull.vertices.size() < 3 ? 1.0 : 0.5;
        const int r0 = std::max(0, static_cast<int>(std::floor(min_y - pad)));
        const int r1 = std::min(H - 1, static_cast<int>(std::ceil(max_y + pad)));
        const int c0 = std::max(0, static_cast<int>(std::floor(min_x - pad)));
        const int c1 = std::min(W - 1, static_cast<int>(std::ceil(max_x + pad)));
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                if (mask.at(r, c)) continue;
                const double x = c + 0.5;
                const double y = r + 0.5;
                bool in;
                if (hull.vertices.size() >= 3) {
                    in = inside_convex(hull, x, y);
                } else if (hull.vertices.size() == 2) {
                    in = dist_point_segment(x, y, hull.vertices[0], hull.vertices[1]) <=
                         0.5 + kOnBoundaryTol;
                } else {
                    in = std::hypot(x - hull.vertices[0].x, y - hull.vertices[0].y) <=
                         0.5 + kOnBoundaryTol;
                }
                if (in) mask.at(r, c) = 1;
            }
        }
    }
    return mask;
}

GuidanceWeights guidance_weights(const MaskAreaRatios& ratios, GuidanceKind kind) {
    GuidanceWeights gw;
    gw.kind = kind;
    gw.weights.assign(ratios.values.size(), 0.0);
    double sum = 0.0;
    for (double v : ratios.values) {
        if (v < 0.0 || !std::isfinite(v)) {
            throw std::invalid_argument("guidance_weights: ratios must be finite and nonnegative");
        }
        sum += v;
    }
    if (sum == 0.0) {
        gw.degenerate = true;
        return gw;
    }
    for (size_t i = 0; i < ratios.values.size(); ++i) gw.weights[i] = ratios.values[i] / sum;
    return gw;
}

GuidanceWeights build_hg(const PointSet& points, const PatchGrid& grid,
                         double eps, int min_samples) {
    const ClusterLabeling labeling = dbscan(points, eps, min_samples);
    std::vector<ConvexPolygon> hulls;
    hulls.reserve(labeling.num_clusters);
    for (int c = 0; c < labeling.num_clusters; ++c) {
        PointSet cluster;
        for (size_t i = 0; i < points.points.size(); ++i) {
            if (labeling.labels[i] == c) cluster.points.push_back(points.points[i]);
        }
        hulls.push_back(convex_hull(cluster));
    }
    const BinaryMask mask = rasterize_hulls(hulls, grid);
    return guidance_weights(patchify(mask, grid), GuidanceKind::HG);
}

GuidanceWeights build_tg(const GrayImage& image, const PatchGrid& grid, bool tissue_is_darker) {
    const BinaryMask mask = tissue_mask(image, grid, tissue_is_darker);
    return guidance_weights(patchify(mask, grid), GuidanceKind::TG);
}

PointSet read_points_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_points_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("read_points_csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "x,y") throw std::runtime_error("read_points_csv: expected header 'x,y' in " + path);
    PointSet ps;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw std::runtime_error("read_points_csv: malformed row in " + path);
        }
        Point2d p;
        p.x = std::stod(line.substr(0, comma));
        p.y = std::stod(line.substr(comma + 1));
        ps.points.push_back(p);
    }
    return ps;
}

void write_points_csv(const std::string& path, const PointSet& points) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_points_csv: cannot open " + path);
    f << "x,y\n";
    f.precision(17);
    for (const auto& p : points.points) f << p.x << "," << p.y << "\n";
}

void write_guidance_json(const std::string& path, const GuidanceWeights& gw,
                         const PatchGrid& grid) {
    nlohmann::json j;
    j["kind"] = to_string(gw.kind);
    j["grid"] = {{"rows", grid.rows}, {"cols", grid.cols}, {"patch_edge", grid.patch_edge}};
    j["weights"] = gw.weights;
    j["degenerate"] = gw.degenerate;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_guidance_json: cannot open " + path);
    f << j.dump(2) << "\n";
}

GuidanceWeights read_guidance_json(const std::string& path, PatchGrid* grid_out) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_guidance_json: cannot open " + path);
    nlohmann::json j;
    f >> j;
    GuidanceWeights gw;
    gw.kind = guidance_kind_from_string(j.at("kind").get<std::string>());
    gw.weights = j.at("weights").get<std::vector<double>>();
    gw.degenerate = j.at("degenerate").get<bool>();
    if (grid_out) {
        *grid_out = PatchGrid(j.at("grid").at("rows").get<int>(),
                              j.at("grid").at("cols").get<int>(),
                              j.at("grid").at("patch_edge").get<int>());
    }
    return gw;
}

}  // namespace sag
