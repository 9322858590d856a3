#pragma once

// Independent reference implementations used only by tests. Deliberately
// naive: transitive closures, exhaustive searches, direct dense math.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "sag/guidance.hpp"

namespace sag::oracle {

// DBSCAN by explicit reachability closure. Cluster ids numbered by the
// first core point in scan order; border points take the cluster of their
// lowest-indexed core neighbor.
inline ClusterLabeling dbscan_brute_force(const PointSet& ps, double eps, int min_samples) {
    const int n = static_cast<int>(ps.points.size());
    auto close = [&](int i, int j) {
        const double dx = ps.points[i].x - ps.points[j].x;
        const double dy = ps.points[i].y - ps.points[j].y;
        return dx * dx + dy * dy <= eps * eps;
    };
    std::vector<bool> core(n, false);
    for (int i = 0; i < n; ++i) {
        int cnt = 0;
        for (int j = 0; j < n; ++j) cnt += close(i, j);
        core[i] = cnt >= min_samples;
    }
    // reach[i][j]: core i and core j in the same cluster (Warshall closure).
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) reach[i][j] = core[i] && core[j] && close(i, j);
    }
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (reach[i][k] && reach[k][j]) reach[i][j] = true;
            }
        }
    }
    ClusterLabeling out;
    out.labels.assign(n, -1);
    for (int i = 0; i < n; ++i) {
        if (!core[i] || out.labels[i] != -1) continue;
        const int cid = out.num_clusters++;
        for (int j = 0; j < n; ++j) {
            if (reach[i][j]) out.labels[j] = cid;
        }
        out.labels[i] = cid;
    }
    for (int i = 0; i < n; ++i) {
        if (core[i]) continue;
        for (int j = 0; j < n; ++j) {
            if (core[j] && close(i, j)) {
                out.labels[i] = out.labels[j];
                break;
            }
        }
    }
    return out;
}

// Exhaustive Otsu: recompute both class statistics from scratch per split.
inline OtsuResult otsu_brute_force(const std::vector<long long>& hist) {
    const int levels = static_cast<int>(hist.size());
    int best_t = 0;
    double best_var = 0.0;
    for (int t = 0; t < levels; ++t) {
        double w0 = 0, w1 = 0, s0 = 0, s1 = 0;
        for (int v = 0; v < levels; ++v) {
            if (v < t) {
                w0 += hist[v];
                s0 += static_cast<double>(v) * hist[v];
            } else {
                w1 += hist[v];
                s1 += static_cast<double>(v) * hist[v];
            }
        }
        if (w0 == 0 || w1 == 0) continue;
        const double total = w0 + w1;
        const double var = (w0 / total) * (w1 / total) * std::pow(s0 / w0 - s1 / w1, 2);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return OtsuResult{best_t, best_var == 0.0};
}

// Every point of the set must lie inside-or-on the hull: half-plane test.
inline bool hull_contains_all(const ConvexPolygon& hull, const PointSet& ps, double tol = 1e-9) {
    if (hull.vertices.size() < 3) return true;  // degenerate, checked elsewhere
    const int n = static_cast<int>(hull.vertices.size());
    for (const Point2d& p : ps.points) {
        for (int i = 0; i < n; ++i) {
            const Point2d& a = hull.vertices[i];
            const Point2d& b = hull.vertices[(i + 1) % n];
            const double c = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
            if (c < -tol) return false;
        }
    }
    return true;
}

inline bool hull_is_convex(const ConvexPolygon& hull) {
    const int n = static_cast<int>(hull.vertices.size());
    if (n < 3) return true;
    for (int i = 0; i < n; ++i) {
        const Point2d& a = hull.vertices[i];
        const Point2d& b = hull.vertices[(i + 1) % n];
        const Point2d& c = hull.vertices[(i + 2) % n];
        const double cr = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if (cr <= 0.0) return false;  // strict turns only, no three collinear
    }
    return true;
}

// Dense reference for scaled dot-product attention.
inline void attention_dense(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                            Eigen::MatrixXd& A, Eigen::VectorXd& ma) {
    const int p = static_cast<int>(q.rows());
    const int d = static_cast<int>(q.cols());
    A.resize(p, p);
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
            double dot = 0.0;
            for (int t = 0; t < d; ++t) dot += q(i, t) * k(j, t);
            A(i, j) = dot / std::sqrt(static_cast<double>(d));
        }
    }
    for (int i = 0; i < p; ++i) {
        double mx = A(i, 0);
        for (int j = 1; j < p; ++j) mx = std::max(mx, A(i, j));
        double sum = 0.0;
        for (int j = 0; j < p; ++j) {
            A(i, j) = std::exp(A(i, j) - mx);
            sum += A(i, j);
        }
        for (int j = 0; j < p; ++j) A(i, j) /= sum;
    }
    ma.resize(p);
    for (int j = 0; j < p; ++j) {
        double sum = 0.0;
        for (int i = 0; i < p; ++i) sum += A(i, j);
        ma[j] = sum / p;
    }
}

}  // namespace sag::oracle
