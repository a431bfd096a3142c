#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "pccf/error.hpp"
#include "pccf/rng.hpp"

namespace pccf {

using Vec3 = std::array<double, 3>;

inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator*(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

inline double squared_dist(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

inline bool is_finite(const Vec3& p) {
    return std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]);
}

// Ordered, finite 3D points in model units. Immutable by convention once
// built; every operation below returns a new cloud.
struct PointCloud {
    std::vector<Vec3> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    const Vec3& operator[](std::size_t i) const { return points[i]; }

    bool operator==(const PointCloud& o) const { return points == o.points; }
};

struct Aabb {
    Vec3 min{0, 0, 0};
    Vec3 max{0, 0, 0};

    Vec3 center() const { return {(min[0] + max[0]) / 2.0, (min[1] + max[1]) / 2.0, (min[2] + max[2]) / 2.0}; }
    Vec3 extent() const { return {max[0] - min[0], max[1] - min[1], max[2] - min[2]}; }
    double longest_side() const {
        const Vec3 e = extent();
        return std::max(e[0], std::max(e[1], e[2]));
    }
};

inline Aabb aabb(const PointCloud& cloud) {
    if (cloud.empty()) throw InvalidArgument("aabb: empty cloud");
    Aabb box{cloud[0], cloud[0]};
    for (const Vec3& p : cloud.points) {
        for (int d = 0; d < 3; ++d) {
            box.min[d] = std::min(box.min[d], p[d]);
            box.max[d] = std::max(box.max[d], p[d]);
        }
    }
    return box;
}

// Uniform scale about a center: apply(p) = (p - center) * scale.
struct NormalizeTransform {
    Vec3 center{0, 0, 0};
    double scale = 1.0;

    Vec3 apply(const Vec3& p) const { return (p - center) * scale; }
    Vec3 invert(const Vec3& q) const { return {q[0] / scale + center[0], q[1] / scale + center[1], q[2] / scale + center[2]}; }

    PointCloud apply(const PointCloud& c) const {
        PointCloud out;
        out.points.reserve(c.size());
        for (const Vec3& p : c.points) out.points.push_back(apply(p));
        return out;
    }
    PointCloud invert(const PointCloud& c) const {
        PointCloud out;
        out.points.reserve(c.size());
        for (const Vec3& p : c.points) out.points.push_back(invert(p));
        return out;
    }
};

// Centers the cloud on its AABB center and scales uniformly so the longest
// AABB side becomes 1; the result fits in [-0.5, 0.5]^3. Degenerate clouds
// (zero extent) are rejected.
inline std::pair<PointCloud, NormalizeTransform> normalize_to_unit(const PointCloud& cloud) {
    const Aabb box = aabb(cloud);
    const double side = box.longest_side();
    if (!(side > 0.0)) throw InvalidArgument("normalize_to_unit: degenerate cloud (zero extent)");
    NormalizeTransform t{box.center(), 1.0 / side};
    return {t.apply(cloud), t};
}

// Seeded subset of exactly n points. |cloud| >= n: the first n entries of a
// Fisher-Yates permutation (n distinct points); |cloud| < n: the original
// points followed by seeded resampling with replacement up to n.
inline PointCloud downsample_random(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("downsample_random: n must be >= 1");
    if (cloud.empty()) throw InvalidArgument("downsample_random: empty cloud");

    Rng rng(seed);
    PointCloud out;
    out.points.reserve(n);
    const std::size_t N = cloud.size();
    if (N >= n) {
        std::vector<std::uint32_t> idx(N);
        std::iota(idx.begin(), idx.end(), 0u);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = i + std::size_t(rng.next_below(N - i));
            std::swap(idx[i], idx[j]);
            out.points.push_back(cloud[idx[i]]);
        }
    } else {
        out.points = cloud.points;
        for (std::size_t i = N; i < n; ++i) out.points.push_back(cloud[rng.next_below(N)]);
    }
    return out;
}

// Greedy farthest-point subset. The first pick is the lowest-index point
// among those farthest from the centroid; each later pick is the lowest-index
// point maximizing the distance to the selected set.
inline PointCloud farthest_point_sample(const PointCloud& cloud, std::size_t n) {
    const std::size_t N = cloud.size();
    if (n < 1 || n > N) throw InvalidArgument("farthest_point_sample: n out of range");

    Vec3 centroid{0, 0, 0};
    for (const Vec3& p : cloud.points) centroid = centroid + p;
    centroid = centroid * (1.0 / double(N));

    std::size_t first = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double d = squared_dist(cloud[i], centroid);
        if (d > best) {
            best = d;
            first = i;
        }
    }

    std::vector<double> min_d(N, std::numeric_limits<double>::infinity());
    std::vector<char> taken(N, 0);
    PointCloud out;
    out.points.reserve(n);
    std::size_t cur = first;
    for (std::size_t k = 0; k < n; ++k) {
        out.points.push_back(cloud[cur]);
        taken[cur] = 1;
        if (k + 1 == n) break;
        std::size_t next = N;
        double far = -1.0;
        for (std::size_t i = 0; i < N; ++i) {
            min_d[i] = std::min(min_d[i], squared_dist(cloud[i], cloud[cur]));
            if (!taken[i] && min_d[i] > far) {
                far = min_d[i];
                next = i;
            }
        }
        cur = next;
    }
    return out;
}

} // namespace pccf
