#pragma once

#include <cmath>
#include <cstdint>

#include "pccf/depth_map.hpp"
#include "pccf/error.hpp"
#include "pccf/point_cloud.hpp"

namespace pccf {

namespace detail {

// floor((t + 0.5) * n) clamped into [0, n-1]; +0.5 on the boundary lands on
// the last pixel instead of overflowing.
inline std::uint32_t to_pixel(double t, std::uint32_t n) {
    const double s = (t + 0.5) * double(n);
    long idx = long(std::floor(s));
    if (idx < 0) idx = 0;
    if (idx >= long(n)) idx = long(n) - 1;
    return std::uint32_t(idx);
}

} // namespace detail

// Six-face orthographic z-buffer projection of a normalized cloud. Per face,
// each point lands on floor((u+0.5)W), floor((v+0.5)H) and the pixel keeps
// the minimum depth (surface nearest the viewer). Depths are then min-max
// normalized per map over occupied pixels; a map with a single distinct
// depth normalizes to 0.
inline DepthMapSet project(const PointCloud& cloud, std::uint32_t height, std::uint32_t width,
                           const NormalizeTransform& source = NormalizeTransform{}) {
    if (cloud.empty()) throw InvalidArgument("project: empty cloud");
    if (height < 2 || width < 2 || height % 2 != 0 || width % 2 != 0)
        throw InvalidArgument("project: resolution must be even and >= 2");
    constexpr double kBound = 0.5 + 1e-9;
    for (const Vec3& p : cloud.points)
        if (std::abs(p[0]) > kBound || std::abs(p[1]) > kBound || std::abs(p[2]) > kBound)
            throw InvalidArgument("project: cloud is not normalized to [-0.5, 0.5]^3");

    DepthMapSet set;
    set.source_transform = source;
    for (Face f : kAllFaces) {
        DepthMap& map = set.map(f);
        map = DepthMap(f, height, width);
        for (const Vec3& p : cloud.points) {
            const std::uint32_t col = detail::to_pixel(FaceFrame::u(f, p), width);
            const std::uint32_t row = detail::to_pixel(FaceFrame::v(f, p), height);
            const float d = float(FaceFrame::depth(f, p));
            const std::size_t i = map.index(row, col);
            if (!map.occupancy[i] || d < map.depth[i]) {
                map.depth[i] = d;
                map.occupancy[i] = 1;
            }
        }

        float dmin = 0.0f, dmax = 0.0f;
        bool first = true;
        for (std::size_t i = 0; i < map.depth.size(); ++i) {
            if (!map.occupancy[i]) continue;
            if (first) {
                dmin = dmax = map.depth[i];
                first = false;
            } else {
                dmin = std::min(dmin, map.depth[i]);
                dmax = std::max(dmax, map.depth[i]);
            }
        }
        map.depth_min = dmin;
        map.depth_max = dmax;
        if (dmax > dmin) {
            const float range = dmax - dmin;
            for (std::size_t i = 0; i < map.depth.size(); ++i)
                if (map.occupancy[i]) map.depth[i] = (map.depth[i] - dmin) / range;
        } else {
            for (std::size_t i = 0; i < map.depth.size(); ++i)
                if (map.occupancy[i]) map.depth[i] = 0.0f;
        }
    }
    return set;
}

// One point per occupied pixel, at the pixel center and the denormalized
// depth, mapped back through `transform` into the source frame. Scanned
// row-major, so output order is deterministic.
inline PointCloud unproject(const DepthMap& map, const NormalizeTransform& transform = NormalizeTransform{}) {
    if (map.occupied_count() == 0) throw InvalidArgument("unproject: fully empty map");
    PointCloud out;
    out.points.reserve(map.occupied_count());
    const double range = double(map.depth_max) - double(map.depth_min);
    for (std::uint32_t r = 0; r < map.height; ++r) {
        for (std::uint32_t c = 0; c < map.width; ++c) {
            if (!map.occupied(r, c)) continue;
            const double u = (double(c) + 0.5) / double(map.width) - 0.5;
            const double v = (double(r) + 0.5) / double(map.height) - 0.5;
            const double raw = double(map.at(r, c)) * range + double(map.depth_min);
            out.points.push_back(transform.invert(FaceFrame::point(map.face, u, v, raw)));
        }
    }
    return out;
}

} // namespace pccf
