#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "pccf/error.hpp"
#include "pccf/point_cloud.hpp"

namespace pccf {

// Exact nearest-neighbor index over a point cloud. Balanced k-d tree:
// median split on the widest axis of the node's bounding box, coordinate
// ties resolved by source index, so construction is fully deterministic.
// Queries return exactly what a brute-force scan in source order would:
// the minimal distance, lowest source index among equals.
class NnIndex {
public:
    struct Result {
        std::size_t index;
        double distance;
    };

    explicit NnIndex(const PointCloud& cloud) : points_(cloud.points) {
        if (points_.empty()) throw InvalidArgument("NnIndex: empty cloud");
        perm_.resize(points_.size());
        std::iota(perm_.begin(), perm_.end(), std::uint32_t(0));
        nodes_.reserve(2 * points_.size() / kLeafSize + 8);
        root_ = build(0, std::uint32_t(points_.size()));
    }

    std::size_t size() const { return points_.size(); }

    Result nearest(const Vec3& q) const {
        Best best;
        search(root_, q, best);
        return {best.index, std::sqrt(best.d2)};
    }

    double nearest_sqdist(const Vec3& q) const {
        Best best;
        search(root_, q, best);
        return best.d2;
    }

private:
    static constexpr std::uint32_t kLeafSize = 16;

    struct Node {
        // leaf: [lo, hi) into perm_; inner: split axis/value + children
        std::uint32_t lo = 0, hi = 0;
        std::int32_t left = -1, right = -1;
        int axis = -1; // -1 marks a leaf
        double split = 0.0;
    };

    struct Best {
        double d2 = std::numeric_limits<double>::infinity();
        std::size_t index = 0;
    };

    std::int32_t build(std::uint32_t lo, std::uint32_t hi) {
        Node node;
        node.lo = lo;
        node.hi = hi;
        if (hi - lo <= kLeafSize) {
            nodes_.push_back(node);
            return std::int32_t(nodes_.size() - 1);
        }

        Vec3 mn = points_[perm_[lo]], mx = points_[perm_[lo]];
        for (std::uint32_t i = lo + 1; i < hi; ++i) {
            const Vec3& p = points_[perm_[i]];
            for (int d = 0; d < 3; ++d) {
                mn[d] = std::min(mn[d], p[d]);
                mx[d] = std::max(mx[d], p[d]);
            }
        }
        int axis = 0;
        double span = mx[0] - mn[0];
        for (int d = 1; d < 3; ++d) {
            if (mx[d] - mn[d] > span) { // strict: ties keep the lower axis
                span = mx[d] - mn[d];
                axis = d;
            }
        }

        const std::uint32_t mid = lo + (hi - lo) / 2;
        std::nth_element(perm_.begin() + lo, perm_.begin() + mid, perm_.begin() + hi,
                         [&](std::uint32_t a, std::uint32_t b) {
                             const double ca = points_[a][axis], cb = points_[b][axis];
                             if (ca != cb) return ca < cb;
                             return a < b;
                         });
        node.axis = axis;
        node.split = points_[perm_[mid]][axis];

        const std::size_t self = nodes_.size();
        nodes_.push_back(node);
        const std::int32_t l = build(lo, mid);
        const std::int32_t r = build(mid, hi);
        nodes_[self].left = l;
        nodes_[self].right = r;
        return std::int32_t(self);
    }

    void search(std::int32_t ni, const Vec3& q, Best& best) const {
        const Node& node = nodes_[std::size_t(ni)];
        if (node.axis < 0) {
            for (std::uint32_t i = node.lo; i < node.hi; ++i) {
                const std::uint32_t idx = perm_[i];
                const Vec3& p = points_[idx];
                const double dx = q[0] - p[0];
                const double dy = q[1] - p[1];
                const double dz = q[2] - p[2];
                const double d2 = dx * dx + dy * dy + dz * dz;
                if (d2 < best.d2 || (d2 == best.d2 && idx < best.index)) {
                    best.d2 = d2;
                    best.index = idx;
                }
            }
            return;
        }
        const double diff = q[node.axis] - node.split;
        const std::int32_t near = diff < 0.0 ? node.left : node.right;
        const std::int32_t far = diff < 0.0 ? node.right : node.left;
        search(near, q, best);
        // '<=' so equidistant candidates across the plane are still visited
        // and the lowest-index tie rule stays exact
        if (diff * diff <= best.d2) search(far, q, best);
    }

    std::vector<Vec3> points_;
    std::vector<std::uint32_t> perm_;
    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
};

} // namespace pccf
