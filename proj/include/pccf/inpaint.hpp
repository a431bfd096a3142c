#pragma once

#include <cstdint>
#include <vector>

#include "pccf/depth_map.hpp"
#include "pccf/error.hpp"

namespace pccf {

// Diffusion fill. Each pass, every unoccupied pixel with at least one
// occupied 4-neighbor takes the mean of its occupied neighbors and becomes
// occupied; pixels filled this way keep relaxing toward the neighborhood
// mean on later passes, while the originally occupied pixels are never
// touched. Stops once nothing is left to fill and the largest per-pass
// value change drops below epsilon, or after max_iters passes. Updates are
// synchronous (computed from the previous pass), so the result does not
// depend on scan order.
inline DepthMap inpaint_naive(const DepthMap& map, std::uint32_t max_iters, double epsilon) {
    if (map.occupied_count() == 0) throw InvalidArgument("inpaint_naive: empty map");

    DepthMap out = map;
    if (out.fully_occupied()) return out;
    out.origin = MapOrigin::NaiveFill;

    const std::uint32_t h = out.height, w = out.width;
    const std::vector<std::uint8_t> original = map.occupancy;
    std::vector<float> cur = out.depth;
    std::vector<std::uint8_t> occ = out.occupancy;

    for (std::uint32_t iter = 0; iter < max_iters; ++iter) {
        std::vector<float> next = cur;
        std::vector<std::uint8_t> next_occ = occ;
        double max_change = 0.0;
        bool grew = false;
        bool any_hole = false;

        for (std::uint32_t r = 0; r < h; ++r) {
            for (std::uint32_t c = 0; c < w; ++c) {
                const std::size_t i = std::size_t(r) * w + c;
                if (original[i]) continue;
                double sum = 0.0;
                int n = 0;
                if (r > 0 && occ[i - w]) { sum += cur[i - w]; ++n; }
                if (r + 1 < h && occ[i + w]) { sum += cur[i + w]; ++n; }
                if (c > 0 && occ[i - 1]) { sum += cur[i - 1]; ++n; }
                if (c + 1 < w && occ[i + 1]) { sum += cur[i + 1]; ++n; }
                if (n == 0) {
                    if (!occ[i]) any_hole = true;
                    continue;
                }
                const float mean = float(sum / double(n));
                if (!occ[i]) {
                    next[i] = mean;
                    next_occ[i] = 1;
                    grew = true;
                } else {
                    max_change = std::max(max_change, double(std::abs(mean - cur[i])));
                    next[i] = mean;
                }
            }
        }

        cur.swap(next);
        occ.swap(next_occ);
        if (!grew && !any_hole && max_change < epsilon) break;
    }

    out.depth = std::move(cur);
    out.occupancy = std::move(occ);
    return out;
}

} // namespace pccf
