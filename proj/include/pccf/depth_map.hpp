#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "pccf/error.hpp"
#include "pccf/point_cloud.hpp"

namespace pccf {

// The six axis-aligned orthographic views, in the file-format order.
enum class Face : std::uint32_t { PosX = 0, NegX = 1, PosY = 2, NegY = 3, PosZ = 4, NegZ = 5 };

inline constexpr std::array<Face, 6> kAllFaces = {Face::PosX, Face::NegX, Face::PosY,
                                                  Face::NegY, Face::PosZ, Face::NegZ};

inline const char* face_key(Face f) {
    switch (f) {
    case Face::PosX: return "px";
    case Face::NegX: return "nx";
    case Face::PosY: return "py";
    case Face::NegY: return "ny";
    case Face::PosZ: return "pz";
    case Face::NegZ: return "nz";
    }
    throw InvalidArgument("bad face id");
}

inline Face face_from_key(const std::string& key) {
    for (Face f : kAllFaces)
        if (key == face_key(f)) return f;
    throw InvalidArgument("bad face key: " + key);
}

// Fixed orientation table. The viewer sits on the face's side of the cube
// and looks toward the origin; u grows to the viewer's right, v grows
// downward, and depth grows away from the viewer starting at the face's
// near plane. For a point p in [-0.5, 0.5]^3:
//
//   face  u      v      depth
//   +X    +y     -z     0.5 - x
//   -X    -y     -z     0.5 + x
//   +Y    -x     -z     0.5 - y
//   -Y    +x     -z     0.5 + y
//   +Z    +x     -y     0.5 - z
//   -Z    -x     -y     0.5 + z
//
// This table is published in docs/formats.md and is frozen; the
// opposite-face mirror and z-rotation equivariance laws depend on it.
struct FaceFrame {
    // plane coordinates of p on this face
    static double u(Face f, const Vec3& p) {
        switch (f) {
        case Face::PosX: return p[1];
        case Face::NegX: return -p[1];
        case Face::PosY: return -p[0];
        case Face::NegY: return p[0];
        case Face::PosZ: return p[0];
        case Face::NegZ: return -p[0];
        }
        return 0;
    }
    static double v(Face f, const Vec3& p) {
        switch (f) {
        case Face::PosX:
        case Face::NegX:
        case Face::PosY:
        case Face::NegY: return -p[2];
        case Face::PosZ:
        case Face::NegZ: return -p[1];
        }
        return 0;
    }
    static double depth(Face f, const Vec3& p) {
        switch (f) {
        case Face::PosX: return 0.5 - p[0];
        case Face::NegX: return 0.5 + p[0];
        case Face::PosY: return 0.5 - p[1];
        case Face::NegY: return 0.5 + p[1];
        case Face::PosZ: return 0.5 - p[2];
        case Face::NegZ: return 0.5 + p[2];
        }
        return 0;
    }
    // inverse: (u, v, depth) back to a point in the normalized frame
    static Vec3 point(Face f, double u, double v, double depth) {
        switch (f) {
        case Face::PosX: return {0.5 - depth, u, -v};
        case Face::NegX: return {depth - 0.5, -u, -v};
        case Face::PosY: return {-u, 0.5 - depth, -v};
        case Face::NegY: return {u, depth - 0.5, -v};
        case Face::PosZ: return {u, -v, 0.5 - depth};
        case Face::NegZ: return {-u, -v, depth - 0.5};
        }
        return {0, 0, 0};
    }
};

enum class MapOrigin : std::uint8_t { Projected = 0, NaiveFill = 1, ExternalFill = 2 };

// One per-face depth image. Depths are stored as f32 (the on-disk width) so
// that map files round-trip bit-exact; unoccupied cells hold 0.0f and are
// masked by `occupancy`. After per-map normalization depths live in [0, 1]
// and (depth_min, depth_max) retain the raw range for denormalization.
struct DepthMap {
    Face face = Face::PosX;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::vector<float> depth;        // row-major, row 0 = top
    std::vector<std::uint8_t> occupancy;
    float depth_min = 0.0f;
    float depth_max = 0.0f;
    MapOrigin origin = MapOrigin::Projected;

    DepthMap() = default;
    DepthMap(Face f, std::uint32_t h, std::uint32_t w)
        : face(f), height(h), width(w), depth(std::size_t(h) * w, 0.0f), occupancy(std::size_t(h) * w, 0) {}

    std::size_t index(std::uint32_t row, std::uint32_t col) const { return std::size_t(row) * width + col; }
    bool occupied(std::uint32_t row, std::uint32_t col) const { return occupancy[index(row, col)] != 0; }
    float at(std::uint32_t row, std::uint32_t col) const { return depth[index(row, col)]; }

    std::size_t occupied_count() const {
        std::size_t n = 0;
        for (std::uint8_t o : occupancy) n += o != 0;
        return n;
    }
    bool fully_occupied() const { return occupied_count() == depth.size(); }

    bool operator==(const DepthMap& o) const {
        if (face != o.face || height != o.height || width != o.width) return false;
        if (occupancy != o.occupancy) return false;
        if (depth.size() != o.depth.size()) return false;
        for (std::size_t i = 0; i < depth.size(); ++i) {
            // compare representations so -0.0f vs 0.0f or stray NaNs cannot
            // slip through an equality check
            std::uint32_t a, b;
            static_assert(sizeof(float) == 4);
            std::memcpy(&a, &depth[i], 4);
            std::memcpy(&b, &o.depth[i], 4);
            if (a != b) return false;
        }
        return depth_min == o.depth_min && depth_max == o.depth_max;
    }
};

// The six maps of one cloud plus the transform that normalized it.
struct DepthMapSet {
    std::array<DepthMap, 6> maps;
    NormalizeTransform source_transform;

    const DepthMap& map(Face f) const { return maps[std::size_t(f)]; }
    DepthMap& map(Face f) { return maps[std::size_t(f)]; }
};

// 2x2 partition of a map; block b is row-major (0 = top-left).
struct BlockGrid {
    static constexpr int rows = 2;
    static constexpr int cols = 2;
    static constexpr int count = 4;

    static int block_of(std::uint32_t row, std::uint32_t col, std::uint32_t h, std::uint32_t w) {
        return int(row >= h / 2) * 2 + int(col >= w / 2);
    }
};

inline std::array<DepthMap, 4> split_blocks(const DepthMap& map) {
    if (map.height % 2 != 0 || map.width % 2 != 0)
        throw InvalidArgument("split_blocks: odd dimensions");
    const std::uint32_t bh = map.height / 2, bw = map.width / 2;
    std::array<DepthMap, 4> blocks{DepthMap(map.face, bh, bw), DepthMap(map.face, bh, bw),
                                   DepthMap(map.face, bh, bw), DepthMap(map.face, bh, bw)};
    for (auto& b : blocks) {
        b.depth_min = map.depth_min;
        b.depth_max = map.depth_max;
        b.origin = map.origin;
    }
    for (std::uint32_t r = 0; r < map.height; ++r) {
        for (std::uint32_t c = 0; c < map.width; ++c) {
            DepthMap& b = blocks[BlockGrid::block_of(r, c, map.height, map.width)];
            const std::size_t src = map.index(r, c);
            const std::size_t dst = b.index(r % bh, c % bw);
            b.depth[dst] = map.depth[src];
            b.occupancy[dst] = map.occupancy[src];
        }
    }
    return blocks;
}

// Inverse of split_blocks; used by round-trip checks.
inline DepthMap merge_blocks(const std::array<DepthMap, 4>& blocks) {
    const std::uint32_t bh = blocks[0].height, bw = blocks[0].width;
    DepthMap map(blocks[0].face, bh * 2, bw * 2);
    map.depth_min = blocks[0].depth_min;
    map.depth_max = blocks[0].depth_max;
    map.origin = blocks[0].origin;
    for (std::uint32_t r = 0; r < map.height; ++r) {
        for (std::uint32_t c = 0; c < map.width; ++c) {
            const DepthMap& b = blocks[BlockGrid::block_of(r, c, map.height, map.width)];
            const std::size_t src = b.index(r % bh, c % bw);
            const std::size_t dst = map.index(r, c);
            map.depth[dst] = b.depth[src];
            map.occupancy[dst] = b.occupancy[src];
        }
    }
    return map;
}

} // namespace pccf
