#include <doctest.h>

#include <cmath>

#include "pccf/projection.hpp"
#include "support.hpp"

using namespace pccf;

namespace {

PointCloud normalized_random(std::uint64_t seed, std::size_t n) {
    auto [c, t] = normalize_to_unit(testsup::random_cloud(seed, n, 2.0));
    return c;
}

PointCloud rotate_z90(const PointCloud& c) {
    PointCloud out;
    out.points.reserve(c.size());
    for (const Vec3& p : c.points) out.points.push_back({-p[1], p[0], p[2]});
    return out;
}

bool same_grid(const DepthMap& a, const DepthMap& b) {
    if (a.height != b.height || a.width != b.width) return false;
    if (a.occupancy != b.occupancy) return false;
    for (std::size_t i = 0; i < a.depth.size(); ++i) {
        if (a.occupancy[i] && a.depth[i] != b.depth[i]) return false;
    }
    return a.depth_min == b.depth_min && a.depth_max == b.depth_max;
}

} // namespace

TEST_CASE("single point at origin occupies the center-floor pixel on all faces") {
    PointCloud c{{{0, 0, 0}}};
    const DepthMapSet set = project(c, 4, 4);
    for (Face f : kAllFaces) {
        const DepthMap& m = set.map(f);
        CHECK(m.occupied_count() == 1);
        CHECK(m.occupied(2, 2));
        CHECK(m.at(2, 2) == 0.0f); // single-depth map normalizes to 0
    }
}

TEST_CASE("two antipodal x points: z-buffer on X faces, two pixels on Z faces") {
    PointCloud c{{{-0.5, 0, 0}, {0.5, 0, 0}}};
    const DepthMapSet set = project(c, 4, 4);

    // both points share the pixel on the X views; the nearer one wins
    const DepthMap& px = set.map(Face::PosX);
    CHECK(px.occupied_count() == 1);
    CHECK(px.at(2, 2) == 0.0f);
    CHECK(px.depth_min == 0.0f); // raw depth of the x=+0.5 point

    // on +Z both project, boundary +0.5 clamps to the last column
    const DepthMap& pz = set.map(Face::PosZ);
    CHECK(pz.occupied_count() == 2);
    CHECK(pz.occupied(2, 0));
    CHECK(pz.occupied(2, 3));
}

TEST_CASE("project rejects odd resolutions and non-normalized input") {
    PointCloud c{{{0, 0, 0}}};
    CHECK_THROWS_AS(project(c, 223, 224), InvalidArgument);
    CHECK_THROWS_AS(project(c, 224, 223), InvalidArgument);
    PointCloud big{{{0, 0, 2.0}}};
    CHECK_THROWS_AS(project(big, 4, 4), InvalidArgument);
}

TEST_CASE("z-buffer law: stored depth never exceeds any point's own depth") {
    const PointCloud c = normalized_random(42, 2048);
    const DepthMapSet set = project(c, 224, 224);
    for (Face f : kAllFaces) {
        const DepthMap& m = set.map(f);
        const float range = m.depth_max - m.depth_min;
        for (const Vec3& p : c.points) {
            const std::uint32_t col = detail::to_pixel(FaceFrame::u(f, p), m.width);
            const std::uint32_t row = detail::to_pixel(FaceFrame::v(f, p), m.height);
            REQUIRE(m.occupied(row, col));
            // renormalize the point's own f32 raw depth exactly like project()
            const float raw = float(FaceFrame::depth(f, p));
            const float norm = range > 0.0f ? (raw - m.depth_min) / range : 0.0f;
            CHECK(m.at(row, col) <= norm);
        }
    }
}

TEST_CASE("normalization law: occupied depths span exactly [0, 1]") {
    for (std::uint64_t seed : {1ull, 9ull, 77ull}) {
        const PointCloud c = normalized_random(seed, 512);
        const DepthMapSet set = project(c, 32, 32);
        for (Face f : kAllFaces) {
            const DepthMap& m = set.map(f);
            float lo = 2.0f, hi = -1.0f;
            bool multi = false;
            float first = -1.0f;
            for (std::size_t i = 0; i < m.depth.size(); ++i) {
                if (!m.occupancy[i]) continue;
                if (first < 0.0f) first = m.depth[i];
                multi = multi || m.depth[i] != first;
                lo = std::min(lo, m.depth[i]);
                hi = std::max(hi, m.depth[i]);
            }
            if (multi) {
                CHECK(lo == 0.0f);
                CHECK(hi == 1.0f);
            }
        }
    }
}

TEST_CASE("rotating the cloud +90 degrees about z maps the +X map onto the +Y map") {
    const PointCloud c = normalized_random(7, 300);
    const DepthMapSet orig = project(c, 64, 64);
    const DepthMapSet rot = project(rotate_z90(c), 64, 64);
    CHECK(same_grid(orig.map(Face::PosX), rot.map(Face::PosY)));
    CHECK(same_grid(orig.map(Face::NegX), rot.map(Face::NegY)));
    CHECK(same_grid(orig.map(Face::PosZ), rot.map(Face::PosZ)) == false); // rotated in-plane
}

TEST_CASE("opposite faces share the silhouette mirrored in u") {
    const PointCloud c = normalized_random(13, 700);
    const DepthMapSet set = project(c, 48, 48);
    const std::pair<Face, Face> pairs[3] = {{Face::PosX, Face::NegX},
                                            {Face::PosY, Face::NegY},
                                            {Face::PosZ, Face::NegZ}};
    for (const auto& [fa, fb] : pairs) {
        const DepthMap& a = set.map(fa);
        const DepthMap& b = set.map(fb);
        for (std::uint32_t r = 0; r < a.height; ++r)
            for (std::uint32_t col = 0; col < a.width; ++col)
                CHECK(a.occupied(r, col) == b.occupied(r, a.width - 1 - col));
    }
}

TEST_CASE("unproject: single point comes back within half a pixel") {
    PointCloud c{{{0.125, -0.25, 0.0625}}};
    const DepthMapSet set = project(c, 16, 16);
    const PointCloud back = unproject(set.map(Face::PosX));
    REQUIRE(back.size() == 1);
    const double du = FaceFrame::u(Face::PosX, back[0]) - FaceFrame::u(Face::PosX, c[0]);
    const double dv = FaceFrame::v(Face::PosX, back[0]) - FaceFrame::v(Face::PosX, c[0]);
    CHECK(std::abs(du) <= 0.5 / 16 + 1e-9);
    CHECK(std::abs(dv) <= 0.5 / 16 + 1e-9);
    CHECK(std::abs(FaceFrame::depth(Face::PosX, back[0]) - FaceFrame::depth(Face::PosX, c[0])) < 1e-6);
}

TEST_CASE("unproject rejects an empty map") {
    DepthMap empty(Face::PosX, 4, 4);
    CHECK_THROWS_AS(unproject(empty), InvalidArgument);
}

TEST_CASE("unproject: every emitted point sits within half a pixel of a source point") {
    const PointCloud c = normalized_random(99, 100);
    const DepthMapSet set = project(c, 32, 32);
    for (Face f : kAllFaces) {
        const PointCloud back = unproject(set.map(f));
        for (const Vec3& e : back.points) {
            bool found = false;
            for (const Vec3& p : c.points) {
                const double du = std::abs(FaceFrame::u(f, e) - FaceFrame::u(f, p));
                const double dv = std::abs(FaceFrame::v(f, e) - FaceFrame::v(f, p));
                const double dd = std::abs(FaceFrame::depth(f, e) - FaceFrame::depth(f, p));
                if (du <= 0.5 / 32 + 1e-9 && dv <= 0.5 / 32 + 1e-9 && dd <= 1e-5) {
                    found = true;
                    break;
                }
            }
            CHECK(found);
        }
    }
}

TEST_CASE("unproject maps back through the source transform") {
    const PointCloud raw = testsup::random_cloud(55, 60, 3.0);
    auto [c, t] = normalize_to_unit(raw);
    const DepthMapSet set = project(c, 32, 32, t);
    const PointCloud back = unproject(set.map(Face::PosZ), set.source_transform);
    // half a pixel in the normalized frame scales by 1/scale in model units
    const double tol = (0.5 / 32 + 1e-9) / t.scale;
    for (const Vec3& e : back.points) {
        double best = 1e30;
        for (const Vec3& p : raw.points) best = std::min(best, squared_dist(e, p));
        CHECK(std::sqrt(best) <= std::sqrt(2 * tol * tol + 1e-8));
    }
}

TEST_CASE("split_blocks: 4x4 map with one occupied pixel") {
    DepthMap m(Face::PosY, 4, 4);
    m.depth[m.index(0, 0)] = 0.5f;
    m.occupancy[m.index(0, 0)] = 1;
    const auto blocks = split_blocks(m);
    CHECK(blocks[0].occupied_count() == 1);
    CHECK(blocks[0].occupied(0, 0));
    CHECK(blocks[1].occupied_count() == 0);
    CHECK(blocks[2].occupied_count() == 0);
    CHECK(blocks[3].occupied_count() == 0);
}

TEST_CASE("split_blocks partition identity and occupancy accounting") {
    const PointCloud c = normalized_random(31, 400);
    const DepthMapSet set = project(c, 224, 224);
    const DepthMap& m = set.map(Face::PosX);
    const auto blocks = split_blocks(m);

    std::size_t total = 0;
    std::array<std::size_t, 4> expected{0, 0, 0, 0};
    for (std::uint32_t r = 0; r < m.height; ++r)
        for (std::uint32_t col = 0; col < m.width; ++col)
            if (m.occupied(r, col)) expected[std::size_t(BlockGrid::block_of(r, col, m.height, m.width))]++;
    for (int b = 0; b < 4; ++b) {
        CHECK(blocks[std::size_t(b)].occupied_count() == expected[std::size_t(b)]);
        total += blocks[std::size_t(b)].occupied_count();
    }
    CHECK(total == m.occupied_count());
    CHECK(merge_blocks(blocks) == m);
}

TEST_CASE("split_blocks rejects odd dimensions") {
    DepthMap m(Face::PosX, 3, 4);
    CHECK_THROWS_AS(split_blocks(m), InvalidArgument);
}
