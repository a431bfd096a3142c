#include <doctest.h>

#include "pccf/kd_tree.hpp"
#include "support.hpp"

using namespace pccf;

TEST_CASE("index over a single point") {
    PointCloud c{{{1, 2, 3}}};
    NnIndex index(c);
    CHECK(index.size() == 1);
    const auto r = index.nearest({1, 2, 3});
    CHECK(r.index == 0);
    CHECK(r.distance == 0.0);
}

TEST_CASE("query at an indexed point returns distance zero") {
    const PointCloud c = testsup::random_cloud(1, 128);
    NnIndex index(c);
    const auto r = index.nearest(c[17]);
    CHECK(r.distance == 0.0);
    CHECK(r.index == 17);
}

TEST_CASE("nearest matches brute force on 1000 random queries") {
    const PointCloud c = testsup::random_cloud(2, 2048);
    NnIndex index(c);
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 q{rng.next_sym() * 1.5, rng.next_sym() * 1.5, rng.next_sym() * 1.5};
        const auto got = index.nearest(q);
        const auto want = testsup::nn_brute(c, q);
        CHECK(got.index == want.index);
        CHECK(index.nearest_sqdist(q) == want.d2);
        CHECK(got.distance == std::sqrt(want.d2));
    }
}

TEST_CASE("queries far outside the bounding box match brute force") {
    const PointCloud c = testsup::random_cloud(4, 512);
    NnIndex index(c);
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const Vec3 q{rng.next_sym() * 100.0, rng.next_sym() * 100.0, 50.0 + rng.next_unit()};
        const auto got = index.nearest(q);
        const auto want = testsup::nn_brute(c, q);
        CHECK(got.index == want.index);
        CHECK(index.nearest_sqdist(q) == want.d2);
    }
}

TEST_CASE("duplicate points: the lowest source index wins") {
    PointCloud c;
    for (int i = 0; i < 10; ++i) c.points.push_back({1, 1, 1});
    c.points.push_back({2, 2, 2});
    NnIndex index(c);
    const auto r = index.nearest({1.1, 1, 1});
    CHECK(r.index == 0);
}

TEST_CASE("symmetric equidistant configuration resolves to the lower index") {
    PointCloud c{{{-1, 0, 0}, {1, 0, 0}}};
    NnIndex index(c);
    const auto r = index.nearest({0, 5, 0});
    CHECK(r.index == 0);

    PointCloud swapped{{{1, 0, 0}, {-1, 0, 0}}};
    NnIndex index2(swapped);
    CHECK(index2.nearest({0, 5, 0}).index == 0);
}

TEST_CASE("tie rule matches brute force on a snapped lattice cloud") {
    // coordinates snapped to a coarse lattice force many exact ties
    Rng rng(6);
    PointCloud c;
    for (int i = 0; i < 600; ++i)
        c.points.push_back({double(rng.next_below(4)) * 0.25, double(rng.next_below(4)) * 0.25,
                            double(rng.next_below(4)) * 0.25});
    NnIndex index(c);
    for (int i = 0; i < 400; ++i) {
        const Vec3 q{double(rng.next_below(8)) * 0.125, double(rng.next_below(8)) * 0.125,
                     double(rng.next_below(8)) * 0.125};
        const auto got = index.nearest(q);
        const auto want = testsup::nn_brute(c, q);
        CHECK(got.index == want.index);
        CHECK(index.nearest_sqdist(q) == want.d2);
    }
}

TEST_CASE("empty cloud is rejected") {
    CHECK_THROWS_AS(NnIndex(PointCloud{}), InvalidArgument);
}
