#pragma once

// Test-side oracles and fixture generators. The brute-force routines here
// are deliberately independent reimplementations of what the library
// computes with its spatial index; keep them dumb.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <unistd.h>

#include "pccf/point_cloud.hpp"
#include "pccf/rng.hpp"

namespace testsup {

namespace fs = std::filesystem;
using pccf::PointCloud;
using pccf::Vec3;

struct BruteNn {
    std::size_t index = 0;
    double d2 = 0.0;
};

// lowest index wins ties, by scanning in source order with strict less
inline BruteNn nn_brute(const PointCloud& cloud, const Vec3& q) {
    BruteNn best;
    best.d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double dx = q[0] - cloud[i][0];
        const double dy = q[1] - cloud[i][1];
        const double dz = q[2] - cloud[i][2];
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (d2 < best.d2) {
            best.d2 = d2;
            best.index = i;
        }
    }
    return best;
}

inline double cd_l1_brute(const PointCloud& p, const PointCloud& q) {
    double s1 = 0.0;
    for (const Vec3& x : p.points) s1 += std::sqrt(nn_brute(q, x).d2);
    double s2 = 0.0;
    for (const Vec3& x : q.points) s2 += std::sqrt(nn_brute(p, x).d2);
    return 0.5 * (s1 / double(p.size()) + s2 / double(q.size()));
}

inline double cd_l2_brute(const PointCloud& p, const PointCloud& q) {
    double s1 = 0.0;
    for (const Vec3& x : p.points) s1 += nn_brute(q, x).d2;
    double s2 = 0.0;
    for (const Vec3& x : q.points) s2 += nn_brute(p, x).d2;
    return 0.5 * (s1 / double(p.size()) + s2 / double(q.size()));
}

inline double f1_brute(const PointCloud& p, const PointCloud& q, double threshold) {
    std::size_t hp = 0;
    for (const Vec3& x : p.points) hp += std::sqrt(nn_brute(q, x).d2) < threshold;
    std::size_t hq = 0;
    for (const Vec3& x : q.points) hq += std::sqrt(nn_brute(p, x).d2) < threshold;
    const double precision = double(hp) / double(p.size());
    const double recall = double(hq) / double(q.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

inline double fidelity_brute(const PointCloud& input, const PointCloud& output) {
    double s = 0.0;
    for (const Vec3& x : input.points) s += std::sqrt(nn_brute(output, x).d2);
    return s / double(input.size());
}

// random cloud with double coordinates in [-half, half]^3
inline PointCloud random_cloud(std::uint64_t seed, std::size_t n, double half = 1.0) {
    pccf::Rng rng(seed);
    PointCloud c;
    c.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        c.points.push_back({rng.next_sym() * half, rng.next_sym() * half, rng.next_sym() * half});
    return c;
}

// forces a genuine f32 rounding; gcc 11's SLP vectorizer folds away plain
// double->float->double casts at -O3
inline double snap_f32(double v) {
    volatile float f = float(v);
    return double(f);
}

// random cloud whose coordinates are exactly f32-representable (the domain
// of the bit-exact binary round trip)
inline PointCloud random_cloud_f32(std::uint64_t seed, std::size_t n, double half = 1.0) {
    pccf::Rng rng(seed);
    PointCloud c;
    c.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        c.points.push_back({snap_f32(rng.next_sym() * half), snap_f32(rng.next_sym() * half),
                            snap_f32(rng.next_sym() * half)});
    return c;
}

// Uniform samples on the surface of the cube [-0.5, 0.5]^3; when
// remove_octant is set, samples falling strictly inside the (+,+,+) octant
// are rejected. Ensures the 8 cube corners' adjacent area remains so the
// AABB stays the full cube.
inline PointCloud cube_surface(std::uint64_t seed, std::size_t n, bool remove_octant) {
    pccf::Rng rng(seed);
    PointCloud c;
    c.points.reserve(n);
    while (c.points.size() < n) {
        const int face = int(rng.next_below(6));
        const double a = rng.next_sym() * 0.5;
        const double b = rng.next_sym() * 0.5;
        Vec3 p;
        switch (face) {
        case 0: p = {0.5, a, b}; break;
        case 1: p = {-0.5, a, b}; break;
        case 2: p = {a, 0.5, b}; break;
        case 3: p = {a, -0.5, b}; break;
        case 4: p = {a, b, 0.5}; break;
        default: p = {a, b, -0.5}; break;
        }
        if (remove_octant && p[0] > 0.0 && p[1] > 0.0 && p[2] > 0.0) continue;
        c.points.push_back(p);
    }
    return c;
}

// unique scratch directory under the system temp dir, removed on destruction
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        dir_ = fs::temp_directory_path() /
               ("pccf-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }
    const fs::path& path() const { return dir_; }

private:
    fs::path dir_;
};

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

} // namespace testsup
