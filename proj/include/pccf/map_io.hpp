#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "pccf/depth_map.hpp"
#include "pccf/error.hpp"

namespace pccf {

enum class MapFormat { RawF32leMap, Pgm16 };

inline MapFormat map_format_for_path(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".pdm") return MapFormat::RawF32leMap;
    if (ext == ".pgm") return MapFormat::Pgm16;
    throw InvalidArgument("cannot infer map format from extension: " + path.string());
}

namespace detail {

inline constexpr char kPdmMagic[4] = {'P', 'D', 'M', '1'};
// canonical quiet-NaN pattern for unoccupied cells, so files are
// byte-reproducible
inline constexpr std::uint32_t kUnoccupiedBits = 0x7fc00000u;

inline void write_u32(std::ostream& out, std::uint32_t v) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = std::uint8_t((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& name) {
    std::uint8_t b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(name + ": truncated header");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline void write_f32(std::ostream& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(out, bits);
}

inline float read_f32(std::istream& in, const std::string& name) {
    const std::uint32_t bits = read_u32(in, name);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

} // namespace detail

inline void save_map(const DepthMap& map, const std::filesystem::path& path, MapFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());

    if (format == MapFormat::RawF32leMap) {
        out.write(detail::kPdmMagic, 4);
        detail::write_u32(out, std::uint32_t(map.face));
        detail::write_u32(out, map.height);
        detail::write_u32(out, map.width);
        detail::write_f32(out, map.depth_min);
        detail::write_f32(out, map.depth_max);
        for (std::size_t i = 0; i < map.depth.size(); ++i) {
            if (map.occupancy[i]) {
                detail::write_f32(out, map.depth[i]);
            } else {
                detail::write_u32(out, detail::kUnoccupiedBits);
            }
        }
    } else {
        // P5, maxval 65535, big-endian samples; occupied depth d encodes as
        // 1 + round(d * 65534) so value 0 is unambiguously "unoccupied"
        out << "P5\n" << map.width << " " << map.height << "\n65535\n";
        for (std::size_t i = 0; i < map.depth.size(); ++i) {
            std::uint32_t v = 0;
            if (map.occupancy[i]) {
                long q = std::lround(double(map.depth[i]) * 65534.0);
                if (q < 0) q = 0;
                if (q > 65534) q = 65534;
                v = std::uint32_t(q) + 1;
            }
            const std::uint8_t b[2] = {std::uint8_t(v >> 8), std::uint8_t(v & 0xff)};
            out.write(reinterpret_cast<const char*>(b), 2);
        }
    }
    if (!out) throw Error("write failed: " + path.string());
}

inline void save_map(const DepthMap& map, const std::filesystem::path& path) {
    save_map(map, path, map_format_for_path(path));
}

inline DepthMap load_map(const std::filesystem::path& path, MapFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    const std::string name = path.string();

    if (format == MapFormat::RawF32leMap) {
        char magic[4];
        if (!in.read(magic, 4) || std::memcmp(magic, detail::kPdmMagic, 4) != 0)
            throw Error(name + ": bad magic (expected PDM1)");
        const std::uint32_t face = detail::read_u32(in, name);
        if (face > 5) throw Error(name + ": bad face id " + std::to_string(face));
        const std::uint32_t h = detail::read_u32(in, name);
        const std::uint32_t w = detail::read_u32(in, name);
        if (h == 0 || w == 0) throw Error(name + ": zero resolution");
        DepthMap map(Face(face), h, w);
        map.depth_min = detail::read_f32(in, name);
        map.depth_max = detail::read_f32(in, name);
        for (std::size_t i = 0; i < map.depth.size(); ++i) {
            const float d = detail::read_f32(in, name);
            if (std::isnan(d)) {
                map.depth[i] = 0.0f;
                map.occupancy[i] = 0;
            } else {
                if (d < 0.0f || d > 1.0f)
                    throw Error(name + ": depth out of [0,1] at cell " + std::to_string(i));
                map.depth[i] = d;
                map.occupancy[i] = 1;
            }
        }
        return map;
    }

    std::string magic;
    in >> magic;
    if (magic != "P5") throw Error(name + ": not a P5 pgm");
    std::uint32_t w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    if (!in || w == 0 || h == 0) throw Error(name + ": bad pgm header");
    if (maxval != 65535) throw Error(name + ": pgm maxval must be 65535");
    in.get(); // single whitespace after maxval
    DepthMap map(Face::PosX, h, w);
    map.depth_min = 0.0f;
    map.depth_max = 1.0f;
    for (std::size_t i = 0; i < map.depth.size(); ++i) {
        std::uint8_t b[2];
        if (!in.read(reinterpret_cast<char*>(b), 2)) throw Error(name + ": truncated pgm data");
        const std::uint32_t v = (std::uint32_t(b[0]) << 8) | b[1];
        if (v == 0) {
            map.occupancy[i] = 0;
        } else {
            map.occupancy[i] = 1;
            map.depth[i] = float(double(v - 1) / 65534.0);
        }
    }
    return map;
}

inline DepthMap load_map(const std::filesystem::path& path) {
    return load_map(path, map_format_for_path(path));
}

// Loads an externally produced (fully occupied) map, e.g. a learned
// inpainting, and checks it against the expected corpus resolution.
inline DepthMap load_inpainted(const std::filesystem::path& path, std::uint32_t expect_h, std::uint32_t expect_w) {
    DepthMap map = load_map(path);
    if (map.height != expect_h || map.width != expect_w)
        throw Error(path.string() + ": resolution " + std::to_string(map.height) + "x" +
                    std::to_string(map.width) + " does not match expected " + std::to_string(expect_h) +
                    "x" + std::to_string(expect_w));
    if (!map.fully_occupied())
        throw Error(path.string() + ": inpainted map must be fully occupied");
    map.origin = MapOrigin::ExternalFill;
    return map;
}

} // namespace pccf
