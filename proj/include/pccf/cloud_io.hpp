#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pccf/error.hpp"
#include "pccf/point_cloud.hpp"

namespace pccf {

enum class CloudFormat { XyzText, PlyAsciiSubset, RawF32le };

inline CloudFormat cloud_format_from_name(const std::string& name) {
    if (name == "xyz") return CloudFormat::XyzText;
    if (name == "ply") return CloudFormat::PlyAsciiSubset;
    if (name == "pcf" || name == "raw") return CloudFormat::RawF32le;
    throw InvalidArgument("unknown cloud format: " + name);
}

// Guess from the extension; .pcf is the binary format.
inline CloudFormat cloud_format_for_path(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".xyz" || ext == ".txt") return CloudFormat::XyzText;
    if (ext == ".ply") return CloudFormat::PlyAsciiSubset;
    if (ext == ".pcf" || ext == ".bin") return CloudFormat::RawF32le;
    throw InvalidArgument("cannot infer cloud format from extension: " + path.string());
}

namespace detail {

inline constexpr char kPcfMagic[4] = {'P', 'C', 'F', '1'};

inline void require_finite(const Vec3& p, const std::string& where) {
    if (!is_finite(p)) throw Error(where + ": non-finite coordinate");
}

inline PointCloud load_xyz_text(std::istream& in, const std::string& name) {
    PointCloud cloud;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ls(line);
        Vec3 p;
        if (!(ls >> p[0] >> p[1] >> p[2]))
            throw Error(name + ": line " + std::to_string(line_no) + ": expected 3 coordinates");
        std::string extra;
        if (ls >> extra)
            throw Error(name + ": line " + std::to_string(line_no) + ": trailing token '" + extra + "'");
        require_finite(p, name + ": line " + std::to_string(line_no));
        cloud.points.push_back(p);
    }
    return cloud;
}

inline PointCloud load_ply_ascii(std::istream& in, const std::string& name) {
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> std::string {
        if (!std::getline(in, line)) throw Error(name + ": truncated ply header");
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    if (next_line() != "ply") throw Error(name + ": missing 'ply' magic");
    if (next_line() != "format ascii 1.0") throw Error(name + ": only 'format ascii 1.0' is supported");

    std::size_t vertex_count = 0;
    bool have_vertex = false;
    int property_count = 0;
    const char* expected_props[3] = {"x", "y", "z"};
    for (;;) {
        const std::string l = next_line();
        std::istringstream ls(l);
        std::string kw;
        ls >> kw;
        if (kw == "comment") continue;
        if (kw == "element") {
            std::string elem;
            ls >> elem;
            if (elem != "vertex") throw Error(name + ": line " + std::to_string(line_no) + ": unsupported element '" + elem + "'");
            if (have_vertex) throw Error(name + ": duplicate vertex element");
            if (!(ls >> vertex_count)) throw Error(name + ": bad vertex count");
            have_vertex = true;
            continue;
        }
        if (kw == "property") {
            std::string type, pname;
            if (!(ls >> type >> pname)) throw Error(name + ": line " + std::to_string(line_no) + ": bad property");
            if (!have_vertex) throw Error(name + ": property before vertex element");
            if (type != "float" && type != "float32" && type != "double")
                throw Error(name + ": unsupported property type '" + type + "'");
            if (property_count >= 3 || pname != expected_props[property_count])
                throw Error(name + ": expected properties x, y, z in order");
            ++property_count;
            continue;
        }
        if (kw == "end_header") break;
        throw Error(name + ": line " + std::to_string(line_no) + ": unsupported header line '" + l + "'");
    }
    if (!have_vertex || property_count != 3) throw Error(name + ": header lacks vertex x/y/z properties");

    PointCloud cloud;
    cloud.points.reserve(vertex_count);
    for (std::size_t i = 0; i < vertex_count; ++i) {
        if (!std::getline(in, line)) throw Error(name + ": truncated vertex data at row " + std::to_string(i));
        ++line_no;
        std::istringstream ls(line);
        Vec3 p;
        if (!(ls >> p[0] >> p[1] >> p[2]))
            throw Error(name + ": line " + std::to_string(line_no) + ": expected 3 coordinates");
        require_finite(p, name + ": line " + std::to_string(line_no));
        cloud.points.push_back(p);
    }
    return cloud;
}

inline PointCloud load_raw_f32le(std::istream& in, const std::string& name) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kPcfMagic, 4) != 0)
        throw Error(name + ": bad magic (expected PCF1) at byte 0");
    std::uint8_t cnt[8];
    if (!in.read(reinterpret_cast<char*>(cnt), 8)) throw Error(name + ": truncated header at byte 4");
    std::uint64_t n = 0;
    for (int i = 7; i >= 0; --i) n = (n << 8) | cnt[i];

    PointCloud cloud;
    cloud.points.reserve(n);
    std::vector<float> buf(3);
    for (std::uint64_t i = 0; i < n; ++i) {
        if (!in.read(reinterpret_cast<char*>(buf.data()), 12))
            throw Error(name + ": truncated point data at byte " + std::to_string(12 + i * 12));
        Vec3 p{double(buf[0]), double(buf[1]), double(buf[2])};
        require_finite(p, name + ": point " + std::to_string(i));
        cloud.points.push_back(p);
    }
    return cloud;
}

} // namespace detail

inline PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    PointCloud cloud;
    switch (format) {
    case CloudFormat::XyzText: cloud = detail::load_xyz_text(in, path.string()); break;
    case CloudFormat::PlyAsciiSubset: cloud = detail::load_ply_ascii(in, path.string()); break;
    case CloudFormat::RawF32le: cloud = detail::load_raw_f32le(in, path.string()); break;
    }
    if (cloud.empty()) throw Error(path.string() + ": zero points");
    return cloud;
}

inline PointCloud load_cloud(const std::filesystem::path& path) {
    return load_cloud(path, cloud_format_for_path(path));
}

inline void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
    if (cloud.empty()) throw InvalidArgument("save_cloud: empty cloud");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());

    switch (format) {
    case CloudFormat::XyzText: {
        char buf[96];
        for (const Vec3& p : cloud.points) {
            std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
            out << buf;
        }
        break;
    }
    case CloudFormat::PlyAsciiSubset: {
        out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
            << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        char buf[96];
        for (const Vec3& p : cloud.points) {
            std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
            out << buf;
        }
        break;
    }
    case CloudFormat::RawF32le: {
        out.write(detail::kPcfMagic, 4);
        std::uint64_t n = cloud.size();
        std::uint8_t cnt[8];
        for (int i = 0; i < 8; ++i) cnt[i] = std::uint8_t((n >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(cnt), 8);
        for (const Vec3& p : cloud.points) {
            const float f[3] = {float(p[0]), float(p[1]), float(p[2])};
            out.write(reinterpret_cast<const char*>(f), 12);
        }
        break;
    }
    }
    if (!out) throw Error("write failed: " + path.string());
}

inline void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
    save_cloud(cloud, path, cloud_format_for_path(path));
}

} // namespace pccf
