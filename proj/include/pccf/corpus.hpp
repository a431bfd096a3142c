#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pccf/cloud_io.hpp"
#include "pccf/depth_map.hpp"
#include "pccf/error.hpp"
#include "pccf/map_io.hpp"
#include "pccf/parallel.hpp"
#include "pccf/point_cloud.hpp"
#include "pccf/projection.hpp"
#include "pccf/rng.hpp"
#include "pccf/version.hpp"

namespace pccf {

namespace fs = std::filesystem;

// Ordered category names; lowercase, unique, non-empty.
struct CategoryTable {
    std::string name;
    std::vector<std::string> categories;

    bool contains(const std::string& c) const {
        return std::find(categories.begin(), categories.end(), c) != categories.end();
    }

    static CategoryTable pcn8() {
        return {"pcn-8", {"airplane", "cabinet", "car", "chair", "lamp", "sofa", "table", "watercraft"}};
    }
    static CategoryTable mvp16() {
        CategoryTable t = pcn8();
        t.name = "mvp-16";
        for (const char* c : {"bed", "bench", "bookshelf", "bus", "guitar", "motorbike", "pistol", "skateboard"})
            t.categories.push_back(c);
        return t;
    }

    static CategoryTable builtin(const std::string& name) {
        if (name == "pcn-8") return pcn8();
        if (name == "mvp-16") return mvp16();
        throw InvalidArgument("unknown built-in category table: " + name);
    }

    // one lowercase name per line
    static CategoryTable from_file(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open category table: " + path.string());
        CategoryTable t{path.stem().string(), {}};
        std::string line;
        std::set<std::string> seen;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            for (char c : line)
                if (c >= 'A' && c <= 'Z') throw Error(path.string() + ": category names must be lowercase: " + line);
            if (!seen.insert(line).second) throw Error(path.string() + ": duplicate category: " + line);
            t.categories.push_back(line);
        }
        if (t.categories.empty()) throw Error(path.string() + ": empty category table");
        return t;
    }
};

inline std::string generate_text(const std::string& category) {
    if (category.empty()) throw InvalidArgument("generate_text: empty category");
    return "There is " + category + " point cloud projection map";
}

// One corpus entry; paths are stored relative to the manifest directory.
struct TripletRecord {
    std::string id;
    std::string category;
    std::string text;
    std::string cloud_path;
    std::optional<std::string> gt_cloud_path;
    std::array<std::string, 6> map_paths; // indexed by Face
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::uint64_t seed = 0;
};

struct CorpusManifest {
    std::string version;
    std::string category_table;
    std::vector<std::string> categories;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::size_t n_points = 0;
    std::uint64_t seed = 0;
    std::vector<TripletRecord> records;
    fs::path dir; // runtime only: directory the manifest was loaded from
};

struct BuildInput {
    std::string id;
    std::string category;
    fs::path cloud_path;
    std::optional<fs::path> gt_path;
};

struct BuildOptions {
    std::uint32_t height = 224;
    std::uint32_t width = 224;
    std::size_t n_points = 2048;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    CategoryTable table = CategoryTable::pcn8();
};

struct BuildFailure {
    std::string id;
    std::string error;
};

struct BuildResult {
    CorpusManifest manifest;
    std::vector<BuildFailure> failures;
};

inline std::uint64_t record_seed(std::uint64_t global_seed, const std::string& id) {
    return mix_seed(global_seed, fnv1a64(id));
}

namespace detail {

inline nlohmann::json record_to_json(const TripletRecord& r) {
    nlohmann::json j;
    j["id"] = r.id;
    j["category"] = r.category;
    j["text"] = r.text;
    j["cloud_path"] = r.cloud_path;
    if (r.gt_cloud_path) j["gt_cloud_path"] = *r.gt_cloud_path;
    nlohmann::json maps;
    for (Face f : kAllFaces) maps[face_key(f)] = r.map_paths[std::size_t(f)];
    j["map_paths"] = maps;
    j["resolution"] = {r.height, r.width};
    j["seed"] = r.seed;
    return j;
}

inline TripletRecord record_from_json(const nlohmann::json& j) {
    TripletRecord r;
    r.id = j.at("id").get<std::string>();
    r.category = j.at("category").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.cloud_path = j.at("cloud_path").get<std::string>();
    if (j.contains("gt_cloud_path")) r.gt_cloud_path = j.at("gt_cloud_path").get<std::string>();
    const auto& maps = j.at("map_paths");
    if (maps.size() != 6) throw Error("record " + r.id + ": expected 6 map paths");
    for (Face f : kAllFaces) r.map_paths[std::size_t(f)] = maps.at(face_key(f)).get<std::string>();
    r.height = j.at("resolution").at(0).get<std::uint32_t>();
    r.width = j.at("resolution").at(1).get<std::uint32_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
}

} // namespace detail

inline void save_manifest(const CorpusManifest& m, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    nlohmann::json header;
    header["version"] = m.version;
    header["kind"] = "corpus";
    header["category_table"] = m.category_table;
    header["categories"] = m.categories;
    header["resolution"] = {m.height, m.width};
    header["n_points"] = m.n_points;
    header["seed"] = m.seed;
    header["tool"] = kToolVersion;
    out << header.dump() << "\n";
    for (const TripletRecord& r : m.records) out << detail::record_to_json(r).dump() << "\n";
    if (!out) throw Error("write failed: " + path.string());
}

inline CorpusManifest load_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(path.string() + ": empty manifest");

    CorpusManifest m;
    try {
        const nlohmann::json header = nlohmann::json::parse(line);
        m.version = header.at("version").get<std::string>();
        m.category_table = header.at("category_table").get<std::string>();
        if (header.contains("categories")) m.categories = header.at("categories").get<std::vector<std::string>>();
        m.height = header.at("resolution").at(0).get<std::uint32_t>();
        m.width = header.at("resolution").at(1).get<std::uint32_t>();
        m.n_points = header.at("n_points").get<std::size_t>();
        m.seed = header.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": bad manifest header: " + e.what());
    }
    if (m.version != kFormatVersion)
        throw Error(path.string() + ": unsupported manifest version '" + m.version + "'");

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            m.records.push_back(detail::record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    m.dir = path.parent_path();
    return m;
}

// normalize -> downsample -> project -> write the six maps and the cloud(s)
inline TripletRecord build_record(const BuildInput& input, const fs::path& out_dir,
                                  const BuildOptions& opt) {
    const std::uint64_t seed = record_seed(opt.seed, input.id);
    const PointCloud raw = load_cloud(input.cloud_path);
    auto [normalized, transform] = normalize_to_unit(raw);
    const PointCloud partial = downsample_random(normalized, opt.n_points, seed);
    const DepthMapSet maps = project(partial, opt.height, opt.width, transform);

    const fs::path rel_dir = fs::path(input.category) / input.id;
    const fs::path abs_dir = out_dir / rel_dir;
    fs::create_directories(abs_dir);

    TripletRecord rec;
    rec.id = input.id;
    rec.category = input.category;
    rec.text = generate_text(input.category);
    rec.height = opt.height;
    rec.width = opt.width;
    rec.seed = seed;

    save_cloud(partial, abs_dir / "partial.pcf", CloudFormat::RawF32le);
    rec.cloud_path = (rel_dir / "partial.pcf").generic_string();

    if (input.gt_path) {
        // ground truth shares the partial's frame so the pair stays aligned
        const PointCloud gt = transform.apply(load_cloud(*input.gt_path));
        save_cloud(gt, abs_dir / "gt.pcf", CloudFormat::RawF32le);
        rec.gt_cloud_path = (rel_dir / "gt.pcf").generic_string();
    }

    for (Face f : kAllFaces) {
        const std::string stem = "face_" + std::to_string(std::size_t(f));
        save_map(maps.map(f), abs_dir / (stem + ".pdm"), MapFormat::RawF32leMap);
        save_map(maps.map(f), abs_dir / (stem + ".pgm"), MapFormat::Pgm16);
        rec.map_paths[std::size_t(f)] = (rel_dir / (stem + ".pdm")).generic_string();
    }
    return rec;
}

// Builds every record (workers share nothing), then assembles the manifest
// in input order; output bytes are a pure function of (inputs, options).
inline BuildResult build_corpus(const std::vector<BuildInput>& inputs, const fs::path& out_dir,
                                const BuildOptions& opt) {
    for (const BuildInput& in : inputs)
        if (!opt.table.contains(in.category))
            throw InvalidArgument("build_corpus: category '" + in.category + "' not in table '" +
                                  opt.table.name + "'");

    fs::create_directories(out_dir);
    std::vector<std::optional<TripletRecord>> built(inputs.size());
    std::vector<std::string> errors(inputs.size());
    parallel_for(inputs.size(), opt.threads, [&](std::size_t i) {
        try {
            built[i] = build_record(inputs[i], out_dir, opt);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    BuildResult result;
    result.manifest.version = kFormatVersion;
    result.manifest.category_table = opt.table.name;
    result.manifest.categories = opt.table.categories;
    result.manifest.height = opt.height;
    result.manifest.width = opt.width;
    result.manifest.n_points = opt.n_points;
    result.manifest.seed = opt.seed;
    result.manifest.dir = out_dir;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (built[i]) {
            result.manifest.records.push_back(std::move(*built[i]));
        } else {
            result.failures.push_back({inputs[i].id, errors[i]});
        }
    }

    save_manifest(result.manifest, out_dir / "manifest.jsonl");
    if (!result.failures.empty()) {
        std::ofstream out(out_dir / "failures.jsonl", std::ios::binary);
        for (const BuildFailure& f : result.failures) {
            nlohmann::json j;
            j["id"] = f.id;
            j["error"] = f.error;
            out << j.dump() << "\n";
        }
    }
    if (!result.failures.empty() && result.manifest.records.empty())
        throw Error("build_corpus: all " + std::to_string(inputs.size()) + " records failed");
    return result;
}

// JSON Lines of {id, category, cloud_path, gt_path?}; paths are resolved
// relative to the manifest file's directory.
inline std::vector<BuildInput> load_build_inputs(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    const fs::path base = path.parent_path();
    std::vector<BuildInput> inputs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            BuildInput b;
            b.id = j.at("id").get<std::string>();
            b.category = j.at("category").get<std::string>();
            b.cloud_path = base / j.at("cloud_path").get<std::string>();
            if (j.contains("gt_path")) b.gt_path = base / j.at("gt_path").get<std::string>();
            inputs.push_back(std::move(b));
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (inputs.empty()) throw Error(path.string() + ": no inputs");
    return inputs;
}

struct Violation {
    std::string record_id;
    std::string check;
    std::string detail;
};

struct ValidationReport {
    std::size_t records_checked = 0;
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

// Re-checks every manifest and map invariant; violations are collected per
// record rather than aborting on the first problem.
inline ValidationReport validate_corpus(const fs::path& manifest_path) {
    const CorpusManifest m = load_manifest(manifest_path);
    ValidationReport report;
    report.records_checked = m.records.size();

    CategoryTable table;
    if (!m.categories.empty()) {
        table = CategoryTable{m.category_table, m.categories};
    } else {
        table = CategoryTable::builtin(m.category_table);
    }

    std::set<std::string> ids;
    for (const TripletRecord& r : m.records) {
        auto violation = [&](const std::string& check, const std::string& detail) {
            report.violations.push_back({r.id, check, detail});
        };

        if (!ids.insert(r.id).second) violation("unique-id", "duplicate record id");
        if (!table.contains(r.category)) violation("category", "'" + r.category + "' not in table");
        if (r.text != generate_text(r.category))
            violation("text", "expected '" + generate_text(r.category) + "', found '" + r.text + "'");
        if (r.height < 2 || r.width < 2 || r.height % 2 != 0 || r.width % 2 != 0)
            violation("resolution", "resolution must be even and >= 2");

        try {
            const PointCloud cloud = load_cloud(m.dir / r.cloud_path);
            if (cloud.empty()) violation("cloud", "empty cloud");
        } catch (const std::exception& e) {
            violation("cloud", e.what());
        }
        if (r.gt_cloud_path) {
            try {
                load_cloud(m.dir / *r.gt_cloud_path);
            } catch (const std::exception& e) {
                violation("gt-cloud", e.what());
            }
        }

        for (Face f : kAllFaces) {
            const std::string& rel = r.map_paths[std::size_t(f)];
            try {
                const DepthMap map = load_map(m.dir / rel);
                if (map.face != f)
                    violation("map-face", rel + ": face id mismatch");
                if (map.height != r.height || map.width != r.width)
                    violation("map-resolution", rel + ": map resolution differs from record");
                // normalization law: >= 2 distinct occupied depths must span
                // exactly [0, 1]
                float lo = 1.0f, hi = 0.0f;
                bool any = false, multi = false;
                float first_val = 0.0f;
                for (std::size_t i = 0; i < map.depth.size(); ++i) {
                    if (!map.occupancy[i]) continue;
                    if (!any) {
                        first_val = map.depth[i];
                        lo = hi = map.depth[i];
                        any = true;
                    } else {
                        multi = multi || map.depth[i] != first_val;
                        lo = std::min(lo, map.depth[i]);
                        hi = std::max(hi, map.depth[i]);
                    }
                }
                if (!any) {
                    violation("map-empty", rel + ": no occupied pixels");
                } else if (multi && (lo != 0.0f || hi != 1.0f)) {
                    violation("map-normalization", rel + ": occupied depth range [" + std::to_string(lo) +
                                                       ", " + std::to_string(hi) + "] != [0, 1]");
                }
            } catch (const std::exception& e) {
                violation("map", e.what());
            }
        }
    }
    return report;
}

} // namespace pccf
