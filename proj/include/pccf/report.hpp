#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pccf/error.hpp"
#include "pccf/metrics.hpp"
#include "pccf/version.hpp"

namespace pccf {

// JSON Lines of {id, category, pred_path, gt_path}; paths resolve relative
// to the manifest's directory.
inline std::vector<PairEntry> load_pair_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    const std::filesystem::path base = path.parent_path();
    std::vector<PairEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            if (j.contains("kind") || j.contains("version")) continue; // header line
            entries.push_back({j.at("id").get<std::string>(), j.at("category").get<std::string>(),
                               base / j.at("pred_path").get<std::string>(),
                               base / j.at("gt_path").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (entries.empty()) throw Error(path.string() + ": no pairs");
    return entries;
}

inline void save_pair_manifest(const std::vector<PairEntry>& entries, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    const std::filesystem::path base = path.parent_path();
    for (const PairEntry& e : entries) {
        nlohmann::json j;
        j["id"] = e.id;
        j["category"] = e.category;
        j["pred_path"] = std::filesystem::relative(e.pred_path, base).generic_string();
        j["gt_path"] = std::filesystem::relative(e.gt_path, base).generic_string();
        out << j.dump() << "\n";
    }
}

inline nlohmann::json report_to_json(const MetricReport& report) {
    nlohmann::json j;
    j["tool"] = kToolVersion;
    j["version"] = kFormatVersion;
    j["metadata"] = {
        {"cd_convention", report.options.cd_half_sum ? "half_sum" : "full_sum"},
        {"f1_threshold", report.options.f1_threshold},
        {"f1_threshold_kind", "absolute on unit-normalized shapes"},
        {"fidelity_direction", "gt_to_pred"},
    };
    auto metrics_json = [](const PairMetrics& m) {
        return nlohmann::json{
            {"cd_l1", m.cd_l1}, {"cd_l2", m.cd_l2}, {"f1", m.f1}, {"fidelity", m.fidelity}};
    };
    j["overall"] = {{"count", report.overall.count}, {"mean", metrics_json(report.overall.mean)}};
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [cat, stats] : report.per_category)
        cats[cat] = {{"count", stats.count}, {"mean", metrics_json(stats.mean)}};
    j["per_category"] = cats;
    nlohmann::json pairs = nlohmann::json::array();
    for (const PairResult& r : report.pairs) {
        nlohmann::json p;
        p["id"] = r.entry.id;
        p["category"] = r.entry.category;
        p["ok"] = r.ok;
        if (r.ok) {
            p["metrics"] = metrics_json(r.metrics);
        } else {
            p["error"] = r.error;
        }
        pairs.push_back(p);
    }
    j["pairs"] = pairs;
    j["failed"] = report.failed;
    return j;
}

// Aligned text table, CD and fidelity scaled x10^3 (F1 stays raw); overall
// mean first, then one column per category.
inline std::string render_report_table(const MetricReport& report) {
    std::vector<std::string> cats;
    for (const auto& [cat, stats] : report.per_category) cats.push_back(cat);

    auto fmt = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%10.4f", v);
        return std::string(buf);
    };

    std::string out;
    out += report.options.cd_half_sum ? "# cd = 0.5*(mean+mean)" : "# cd = mean+mean";
    out += ", f1 threshold ";
    {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", report.options.f1_threshold);
        out += buf;
    }
    out += ", fidelity = gt->pred\n";

    char head[64];
    std::snprintf(head, sizeof(head), "%-14s%10s", "metric", "Ave");
    out += head;
    for (const auto& c : cats) {
        std::snprintf(head, sizeof(head), "%10s", c.size() > 9 ? c.substr(0, 9).c_str() : c.c_str());
        out += head;
    }
    out += "\n";

    struct Row {
        const char* name;
        double PairMetrics::*field;
        double scale;
    };
    const Row rows[4] = {{"cd_l1 x1e3", &PairMetrics::cd_l1, 1e3},
                         {"cd_l2 x1e3", &PairMetrics::cd_l2, 1e3},
                         {"fidelity x1e3", &PairMetrics::fidelity, 1e3},
                         {"f1", &PairMetrics::f1, 1.0}};
    for (const Row& row : rows) {
        char name[64];
        std::snprintf(name, sizeof(name), "%-14s", row.name);
        out += name;
        out += fmt(report.overall.mean.*row.field * row.scale);
        for (const auto& c : cats) out += fmt(report.per_category.at(c).mean.*row.field * row.scale);
        out += "\n";
    }
    char counts[64];
    std::snprintf(counts, sizeof(counts), "%-14s%10zu", "pairs", report.overall.count);
    out += counts;
    for (const auto& c : cats) {
        std::snprintf(counts, sizeof(counts), "%10zu", report.per_category.at(c).count);
        out += counts;
    }
    out += "\n";
    return out;
}

} // namespace pccf
