#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pccf/cloud_io.hpp"
#include "pccf/error.hpp"
#include "pccf/kd_tree.hpp"
#include "pccf/parallel.hpp"
#include "pccf/point_cloud.hpp"

namespace pccf {

// Completion-literature conventions throughout: CD is the half-sum of the
// two directional means, F1 uses an absolute threshold on unit-normalized
// shapes, all accumulation in double with a fixed summation order.

inline double chamfer_l1(const PointCloud& p, const PointCloud& q, const NnIndex& p_index,
                         const NnIndex& q_index) {
    double sum_pq = 0.0;
    for (const Vec3& x : p.points) sum_pq += std::sqrt(q_index.nearest_sqdist(x));
    double sum_qp = 0.0;
    for (const Vec3& x : q.points) sum_qp += std::sqrt(p_index.nearest_sqdist(x));
    return 0.5 * (sum_pq / double(p.size()) + sum_qp / double(q.size()));
}

inline double chamfer_l1(const PointCloud& p, const PointCloud& q) {
    if (p.empty() || q.empty()) throw InvalidArgument("chamfer_l1: empty cloud");
    return chamfer_l1(p, q, NnIndex(p), NnIndex(q));
}

inline double chamfer_l2(const PointCloud& p, const PointCloud& q, const NnIndex& p_index,
                         const NnIndex& q_index) {
    double sum_pq = 0.0;
    for (const Vec3& x : p.points) sum_pq += q_index.nearest_sqdist(x);
    double sum_qp = 0.0;
    for (const Vec3& x : q.points) sum_qp += p_index.nearest_sqdist(x);
    return 0.5 * (sum_pq / double(p.size()) + sum_qp / double(q.size()));
}

inline double chamfer_l2(const PointCloud& p, const PointCloud& q) {
    if (p.empty() || q.empty()) throw InvalidArgument("chamfer_l2: empty cloud");
    return chamfer_l2(p, q, NnIndex(p), NnIndex(q));
}

// F1-Score@threshold: harmonic mean of the fractions of points whose nearest
// neighbor in the other cloud lies strictly below the threshold; 0 when both
// fractions are 0.
inline double f1_score(const PointCloud& p, const PointCloud& q, const NnIndex& p_index,
                       const NnIndex& q_index, double threshold) {
    if (!(threshold > 0.0)) throw InvalidArgument("f1_score: threshold must be > 0");
    std::size_t hit_p = 0;
    for (const Vec3& x : p.points) hit_p += std::sqrt(q_index.nearest_sqdist(x)) < threshold;
    std::size_t hit_q = 0;
    for (const Vec3& x : q.points) hit_q += std::sqrt(p_index.nearest_sqdist(x)) < threshold;
    const double precision = double(hit_p) / double(p.size());
    const double recall = double(hit_q) / double(q.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

inline double f1_score(const PointCloud& p, const PointCloud& q, double threshold = 0.01) {
    if (p.empty() || q.empty()) throw InvalidArgument("f1_score: empty cloud");
    return f1_score(p, q, NnIndex(p), NnIndex(q), threshold);
}

// Mean distance from each input point to its nearest output point
// (one-directional; measures how well the output preserves the input).
inline double fidelity(const PointCloud& input, const NnIndex& output_index) {
    double sum = 0.0;
    for (const Vec3& x : input.points) sum += std::sqrt(output_index.nearest_sqdist(x));
    return sum / double(input.size());
}

inline double fidelity(const PointCloud& input, const PointCloud& output) {
    if (input.empty() || output.empty()) throw InvalidArgument("fidelity: empty cloud");
    return fidelity(input, NnIndex(output));
}

// Minimal matching distance: min CD_L2 against a reference set, ties to the
// lowest reference index.
inline std::pair<double, std::size_t> mmd(const PointCloud& output, const std::vector<PointCloud>& references) {
    if (references.empty()) throw InvalidArgument("mmd: empty reference set");
    if (output.empty()) throw InvalidArgument("mmd: empty output");
    const NnIndex out_index(output);
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < references.size(); ++i) {
        const double cd = chamfer_l2(output, references[i], out_index, NnIndex(references[i]));
        if (cd < best) {
            best = cd;
            arg = i;
        }
    }
    return {best, arg};
}

struct PairEntry {
    std::string id;
    std::string category;
    std::filesystem::path pred_path;
    std::filesystem::path gt_path;
};

struct PairMetrics {
    double cd_l1 = 0.0;
    double cd_l2 = 0.0;
    double f1 = 0.0;
    double fidelity = 0.0;
};

struct PairResult {
    PairEntry entry;
    bool ok = false;
    std::string error;
    PairMetrics metrics;
};

struct MetricStats {
    std::size_t count = 0;
    PairMetrics mean;
};

struct EvalOptions {
    unsigned threads = 1;
    double f1_threshold = 0.01;
    bool cd_half_sum = true; // false reports (mean + mean) without the 1/2
};

struct MetricReport {
    std::vector<PairResult> pairs;
    std::map<std::string, MetricStats> per_category; // sorted by name
    MetricStats overall;
    std::size_t failed = 0;
    EvalOptions options;
};

inline PairMetrics evaluate_pair(const PointCloud& pred, const PointCloud& gt, const EvalOptions& opt) {
    if (pred.empty() || gt.empty()) throw InvalidArgument("evaluate_pair: empty cloud");
    const NnIndex pred_index(pred);
    const NnIndex gt_index(gt);

    // both directional nn passes feed all four metrics
    double sum_d_pg = 0.0, sum_d2_pg = 0.0;
    std::size_t hits_pg = 0;
    for (const Vec3& x : pred.points) {
        const double d2 = gt_index.nearest_sqdist(x);
        const double d = std::sqrt(d2);
        sum_d_pg += d;
        sum_d2_pg += d2;
        hits_pg += d < opt.f1_threshold;
    }
    double sum_d_gp = 0.0, sum_d2_gp = 0.0;
    std::size_t hits_gp = 0;
    for (const Vec3& x : gt.points) {
        const double d2 = pred_index.nearest_sqdist(x);
        const double d = std::sqrt(d2);
        sum_d_gp += d;
        sum_d2_gp += d2;
        hits_gp += d < opt.f1_threshold;
    }

    const double np = double(pred.size()), ng = double(gt.size());
    const double factor = opt.cd_half_sum ? 0.5 : 1.0;
    PairMetrics m;
    m.cd_l1 = factor * (sum_d_pg / np + sum_d_gp / ng);
    m.cd_l2 = factor * (sum_d2_pg / np + sum_d2_gp / ng);
    const double precision = double(hits_pg) / np;
    const double recall = double(hits_gp) / ng;
    m.f1 = (precision + recall == 0.0) ? 0.0 : 2.0 * precision * recall / (precision + recall);
    m.fidelity = sum_d_gp / ng; // gt -> prediction: how well the prediction covers the target
    return m;
}

// Per-pair metrics plus per-category and overall means. Pairs are evaluated
// independently (possibly in parallel) and aggregated in manifest order, so
// the report is identical for any thread count.
inline MetricReport evaluate_pairs(const std::vector<PairEntry>& entries, const EvalOptions& options) {
    MetricReport report;
    report.options = options;
    report.pairs.resize(entries.size());

    parallel_for(entries.size(), options.threads, [&](std::size_t i) {
        PairResult& r = report.pairs[i];
        r.entry = entries[i];
        try {
            const PointCloud pred = load_cloud(entries[i].pred_path);
            const PointCloud gt = load_cloud(entries[i].gt_path);
            r.metrics = evaluate_pair(pred, gt, options);
            r.ok = true;
        } catch (const std::exception& e) {
            r.ok = false;
            r.error = e.what();
        }
    });

    std::map<std::string, PairMetrics> sums;
    std::map<std::string, std::size_t> counts;
    PairMetrics total;
    std::size_t total_count = 0;
    for (const PairResult& r : report.pairs) {
        if (!r.ok) {
            ++report.failed;
            continue;
        }
        PairMetrics& s = sums[r.entry.category];
        s.cd_l1 += r.metrics.cd_l1;
        s.cd_l2 += r.metrics.cd_l2;
        s.f1 += r.metrics.f1;
        s.fidelity += r.metrics.fidelity;
        ++counts[r.entry.category];
        total.cd_l1 += r.metrics.cd_l1;
        total.cd_l2 += r.metrics.cd_l2;
        total.f1 += r.metrics.f1;
        total.fidelity += r.metrics.fidelity;
        ++total_count;
    }
    for (const auto& [cat, sum] : sums) {
        const double n = double(counts[cat]);
        report.per_category[cat] = MetricStats{
            counts[cat], PairMetrics{sum.cd_l1 / n, sum.cd_l2 / n, sum.f1 / n, sum.fidelity / n}};
    }
    if (total_count > 0) {
        const double n = double(total_count);
        report.overall = MetricStats{
            total_count, PairMetrics{total.cd_l1 / n, total.cd_l2 / n, total.f1 / n, total.fidelity / n}};
    }
    return report;
}

} // namespace pccf
