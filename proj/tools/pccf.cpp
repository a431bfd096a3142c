// pccf — point cloud completion forge: triplet corpus building, six-face
// depth projection, oracle-verified completion metrics, and the desk-scale
// position-aware fusion pipeline.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pccf/cloud_io.hpp"
#include "pccf/corpus.hpp"
#include "pccf/fusion.hpp"
#include "pccf/grad_check.hpp"
#include "pccf/inpaint.hpp"
#include "pccf/map_io.hpp"
#include "pccf/metrics.hpp"
#include "pccf/projection.hpp"
#include "pccf/report.hpp"
#include "pccf/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// exit 2: bad flags or config; exit 1: runtime failure
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::uint64_t seed = 0;
    unsigned threads = 0; // 0 = hardware
    std::uint32_t res = 224;
    std::size_t dim = 512;
    bool quiet = false;

    unsigned effective_threads() const { return threads == 0 ? pccf::hardware_threads() : threads; }

    void check() const {
        if (res < 2 || res % 2 != 0) throw UsageError("--res must be even and >= 2");
        if (dim == 0) throw UsageError("--dim must be >= 1");
    }

    // echoed into outputs; deliberately excludes the thread count so files
    // stay byte-identical across worker counts
    json echo() const {
        return json{{"seed", seed}, {"res", res}, {"dim", dim}};
    }
};

std::ostream& info(const Globals& g) {
    static std::ofstream null_sink;
    if (g.quiet) {
        null_sink.setstate(std::ios::badbit);
        return null_sink;
    }
    return std::cout;
}

json mat_to_json(const pccf::Mat& m) {
    if (m.rows() == 1) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(0, j));
        return row;
    }
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

json state_to_json(const pccf::FusionState& s) {
    json j;
    j["f_T"] = mat_to_json(s.f_T);
    j["f_t"] = mat_to_json(s.f_t);
    for (pccf::Face f : pccf::kAllFaces) {
        const std::size_t v = std::size_t(f);
        j["f_g"][pccf::face_key(f)] = mat_to_json(s.f_g[v]);
        j["f_l"][pccf::face_key(f)] = mat_to_json(s.f_l[v]);
        j["f_f"][pccf::face_key(f)] = mat_to_json(s.f_f[v]);
    }
    j["f_c"] = mat_to_json(s.f_c);
    j["f_c_prime"] = mat_to_json(s.f_c_prime);
    j["f_p"] = mat_to_json(s.f_p);
    j["f_d"] = mat_to_json(s.f_d);
    return j;
}

pccf::CategoryTable resolve_table(const std::string& spec) {
    if (spec == "pcn-8" || spec == "mvp-16") return pccf::CategoryTable::builtin(spec);
    if (!fs::exists(spec)) throw UsageError("category table not found: " + spec);
    return pccf::CategoryTable::from_file(spec);
}

pccf::EncoderHandle resolve_encoder(const std::string& dir, std::uint64_t seed, std::size_t dim) {
    if (dir.empty()) return pccf::EncoderHandle::stub(dim, seed);
    if (!fs::is_directory(dir)) throw UsageError("--encoder-dir is not a directory: " + dir);
    return pccf::EncoderHandle::file(dir, dim);
}

pccf::FusionParams resolve_params(const std::string& path, std::uint64_t params_seed, std::size_t dim) {
    if (!path.empty()) return pccf::load_fusion_params(path);
    pccf::FusionConfig cfg;
    cfg.dim = dim;
    cfg.dim_p = dim;
    cfg.dim_out = dim;
    cfg.seed = params_seed;
    return pccf::FusionParams::seeded(cfg);
}

pccf::BlockWeights resolve_weights(const std::string& spec) {
    if (spec.empty() || spec == "all-ones") return pccf::BlockWeights{};
    return pccf::load_block_weights(spec);
}

// ---------------------------------------------------------------------------

struct ProjectArgs {
    std::string in, out;
    std::size_t n_points = 0; // 0 = keep all
};

int run_project(const Globals& g, const ProjectArgs& a) {
    const pccf::PointCloud raw = pccf::load_cloud(a.in);
    auto [normalized, transform] = pccf::normalize_to_unit(raw);
    pccf::PointCloud cloud = a.n_points == 0 ? normalized
                                             : pccf::downsample_random(normalized, a.n_points, g.seed);
    const pccf::DepthMapSet set = pccf::project(cloud, g.res, g.res, transform);

    fs::create_directories(a.out);
    for (pccf::Face f : pccf::kAllFaces) {
        const std::string stem = "face_" + std::to_string(std::size_t(f));
        pccf::save_map(set.map(f), fs::path(a.out) / (stem + ".pdm"), pccf::MapFormat::RawF32leMap);
        pccf::save_map(set.map(f), fs::path(a.out) / (stem + ".pgm"), pccf::MapFormat::Pgm16);
    }
    json meta;
    meta["tool"] = pccf::kToolVersion;
    meta["config"] = g.echo();
    meta["input"] = a.in;
    meta["points"] = cloud.size();
    for (pccf::Face f : pccf::kAllFaces) {
        const pccf::DepthMap& m = set.map(f);
        meta["occupancy"][pccf::face_key(f)] = m.occupied_count();
    }
    std::ofstream(fs::path(a.out) / "projection.json") << meta.dump(2) << "\n";

    auto& out = info(g);
    out << "projected " << cloud.size() << " points at " << g.res << "x" << g.res << "\n";
    for (pccf::Face f : pccf::kAllFaces) {
        const pccf::DepthMap& m = set.map(f);
        char line[128];
        std::snprintf(line, sizeof(line), "  %s: %zu occupied px (%.1f%%)\n", pccf::face_key(f),
                      m.occupied_count(), 100.0 * double(m.occupied_count()) / double(m.depth.size()));
        out << line;
    }
    return 0;
}

struct BuildArgs {
    std::string in, out;
    std::size_t n_points = 2048;
    std::string table = "pcn-8";
};

int run_build_corpus(const Globals& g, const BuildArgs& a) {
    pccf::BuildOptions opt;
    opt.height = g.res;
    opt.width = g.res;
    opt.n_points = a.n_points;
    opt.seed = g.seed;
    opt.threads = g.effective_threads();
    opt.table = resolve_table(a.table);

    const auto inputs = pccf::load_build_inputs(a.in);
    const pccf::BuildResult result = pccf::build_corpus(inputs, a.out, opt);

    auto& out = info(g);
    out << "built " << result.manifest.records.size() << "/" << inputs.size() << " records into "
        << a.out << "\n";
    for (const pccf::BuildFailure& f : result.failures)
        std::cerr << "failed: " << f.id << ": " << f.error << "\n";
    return 0;
}

int run_validate(const Globals& g, const std::string& manifest, const std::string& out_path) {
    const pccf::ValidationReport report = pccf::validate_corpus(manifest);
    json j;
    j["tool"] = pccf::kToolVersion;
    j["config"] = g.echo();
    j["records_checked"] = report.records_checked;
    j["violations"] = json::array();
    for (const pccf::Violation& v : report.violations)
        j["violations"].push_back({{"record_id", v.record_id}, {"check", v.check}, {"detail", v.detail}});
    if (!out_path.empty()) std::ofstream(out_path) << j.dump(2) << "\n";

    auto& out = info(g);
    out << "checked " << report.records_checked << " records, " << report.violations.size()
        << " violations\n";
    for (const pccf::Violation& v : report.violations)
        out << "  [" << v.record_id << "] " << v.check << ": " << v.detail << "\n";
    return report.ok() ? 0 : 1;
}

struct EvalArgs {
    std::string pairs, out;
    double threshold = 0.01;
    bool full_sum = false;
};

int run_eval(const Globals& g, const EvalArgs& a) {
    pccf::EvalOptions opt;
    opt.threads = g.effective_threads();
    opt.f1_threshold = a.threshold;
    opt.cd_half_sum = !a.full_sum;
    if (!(opt.f1_threshold > 0.0)) throw UsageError("--threshold must be > 0");

    const auto entries = pccf::load_pair_manifest(a.pairs);
    const pccf::MetricReport report = pccf::evaluate_pairs(entries, opt);

    json j = pccf::report_to_json(report);
    j["config"] = g.echo();
    const std::string table = pccf::render_report_table(report);
    if (!a.out.empty()) {
        std::ofstream(a.out + ".json") << j.dump(2) << "\n";
        std::ofstream(a.out + ".txt") << table;
    }
    info(g) << table;
    if (report.failed > 0) {
        std::cerr << report.failed << " pair(s) failed to evaluate\n";
        for (const pccf::PairResult& r : report.pairs)
            if (!r.ok) std::cerr << "  [" << r.entry.id << "] " << r.error << "\n";
    }
    return report.failed == report.pairs.size() ? 1 : 0;
}

struct FuseArgs {
    std::string manifest, out;
    std::string params_path, weights = "all-ones";
    std::string encoder_dir, external_inpaint;
    std::uint64_t params_seed = 0, encoder_seed = 0;
    std::size_t n_out = 2048;
    std::uint32_t inpaint_iters = 0;
    double inpaint_eps = 1e-6;
    bool no_position_aware = false;
    bool dump_state = true;
};

int run_fuse_demo(const Globals& g, const FuseArgs& a) {
    const pccf::CorpusManifest manifest = pccf::load_manifest(a.manifest);
    const pccf::FusionParams params = resolve_params(a.params_path, a.params_seed, g.dim);
    const pccf::EncoderHandle encoder = resolve_encoder(a.encoder_dir, a.encoder_seed, params.config.dim);
    const pccf::BlockWeights bw = resolve_weights(a.weights);

    pccf::ForwardOptions fwd;
    fwd.n_out = a.n_out;
    fwd.use_block_weights = !a.no_position_aware;

    fs::create_directories(a.out);
    std::vector<pccf::PairEntry> pairs;
    for (const pccf::TripletRecord& rec : manifest.records) {
        const std::optional<fs::path> ext =
            a.external_inpaint.empty() ? std::nullopt : std::optional<fs::path>(a.external_inpaint);
        const pccf::ForwardInputs in =
            pccf::make_forward_inputs(manifest, rec, a.inpaint_iters, a.inpaint_eps, ext);
        const pccf::ForwardResult r = pccf::forward(in, params, bw, encoder, fwd);

        const fs::path pred_path = fs::path(a.out) / (rec.id + ".pred.pcf");
        pccf::save_cloud(r.prediction, pred_path, pccf::CloudFormat::RawF32le);
        if (a.dump_state) {
            json st = state_to_json(r.state);
            st["id"] = rec.id;
            st["tool"] = pccf::kToolVersion;
            st["config"] = g.echo();
            std::ofstream(fs::path(a.out) / (rec.id + ".state.json")) << st.dump() << "\n";
        }
        if (rec.gt_cloud_path)
            pairs.push_back({rec.id, rec.category, pred_path, manifest.dir / *rec.gt_cloud_path});
        info(g) << rec.id << ": " << r.prediction.size() << " points\n";
    }
    if (!pairs.empty()) pccf::save_pair_manifest(pairs, fs::path(a.out) / "pairs.jsonl");
    info(g) << "wrote " << manifest.records.size() << " predictions to " << a.out << "\n";
    return 0;
}

struct GradArgs {
    std::string op = "all";
    std::uint64_t seed = 7;
    double h = 1e-5;
    bool corrupt = false;
};

int run_gradcheck(const Globals& g, const GradArgs& a) {
    std::vector<std::string> ops;
    if (a.op == "all") {
        ops = pccf::grad_check_ops();
    } else {
        ops.push_back(a.op);
    }
    bool all_pass = true;
    for (const std::string& op : ops) {
        const pccf::GradCheckResult r = pccf::grad_check(op, a.seed, a.h, a.corrupt);
        char line[256];
        std::snprintf(line, sizeof(line), "%-10s %s  max rel err %.3e  (tol %.0e) at %s\n", op.c_str(),
                      r.pass ? "PASS" : "FAIL", r.max_err, r.tolerance, r.worst_coord.c_str());
        info(g) << line;
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
}

struct TrainArgs {
    std::string manifest, out = "weights.bw24", trace;
    std::string params_path, encoder_dir;
    std::uint64_t params_seed = 0, encoder_seed = 0, train_seed = 42;
    std::size_t iters = 200;
    double step = 1.0;
    std::size_t n_out = 512;
    std::uint32_t inpaint_iters = 0;
    bool fd = false;
};

int run_train_weights(const Globals& g, const TrainArgs& a) {
    const pccf::CorpusManifest manifest = pccf::load_manifest(a.manifest);
    const pccf::FusionParams params = resolve_params(a.params_path, a.params_seed, g.dim);
    const pccf::EncoderHandle encoder = resolve_encoder(a.encoder_dir, a.encoder_seed, params.config.dim);

    std::vector<pccf::TrainingRecord> records;
    for (const pccf::TripletRecord& rec : manifest.records) {
        if (!rec.gt_cloud_path)
            throw pccf::Error("record " + rec.id + " has no ground-truth cloud; cannot train");
        const pccf::ForwardInputs in = pccf::make_forward_inputs(manifest, rec, a.inpaint_iters);
        const pccf::PointCloud gt = pccf::load_cloud(manifest.dir / *rec.gt_cloud_path);
        records.push_back(pccf::make_training_record(in, gt, params, encoder));
    }

    pccf::TrainOptions opt;
    opt.iters = a.iters;
    opt.step = a.step;
    opt.seed = a.train_seed;
    opt.n_out = a.n_out;
    opt.mode = a.fd ? pccf::GradMode::FiniteDifference : pccf::GradMode::Analytic;

    const auto t0 = std::chrono::steady_clock::now();
    const pccf::TrainResult result = pccf::train_block_weights(records, params, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    pccf::save_block_weights(result.weights, a.out);
    if (!a.trace.empty()) {
        std::ofstream csv(a.trace);
        csv << "iteration,record,face,block,loss,grad,weight_after\n";
        for (const pccf::TrainStep& s : result.trace) {
            char line[192];
            std::snprintf(line, sizeof(line), "%zu,%zu,%zu,%zu,%.12g,%.12g,%.12g\n", s.iteration, s.record,
                          s.face, s.block, s.loss, s.grad, s.weight_after);
            csv << line;
        }
    }

    auto& out = info(g);
    out << "trained " << a.iters << " iterations over " << records.size() << " records in "
        << std::fixed << secs << " s\n";
    for (std::size_t f = 0; f < 6; ++f) {
        out << "  " << pccf::face_key(pccf::Face(f)) << ":";
        for (std::size_t b = 0; b < 4; ++b) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), " %8.4f", result.weights.at(f, b));
            out << buf;
        }
        out << "\n";
    }
    out << "weights written to " << a.out << "\n";
    return 0;
}

struct BenchArgs {
    std::string sizes = "1k,2k,16k";
    int runs = 10;
};

double brute_cd_l1(const pccf::PointCloud& p, const pccf::PointCloud& q) {
    double s1 = 0.0;
    for (const pccf::Vec3& x : p.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const pccf::Vec3& y : q.points) best = std::min(best, pccf::squared_dist(x, y));
        s1 += std::sqrt(best);
    }
    double s2 = 0.0;
    for (const pccf::Vec3& y : q.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const pccf::Vec3& x : p.points) best = std::min(best, pccf::squared_dist(y, x));
        s2 += std::sqrt(best);
    }
    return 0.5 * (s1 / double(p.size()) + s2 / double(q.size()));
}

int run_bench(const Globals& g, const BenchArgs& a) {
    std::vector<std::size_t> sizes;
    std::string token;
    std::istringstream ss(a.sizes);
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        std::size_t mul = 1;
        if (token.back() == 'k' || token.back() == 'K') {
            mul = 1024;
            token.pop_back();
        }
        sizes.push_back(std::size_t(std::stoull(token)) * mul);
    }
    if (sizes.empty()) throw UsageError("--sizes parsed to nothing");
    if (a.runs < 1) throw UsageError("--runs must be >= 1");

    std::cout << "size        tree mean   tree std    brute       speedup\n";
    for (std::size_t n : sizes) {
        pccf::Rng rng(pccf::mix_seed(g.seed, n));
        pccf::PointCloud p, q;
        for (std::size_t i = 0; i < n; ++i) {
            p.points.push_back({rng.next_sym() * 0.5, rng.next_sym() * 0.5, rng.next_sym() * 0.5});
            q.points.push_back({rng.next_sym() * 0.5, rng.next_sym() * 0.5, rng.next_sym() * 0.5});
        }

        std::vector<double> times;
        double cd_tree = 0.0;
        for (int r = 0; r < a.runs; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            const pccf::NnIndex ip(p), iq(q);
            cd_tree = pccf::chamfer_l1(p, q, ip, iq);
            times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        double mean = 0.0;
        for (double t : times) mean += t;
        mean /= double(times.size());
        double var = 0.0;
        for (double t : times) var += (t - mean) * (t - mean);
        const double stddev = std::sqrt(var / double(times.size()));

        const auto b0 = std::chrono::steady_clock::now();
        const double cd_brute = brute_cd_l1(p, q);
        const double brute_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - b0).count();
        if (std::abs(cd_tree - cd_brute) > 1e-12)
            throw pccf::Error("bench: tree and brute-force CD disagree");

        char line[160];
        std::snprintf(line, sizeof(line), "%-10zu %9.2f ms %9.2f ms %9.2f ms %9.1fx\n", n, mean * 1e3,
                      stddev * 1e3, brute_secs * 1e3, brute_secs / mean);
        std::cout << line;
    }
    std::cout << "soft target: 16384x16384 cd_l1 <= 200 ms single-threaded, speedup >= 20x\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(pccf::kToolVersion) +
                 " — point-text-image triplet corpus, projection, metrics and fusion toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", pccf::kToolVersion);
    app.set_config("--config", "", "TOML-style config file (key = value; flags override)");

    Globals g;
    app.add_option("--seed", g.seed, "global 64-bit seed")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads (0 = hardware)")
        ->envname("PCC_THREADS")
        ->capture_default_str();
    app.add_option("--res", g.res, "projection resolution (even, square)")->capture_default_str();
    app.add_option("--dim", g.dim, "embedding dimension")->capture_default_str();
    app.add_flag("--quiet", g.quiet, "suppress progress output");

    ProjectArgs project_args;
    CLI::App* project = app.add_subcommand("project", "project one cloud onto six depth maps");
    project->add_option("--in", project_args.in, "input cloud (.xyz/.ply/.pcf)")->required();
    project->add_option("--out", project_args.out, "output directory")->required();
    project->add_option("--n-points", project_args.n_points, "downsample before projection (0 = keep)");

    BuildArgs build_args;
    CLI::App* build = app.add_subcommand("build-corpus", "build a point-text-image triplet corpus");
    build->add_option("--in", build_args.in, "input manifest (jsonl)")->required();
    build->add_option("--out", build_args.out, "output corpus directory")->required();
    build->add_option("--n-points", build_args.n_points, "points per partial cloud")->capture_default_str();
    build->add_option("--table", build_args.table, "category table: pcn-8, mvp-16 or a file")
        ->capture_default_str();

    std::string validate_manifest, validate_out;
    CLI::App* validate = app.add_subcommand("validate", "re-check every corpus invariant");
    validate->add_option("manifest", validate_manifest, "corpus manifest path")->required();
    validate->add_option("--out", validate_out, "write the JSON report here");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "evaluate prediction/ground-truth pairs");
    eval->add_option("--pairs", eval_args.pairs, "pair manifest (jsonl)")->required();
    eval->add_option("--out", eval_args.out, "output prefix for .json/.txt reports");
    eval->add_option("--threshold", eval_args.threshold, "F1 distance threshold")->capture_default_str();
    eval->add_flag("--cd-full-sum", eval_args.full_sum, "report mean+mean instead of the half sum");

    FuseArgs fuse_args;
    CLI::App* fuse = app.add_subcommand("fuse-demo", "run the fusion pipeline over a corpus");
    fuse->add_option("--manifest", fuse_args.manifest, "corpus manifest")->required();
    fuse->add_option("--out", fuse_args.out, "predictions directory")->required();
    fuse->add_option("--params", fuse_args.params_path, "fusion parameter bundle (.ppb)");
    fuse->add_option("--params-seed", fuse_args.params_seed, "seed for fresh parameters")
        ->capture_default_str();
    fuse->add_option("--weights", fuse_args.weights, "block weights file or 'all-ones'")
        ->capture_default_str();
    fuse->add_option("--encoder-dir", fuse_args.encoder_dir, "precomputed embedding directory");
    fuse->add_option("--encoder-seed", fuse_args.encoder_seed, "stub encoder seed")->capture_default_str();
    fuse->add_option("--n-out", fuse_args.n_out, "points per prediction")->capture_default_str();
    fuse->add_option("--inpaint-iters", fuse_args.inpaint_iters, "diffusion fill passes (0 = H+W)");
    fuse->add_option("--inpaint-eps", fuse_args.inpaint_eps, "diffusion fill tolerance")
        ->capture_default_str();
    fuse->add_option("--external-inpaint", fuse_args.external_inpaint,
                     "directory of externally inpainted maps ({id}.face_{k}.pdm)");
    fuse->add_flag("--no-position-aware", fuse_args.no_position_aware,
                   "disable block weighting (baseline path)");
    fuse->add_flag("!--no-state", fuse_args.dump_state, "do not dump per-record fusion states");

    GradArgs grad_args;
    CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference checks of every fusion op");
    grad->add_option("--op", grad_args.op, "op name or 'all'")->capture_default_str();
    grad->add_option("--gc-seed", grad_args.seed, "input seed")->capture_default_str();
    grad->add_option("--fd-step", grad_args.h, "central difference step")->capture_default_str();
    grad->add_flag("--corrupt", grad_args.corrupt, "negative control: corrupt one gradient entry");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train-weights", "train the 24 block weights (random-block schedule)");
    train->add_option("--manifest", train_args.manifest, "corpus manifest with ground truth")->required();
    train->add_option("--out", train_args.out, "output weights file")->capture_default_str();
    train->add_option("--trace", train_args.trace, "loss trace CSV path");
    train->add_option("--params", train_args.params_path, "fusion parameter bundle (.ppb)");
    train->add_option("--params-seed", train_args.params_seed, "seed for fresh parameters")
        ->capture_default_str();
    train->add_option("--encoder-dir", train_args.encoder_dir, "precomputed embedding directory");
    train->add_option("--encoder-seed", train_args.encoder_seed, "stub encoder seed")->capture_default_str();
    train->add_option("--train-seed", train_args.train_seed, "schedule seed")->capture_default_str();
    train->add_option("--iters", train_args.iters, "training iterations")->capture_default_str();
    train->add_option("--step", train_args.step, "gradient descent step size")->capture_default_str();
    train->add_option("--n-out", train_args.n_out, "points per prediction")->capture_default_str();
    train->add_option("--inpaint-iters", train_args.inpaint_iters, "diffusion fill passes (0 = H+W)");
    train->add_flag("--fd", train_args.fd, "use finite-difference gradients (oracle mode)");

    BenchArgs bench_args;
    CLI::App* bench = app.add_subcommand("bench", "time tree vs brute-force chamfer distance");
    bench->add_option("--sizes", bench_args.sizes, "comma list, k suffix = x1024")->capture_default_str();
    bench->add_option("--runs", bench_args.runs, "timed repetitions per size")->capture_default_str();

    // let global flags (--seed, --res, ...) appear after the subcommand too
    for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        g.check();
        if (fuse_args.params_seed == 0) fuse_args.params_seed = pccf::mix_seed(g.seed, "params");
        if (fuse_args.encoder_seed == 0) fuse_args.encoder_seed = pccf::mix_seed(g.seed, "encoder");
        if (train_args.params_seed == 0) train_args.params_seed = pccf::mix_seed(g.seed, "params");
        if (train_args.encoder_seed == 0) train_args.encoder_seed = pccf::mix_seed(g.seed, "encoder");

        if (project->parsed()) return run_project(g, project_args);
        if (build->parsed()) return run_build_corpus(g, build_args);
        if (validate->parsed()) return run_validate(g, validate_manifest, validate_out);
        if (eval->parsed()) return run_eval(g, eval_args);
        if (fuse->parsed()) return run_fuse_demo(g, fuse_args);
        if (grad->parsed()) return run_gradcheck(g, grad_args);
        if (train->parsed()) return run_train_weights(g, train_args);
        if (bench->parsed()) return run_bench(g, bench_args);
        throw UsageError("no subcommand selected");
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
