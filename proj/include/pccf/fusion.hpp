#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pccf/attention.hpp"
#include "pccf/corpus.hpp"
#include "pccf/encoder.hpp"
#include "pccf/error.hpp"
#include "pccf/inpaint.hpp"
#include "pccf/kd_tree.hpp"
#include "pccf/map_io.hpp"
#include "pccf/point_cloud.hpp"
#include "pccf/rng.hpp"
#include "pccf/tensor.hpp"
#include "pccf/version.hpp"

namespace pccf {

// ---------------------------------------------------------------------------
// The 24 learnable scalars of the position-aware module: one per (view,
// block) cell, defaulting to 1 (the unweighted baseline).
// ---------------------------------------------------------------------------

struct BlockWeights {
    std::array<double, 24> w;

    BlockWeights() { w.fill(1.0); }

    static constexpr std::size_t cell(std::size_t face, std::size_t block) { return face * 4 + block; }
    double& at(std::size_t face, std::size_t block) { return w[cell(face, block)]; }
    double at(std::size_t face, std::size_t block) const { return w[cell(face, block)]; }

    std::array<double, 4> view(std::size_t face) const {
        return {w[face * 4], w[face * 4 + 1], w[face * 4 + 2], w[face * 4 + 3]};
    }
};

// "BW24" + 24 f64le, face-major
inline void save_block_weights(const BlockWeights& bw, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write("BW24", 4);
    for (double v : bw.w) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = std::uint8_t((bits >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(b), 8);
    }
    if (!out) throw Error("write failed: " + path.string());
}

inline BlockWeights load_block_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "BW24", 4) != 0)
        throw Error(path.string() + ": bad magic (expected BW24)");
    BlockWeights bw;
    for (double& v : bw.w) {
        std::uint8_t b[8];
        if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error(path.string() + ": truncated");
        std::uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
        std::memcpy(&v, &bits, 8);
        if (!std::isfinite(v)) throw Error(path.string() + ": non-finite weight");
    }
    return bw;
}

// ---------------------------------------------------------------------------
// Parameter bundle for the whole fusion graph.
// ---------------------------------------------------------------------------

struct FusionConfig {
    std::size_t dim = 512;     // CLIP-style embedding width
    std::size_t dim_p = 512;   // point feature width
    std::size_t dim_out = 512; // fused feature width
    std::size_t hidden = 64;   // decoder hidden width
    std::uint64_t seed = 1;
};

struct FusionParams {
    FusionConfig config;

    Mat text_w, text_b;                 // F_T -> F_t affine (D x D, 1 x D)
    AttentionParams local;              // block-weighted per-view attention
    AttentionParams fuse;               // local/global fusion
    AttentionParams clip;               // F_c transformation
    Mat fp_proj;                        // D x D_p, empty when dim_p == dim
    Mat final_w, final_b;               // 1x1-conv equivalent (D_out x (D_p + D), 1 x D_out)
    Mat penc_w, penc_b;                 // point encoder affine (D_p x 3, 1 x D_p)
    Mat dec_w1, dec_b1, dec_w2, dec_b2; // decoder layers

    static FusionParams seeded(const FusionConfig& cfg) {
        FusionParams p;
        p.config = cfg;
        const std::uint64_t s = cfg.seed;
        const double sd = 1.0 / std::sqrt(double(cfg.dim));
        p.text_w = Mat::seeded(cfg.dim, cfg.dim, mix_seed(s, "text_w"), sd);
        p.text_b = Mat::seeded(1, cfg.dim, mix_seed(s, "text_b"), sd);
        p.local = AttentionParams::seeded(cfg.dim, mix_seed(s, "local"));
        p.fuse = AttentionParams::seeded(cfg.dim, mix_seed(s, "fuse"));
        p.clip = AttentionParams::seeded(cfg.dim, mix_seed(s, "clip"));
        // the clip query is the tanh point feature, whose norm grows like
        // 0.7*sqrt(dim_p) rather than 1; rescale W_q so those logits also
        // spread O(1) instead of saturating on one token row
        p.clip.wq = Mat::seeded(cfg.dim, cfg.dim, mix_seed(s, "clip-wq"),
                                std::sqrt(3.0) / (0.7 * std::sqrt(double(cfg.dim_p))));
        if (cfg.dim_p != cfg.dim)
            p.fp_proj = Mat::seeded(cfg.dim, cfg.dim_p, mix_seed(s, "fp_proj"), 1.0 / std::sqrt(double(cfg.dim_p)));
        p.final_w = Mat::seeded(cfg.dim_out, cfg.dim_p + cfg.dim, mix_seed(s, "final_w"),
                                1.0 / std::sqrt(double(cfg.dim_p + cfg.dim)));
        p.final_b = Mat::seeded(1, cfg.dim_out, mix_seed(s, "final_b"), 0.1);
        p.penc_w = Mat::seeded(cfg.dim_p, 3, mix_seed(s, "penc_w"), 1.0);
        p.penc_b = Mat::seeded(1, cfg.dim_p, mix_seed(s, "penc_b"), 0.5);
        p.dec_w1 = Mat::seeded(cfg.hidden, 2 + cfg.dim_out, mix_seed(s, "dec_w1"),
                               1.0 / std::sqrt(double(2 + cfg.dim_out)));
        p.dec_b1 = Mat::seeded(1, cfg.hidden, mix_seed(s, "dec_b1"), 0.1);
        p.dec_w2 = Mat::seeded(3, cfg.hidden, mix_seed(s, "dec_w2"), 1.0 / std::sqrt(double(cfg.hidden)));
        p.dec_b2 = Mat::seeded(1, 3, mix_seed(s, "dec_b2"), 0.1);
        return p;
    }
};

// Named-section binary container, versioned pcc-forge/1.
inline void save_fusion_params(const FusionParams& p, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    auto write_u32 = [&](std::uint32_t v) {
        std::uint8_t b[4];
        for (int i = 0; i < 4; ++i) b[i] = std::uint8_t((v >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    out.write("PPB1", 4);
    write_u32(std::uint32_t(std::strlen(kFormatVersion)));
    out.write(kFormatVersion, std::streamsize(std::strlen(kFormatVersion)));

    std::vector<std::pair<std::string, const Mat*>> sections = {
        {"text.w", &p.text_w},   {"text.b", &p.text_b},   {"local.wq", &p.local.wq},
        {"local.wk", &p.local.wk}, {"local.wv", &p.local.wv}, {"local.wo", &p.local.wo},
        {"fuse.wq", &p.fuse.wq}, {"fuse.wk", &p.fuse.wk}, {"fuse.wv", &p.fuse.wv},
        {"fuse.wo", &p.fuse.wo}, {"clip.wq", &p.clip.wq}, {"clip.wk", &p.clip.wk},
        {"clip.wv", &p.clip.wv}, {"clip.wo", &p.clip.wo}, {"final.w", &p.final_w},
        {"final.b", &p.final_b}, {"penc.w", &p.penc_w},   {"penc.b", &p.penc_b},
        {"dec.w1", &p.dec_w1},   {"dec.b1", &p.dec_b1},   {"dec.w2", &p.dec_w2},
        {"dec.b2", &p.dec_b2},
    };
    if (!p.fp_proj.empty()) sections.push_back({"fp_proj", &p.fp_proj});

    Mat meta(1, 5);
    meta(0, 0) = double(p.config.dim);
    meta(0, 1) = double(p.config.dim_p);
    meta(0, 2) = double(p.config.dim_out);
    meta(0, 3) = double(p.config.hidden);
    meta(0, 4) = double(p.config.seed);
    sections.insert(sections.begin(), {"meta", &meta});

    write_u32(std::uint32_t(sections.size()));
    for (const auto& [name, mat] : sections) {
        write_u32(std::uint32_t(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        write_u32(std::uint32_t(mat->rows()));
        write_u32(std::uint32_t(mat->cols()));
        for (std::size_t i = 0; i < mat->size(); ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, mat->data() + i, 8);
            std::uint8_t b[8];
            for (int k = 0; k < 8; ++k) b[k] = std::uint8_t((bits >> (8 * k)) & 0xff);
            out.write(reinterpret_cast<const char*>(b), 8);
        }
    }
    if (!out) throw Error("write failed: " + path.string());
}

inline FusionParams load_fusion_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "PPB1", 4) != 0)
        throw Error(path.string() + ": bad magic (expected PPB1)");
    auto read_u32 = [&]() {
        std::uint8_t b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(path.string() + ": truncated");
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    };
    const std::uint32_t vlen = read_u32();
    std::string version(vlen, '\0');
    if (!in.read(version.data(), vlen)) throw Error(path.string() + ": truncated version");
    if (version != kFormatVersion) throw Error(path.string() + ": unsupported version '" + version + "'");

    std::map<std::string, Mat> sections;
    const std::uint32_t count = read_u32();
    for (std::uint32_t si = 0; si < count; ++si) {
        const std::uint32_t nlen = read_u32();
        std::string name(nlen, '\0');
        if (!in.read(name.data(), nlen)) throw Error(path.string() + ": truncated section name");
        const std::uint32_t rows = read_u32();
        const std::uint32_t cols = read_u32();
        Mat m(rows, cols);
        for (std::size_t i = 0; i < m.size(); ++i) {
            std::uint8_t b[8];
            if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error(path.string() + ": truncated section data");
            std::uint64_t bits = 0;
            for (int k = 7; k >= 0; --k) bits = (bits << 8) | b[k];
            std::memcpy(m.data() + i, &bits, 8);
        }
        sections.emplace(std::move(name), std::move(m));
    }

    auto take = [&](const std::string& name) {
        auto it = sections.find(name);
        if (it == sections.end()) throw Error(path.string() + ": missing section '" + name + "'");
        return it->second;
    };
    FusionParams p;
    const Mat meta = take("meta");
    p.config.dim = std::size_t(meta(0, 0));
    p.config.dim_p = std::size_t(meta(0, 1));
    p.config.dim_out = std::size_t(meta(0, 2));
    p.config.hidden = std::size_t(meta(0, 3));
    p.config.seed = std::uint64_t(meta(0, 4));
    p.text_w = take("text.w");
    p.text_b = take("text.b");
    p.local = {take("local.wq"), take("local.wk"), take("local.wv"), take("local.wo"),
               1.0 / std::sqrt(double(p.config.dim))};
    p.fuse = {take("fuse.wq"), take("fuse.wk"), take("fuse.wv"), take("fuse.wo"),
              1.0 / std::sqrt(double(p.config.dim))};
    p.clip = {take("clip.wq"), take("clip.wk"), take("clip.wv"), take("clip.wo"),
              1.0 / std::sqrt(double(p.config.dim))};
    if (sections.count("fp_proj")) p.fp_proj = take("fp_proj");
    p.final_w = take("final.w");
    p.final_b = take("final.b");
    p.penc_w = take("penc.w");
    p.penc_b = take("penc.b");
    p.dec_w1 = take("dec.w1");
    p.dec_b1 = take("dec.b1");
    p.dec_w2 = take("dec.w2");
    p.dec_b2 = take("dec.b2");
    return p;
}

// ---------------------------------------------------------------------------
// Individual graph stages (each with the backward needed for training and
// the finite-difference checks).
// ---------------------------------------------------------------------------

struct ProcessTextCache {
    Mat f_T;      // input
    Mat y;        // pre-normalization
    double norm = 0.0;
    Mat f_t;      // output
};

inline ProcessTextCache process_text(const Mat& f_T, const FusionParams& p) {
    check_shape(f_T.rows() == 1 && f_T.cols() == p.config.dim, "process_text");
    ProcessTextCache c;
    c.f_T = f_T;
    c.y = add(mul_bt(f_T, p.text_w), p.text_b);
    c.norm = l2_norm(c.y);
    if (c.norm == 0.0) throw Error("process_text: zero vector");
    c.f_t = scaled(c.y, 1.0 / c.norm);
    return c;
}

struct ProcessTextGrads {
    Mat d_f_T, d_w, d_b;
};

inline ProcessTextGrads process_text_backward(const ProcessTextCache& c, const FusionParams& p, const Mat& d_ft) {
    // y -> y/|y|: dy = (d - t (d . t)) / |y|
    double dot = 0.0;
    for (std::size_t j = 0; j < d_ft.cols(); ++j) dot += d_ft(0, j) * c.f_t(0, j);
    Mat dy(1, d_ft.cols());
    for (std::size_t j = 0; j < d_ft.cols(); ++j) dy(0, j) = (d_ft(0, j) - c.f_t(0, j) * dot) / c.norm;
    ProcessTextGrads g;
    g.d_w = mul_at(dy, c.f_T);
    g.d_b = dy;
    g.d_f_T = mul(dy, p.text_w);
    return g;
}

struct PointEncodeCache {
    Mat pre;                        // n x D_p
    std::vector<std::size_t> argmax; // per dim, lowest index among maxima
    Mat maxed;                      // 1 x D_p
    Mat f_p;                        // tanh(maxed)
};

// Per-point affine into D_p, elementwise max over points, tanh. The max
// reduction makes it exactly permutation-invariant.
inline PointEncodeCache point_encode_toy(const PointCloud& cloud, const FusionParams& p) {
    if (cloud.empty()) throw InvalidArgument("point_encode_toy: empty cloud");
    const std::size_t n = cloud.size(), dp = p.config.dim_p;
    PointEncodeCache c;
    c.pre = Mat(n, dp);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& pt = cloud[i];
        double* row = c.pre.row(i);
        for (std::size_t d = 0; d < dp; ++d)
            row[d] = p.penc_w(d, 0) * pt[0] + p.penc_w(d, 1) * pt[1] + p.penc_w(d, 2) * pt[2] + p.penc_b(0, d);
    }
    c.argmax.assign(dp, 0);
    c.maxed = Mat(1, dp);
    for (std::size_t d = 0; d < dp; ++d) {
        double best = c.pre(0, d);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (c.pre(i, d) > best) {
                best = c.pre(i, d);
                arg = i;
            }
        }
        c.maxed(0, d) = best;
        c.argmax[d] = arg;
    }
    c.f_p = Mat(1, dp);
    for (std::size_t d = 0; d < dp; ++d) c.f_p(0, d) = std::tanh(c.maxed(0, d));
    return c;
}

struct PointEncodeGrads {
    Mat d_w, d_b;
};

inline PointEncodeGrads point_encode_backward(const PointEncodeCache& c, const PointCloud& cloud,
                                              const Mat& d_fp) {
    PointEncodeGrads g;
    const std::size_t dp = c.f_p.cols();
    g.d_w = Mat(dp, 3);
    g.d_b = Mat(1, dp);
    for (std::size_t d = 0; d < dp; ++d) {
        const double t = c.f_p(0, d);
        const double dm = (1.0 - t * t) * d_fp(0, d);
        const Vec3& pt = cloud[c.argmax[d]];
        g.d_w(d, 0) += dm * pt[0];
        g.d_w(d, 1) += dm * pt[1];
        g.d_w(d, 2) += dm * pt[2];
        g.d_b(0, d) += dm;
    }
    return g;
}

struct FuseFinalCache {
    Mat concat; // 1 x (D_p + D)
    Mat f_d;    // 1 x D_out
};

inline FuseFinalCache fuse_final(const Mat& f_p, const Mat& f_cp, const FusionParams& p) {
    check_shape(f_p.rows() == 1 && f_cp.rows() == 1 && f_p.cols() == p.config.dim_p &&
                    f_cp.cols() == p.config.dim,
                "fuse_final");
    FuseFinalCache c;
    c.concat = concat_cols(f_p, f_cp);
    c.f_d = add(mul_bt(c.concat, p.final_w), p.final_b);
    return c;
}

struct FuseFinalGrads {
    Mat d_fp, d_fcp, d_w, d_b;
};

inline FuseFinalGrads fuse_final_backward(const FuseFinalCache& c, const FusionParams& p, const Mat& d_fd) {
    FuseFinalGrads g;
    g.d_w = mul_at(d_fd, c.concat);
    g.d_b = d_fd;
    const Mat d_concat = mul(d_fd, p.final_w);
    const std::size_t dp = p.config.dim_p;
    g.d_fp = Mat(1, dp);
    g.d_fcp = Mat(1, p.config.dim);
    for (std::size_t j = 0; j < dp; ++j) g.d_fp(0, j) = d_concat(0, j);
    for (std::size_t j = 0; j < p.config.dim; ++j) g.d_fcp(0, j) = d_concat(0, dp + j);
    return g;
}

// Fixed folding grid: ceil(sqrt(n))^2 cells in [-0.5, 0.5]^2, truncated to n.
inline Mat decoder_grid(std::size_t n_out) {
    std::size_t m = std::size_t(std::ceil(std::sqrt(double(n_out))));
    while (m * m < n_out) ++m;
    Mat grid(n_out, 2);
    for (std::size_t j = 0; j < n_out; ++j) {
        const std::size_t row = j / m, col = j % m;
        grid(j, 0) = (double(col) + 0.5) / double(m) - 0.5;
        grid(j, 1) = (double(row) + 0.5) / double(m) - 0.5;
    }
    return grid;
}

struct DecodeCache {
    Mat input;  // n x (2 + D_out)
    Mat hidden; // n x hidden (post-tanh)
    Mat out;    // n x 3 (post-tanh)
};

inline DecodeCache point_decode_toy(const Mat& f_d, std::size_t n_out, const FusionParams& p) {
    if (n_out < 1) throw InvalidArgument("point_decode_toy: n_out must be >= 1");
    check_shape(f_d.rows() == 1 && f_d.cols() == p.config.dim_out, "point_decode_toy");
    const Mat grid = decoder_grid(n_out);
    DecodeCache c;
    c.input = Mat(n_out, 2 + p.config.dim_out);
    for (std::size_t j = 0; j < n_out; ++j) {
        double* row = c.input.row(j);
        row[0] = grid(j, 0);
        row[1] = grid(j, 1);
        std::memcpy(row + 2, f_d.row(0), p.config.dim_out * sizeof(double));
    }
    c.hidden = mul_bt(c.input, p.dec_w1);
    for (std::size_t j = 0; j < n_out; ++j) {
        double* row = c.hidden.row(j);
        for (std::size_t h = 0; h < p.config.hidden; ++h) row[h] = std::tanh(row[h] + p.dec_b1(0, h));
    }
    c.out = mul_bt(c.hidden, p.dec_w2);
    for (std::size_t j = 0; j < n_out; ++j) {
        double* row = c.out.row(j);
        for (int k = 0; k < 3; ++k) row[k] = std::tanh(row[k] + p.dec_b2(0, k));
    }
    return c;
}

struct DecodeGrads {
    Mat d_fd, d_w1, d_b1, d_w2, d_b2;
};

inline DecodeGrads point_decode_backward(const DecodeCache& c, const FusionParams& p, const Mat& d_out) {
    const std::size_t n = c.out.rows();
    Mat t2(n, 3);
    for (std::size_t j = 0; j < n; ++j)
        for (int k = 0; k < 3; ++k) t2(j, k) = (1.0 - c.out(j, k) * c.out(j, k)) * d_out(j, k);
    DecodeGrads g;
    g.d_w2 = mul_at(t2, c.hidden);
    g.d_b2 = Mat(1, 3);
    for (std::size_t j = 0; j < n; ++j)
        for (int k = 0; k < 3; ++k) g.d_b2(0, k) += t2(j, k);
    Mat dh = mul(t2, p.dec_w2);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t h = 0; h < p.config.hidden; ++h)
            dh(j, h) *= 1.0 - c.hidden(j, h) * c.hidden(j, h);
    g.d_w1 = mul_at(dh, c.input);
    g.d_b1 = Mat(1, p.config.hidden);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t h = 0; h < p.config.hidden; ++h) g.d_b1(0, h) += dh(j, h);
    const Mat d_input = mul(dh, p.dec_w1);
    g.d_fd = Mat(1, p.config.dim_out);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t d = 0; d < p.config.dim_out; ++d) g.d_fd(0, d) += d_input(j, 2 + d);
    return g;
}

// rows in fixed order: +X, -X, +Y, -Y, +Z, -Z, text
inline Mat assemble_clip_feature(const std::array<Mat, 6>& per_view, const Mat& f_t) {
    const std::size_t dim = f_t.cols();
    Mat fc(7, dim);
    for (std::size_t v = 0; v < 6; ++v) {
        check_shape(per_view[v].rows() == 1 && per_view[v].cols() == dim, "assemble_clip_feature");
        std::memcpy(fc.row(v), per_view[v].row(0), dim * sizeof(double));
    }
    check_shape(f_t.rows() == 1, "assemble_clip_feature text");
    std::memcpy(fc.row(6), f_t.row(0), dim * sizeof(double));
    return fc;
}

// ---------------------------------------------------------------------------
// CD_L2 training loss with its gradient w.r.t. the prediction rows.
// ---------------------------------------------------------------------------

struct ChamferLoss {
    double loss = 0.0;
    Mat d_pred; // n x 3
};

inline ChamferLoss chamfer_l2_loss(const Mat& pred, const PointCloud& gt, const NnIndex& gt_index) {
    if (pred.rows() == 0) throw InvalidArgument("chamfer_l2_loss: empty prediction");
    if (gt.empty()) throw InvalidArgument("chamfer_l2_loss: empty ground truth");
    PointCloud pred_cloud;
    pred_cloud.points.reserve(pred.rows());
    for (std::size_t i = 0; i < pred.rows(); ++i)
        pred_cloud.points.push_back({pred(i, 0), pred(i, 1), pred(i, 2)});
    const NnIndex pred_index(pred_cloud);

    ChamferLoss r;
    r.d_pred = Mat(pred.rows(), 3);
    const double inv_np = 1.0 / double(pred.rows());
    const double inv_ng = 1.0 / double(gt.size());

    double sum_pg = 0.0;
    for (std::size_t i = 0; i < pred.rows(); ++i) {
        const auto nn = gt_index.nearest(pred_cloud[i]);
        const Vec3& q = gt[nn.index];
        sum_pg += nn.distance * nn.distance;
        for (int k = 0; k < 3; ++k) r.d_pred(i, k) += (pred_cloud[i][k] - q[k]) * inv_np;
    }
    double sum_gp = 0.0;
    for (std::size_t j = 0; j < gt.size(); ++j) {
        const auto nn = pred_index.nearest(gt[j]);
        const double dx = gt[j][0] - pred_cloud[nn.index][0];
        const double dy = gt[j][1] - pred_cloud[nn.index][1];
        const double dz = gt[j][2] - pred_cloud[nn.index][2];
        sum_gp += dx * dx + dy * dy + dz * dz;
        for (int k = 0; k < 3; ++k)
            r.d_pred(nn.index, k) += (pred_cloud[nn.index][k] - gt[j][k]) * inv_ng;
    }
    r.loss = 0.5 * (sum_pg * inv_np + sum_gp * inv_ng);
    return r;
}

// ---------------------------------------------------------------------------
// End-to-end forward pass.
// ---------------------------------------------------------------------------

// Named tensors of one pass, in the flow order of the architecture diagram.
struct FusionState {
    Mat f_T;                  // raw text feature
    Mat f_t;                  // processed text feature
    std::array<Mat, 6> f_g;   // global-scale per view
    std::array<Mat, 6> f_l;   // local-scale per view
    std::array<Mat, 6> f_f;   // fused per view
    Mat f_c;                  // 7 x D assembled CLIP feature
    Mat f_c_prime;            // transformed CLIP feature
    Mat f_p;                  // point feature
    Mat f_d;                  // decoder input
};

struct ForwardInputs {
    std::string id;
    std::string text;
    PointCloud cloud;                  // normalized partial cloud
    std::array<DepthMap, 6> maps;      // projected partial maps
    std::array<DepthMap, 6> inpainted; // fully occupied maps
};

// Everything about a record that does not depend on the block weights;
// computing it once makes the training loop cheap.
struct EncodedRecord {
    std::string id;
    Mat f_T;
    ProcessTextCache text;
    std::array<Mat, 6> tokens; // 4 x D per view
    std::array<Mat, 6> f_g;
    PointEncodeCache penc;
};

// Pooled embedding of an inpainted view: the global-scale missing-location
// feature. Refuses holes unless the caller explicitly allows a partial map.
inline Mat global_feature(const EncoderHandle& encoder, const DepthMap& inpainted,
                          const std::string& record_id = {}, bool allow_partial = false) {
    if (!allow_partial && !inpainted.fully_occupied())
        throw InvalidArgument("global_feature: map is not fully occupied; inpaint it or pass allow_partial");
    return encoder.encode_image(inpainted, record_id).pooled;
}

inline EncodedRecord encode_record(const ForwardInputs& in, const FusionParams& params,
                                   const EncoderHandle& encoder) {
    if (encoder.dim() != params.config.dim)
        throw InvalidArgument("encode_record: encoder dim does not match params dim");
    EncodedRecord enc;
    enc.id = in.id;
    enc.f_T = encoder.encode_text(in.text, in.id);
    enc.text = process_text(enc.f_T, params);
    for (std::size_t v = 0; v < 6; ++v) {
        const EncodedImage img = encoder.encode_image(in.maps[v], in.id);
        if (img.tokens.rows() != 4)
            throw Error("encode_record: view " + std::string(face_key(Face(v))) + " has " +
                        std::to_string(img.tokens.rows()) + " tokens, expected 4");
        enc.tokens[v] = img.tokens;
        enc.f_g[v] = global_feature(encoder, in.inpainted[v], in.id);
    }
    enc.penc = point_encode_toy(in.cloud, params);
    return enc;
}

// Stage caches of one weighted pass over an encoded record.
struct GraphTrace {
    std::array<LocalFeatureCache, 6> local;
    std::array<FuseCache, 6> fuse;
    Mat f_c;
    TransformClipCache clip;
    FuseFinalCache final;
    DecodeCache decode;
};

inline GraphTrace run_graph(const EncodedRecord& enc, const FusionParams& params, const BlockWeights& bw,
                            std::size_t n_out, bool use_block_weights) {
    GraphTrace t;
    std::array<Mat, 6> ff;
    for (std::size_t v = 0; v < 6; ++v) {
        t.local[v] = local_feature(enc.tokens[v], bw.view(v), params.local, use_block_weights);
        t.fuse[v] = fuse_local_global(t.local[v].fl, enc.f_g[v], params.fuse);
        ff[v] = t.fuse[v].ff;
    }
    t.f_c = assemble_clip_feature(ff, enc.text.f_t);
    t.clip = transform_clip(t.f_c, enc.penc.f_p, params.clip,
                            params.fp_proj.empty() ? nullptr : &params.fp_proj);
    t.final = fuse_final(enc.penc.f_p, t.clip.fcp, params);
    t.decode = point_decode_toy(t.final.f_d, n_out, params);
    return t;
}

// Gradient of a scalar loss w.r.t. all 24 block weights, given d(loss)/d(pred).
inline std::array<double, 24> graph_backward_weights(const GraphTrace& t, const FusionParams& params,
                                                     const Mat& d_pred) {
    const DecodeGrads dg = point_decode_backward(t.decode, params, d_pred);
    const FuseFinalGrads fg = fuse_final_backward(t.final, params, dg.d_fd);
    const TransformClipGrads tg = transform_clip_backward(
        t.clip, params.clip, params.fp_proj.empty() ? nullptr : &params.fp_proj, fg.d_fcp);

    std::array<double, 24> d_w{};
    for (std::size_t v = 0; v < 6; ++v) {
        Mat d_ff(1, params.config.dim);
        for (std::size_t j = 0; j < params.config.dim; ++j) d_ff(0, j) = tg.d_fc(v, j);
        const FuseGrads fu = fuse_local_global_backward(t.fuse[v], params.fuse, d_ff);
        const LocalFeatureGrads lg = local_feature_backward(t.local[v], params.local, fu.d_fl);
        for (std::size_t b = 0; b < 4; ++b) d_w[v * 4 + b] = lg.d_w[b];
    }
    return d_w;
}

struct ForwardOptions {
    std::size_t n_out = 2048;
    bool use_block_weights = true;
};

struct ForwardResult {
    PointCloud prediction;
    FusionState state;
};

inline FusionState make_state(const EncodedRecord& enc, const GraphTrace& t) {
    FusionState s;
    s.f_T = enc.f_T;
    s.f_t = enc.text.f_t;
    for (std::size_t v = 0; v < 6; ++v) {
        s.f_g[v] = enc.f_g[v];
        s.f_l[v] = t.local[v].fl;
        s.f_f[v] = t.fuse[v].ff;
    }
    s.f_c = t.f_c;
    s.f_c_prime = t.clip.fcp;
    s.f_p = enc.penc.f_p;
    s.f_d = t.final.f_d;
    return s;
}

inline ForwardResult forward(const ForwardInputs& in, const FusionParams& params, const BlockWeights& bw,
                             const EncoderHandle& encoder, const ForwardOptions& opt = {}) {
    const EncodedRecord enc = encode_record(in, params, encoder);
    const GraphTrace t = run_graph(enc, params, bw, opt.n_out, opt.use_block_weights);
    ForwardResult r;
    r.state = make_state(enc, t);
    r.prediction.points.reserve(opt.n_out);
    for (std::size_t j = 0; j < t.decode.out.rows(); ++j)
        r.prediction.points.push_back({t.decode.out(j, 0), t.decode.out(j, 1), t.decode.out(j, 2)});
    return r;
}

// Loads the on-disk triplet and prepares the inpainted maps, either via the
// diffusion fill or from externally inpainted files named like the corpus
// maps under `external_dir`.
inline ForwardInputs make_forward_inputs(const CorpusManifest& manifest, const TripletRecord& rec,
                                         std::uint32_t inpaint_iters = 0, double inpaint_eps = 1e-6,
                                         const std::optional<fs::path>& external_dir = std::nullopt) {
    ForwardInputs in;
    in.id = rec.id;
    in.text = rec.text;
    in.cloud = load_cloud(manifest.dir / rec.cloud_path);
    const std::uint32_t iters = inpaint_iters == 0 ? rec.height + rec.width : inpaint_iters;
    for (Face f : kAllFaces) {
        const std::size_t v = std::size_t(f);
        in.maps[v] = load_map(manifest.dir / rec.map_paths[v]);
        if (external_dir) {
            const fs::path p = *external_dir / (rec.id + ".face_" + std::to_string(v) + ".pdm");
            in.inpainted[v] = load_inpainted(p, rec.height, rec.width);
        } else {
            in.inpainted[v] = inpaint_naive(in.maps[v], iters, inpaint_eps);
        }
    }
    return in;
}

// ---------------------------------------------------------------------------
// Random-block training schedule: each iteration draws (record, face, block),
// clamps every other weight to 1 for the pass, and updates only the drawn
// cell by gradient descent on CD_L2. All 24 trained values persist across
// iterations and are all loaded at evaluation time.
// ---------------------------------------------------------------------------

struct TrainingRecord {
    EncodedRecord encoded;
    PointCloud gt;
    std::shared_ptr<NnIndex> gt_index;
};

inline TrainingRecord make_training_record(const ForwardInputs& in, const PointCloud& gt,
                                           const FusionParams& params, const EncoderHandle& encoder) {
    if (gt.empty()) throw InvalidArgument("make_training_record: empty ground truth");
    TrainingRecord r;
    r.encoded = encode_record(in, params, encoder);
    r.gt = gt;
    r.gt_index = std::make_shared<NnIndex>(gt);
    return r;
}

enum class GradMode { Analytic, FiniteDifference };

struct TrainStep {
    std::size_t iteration;
    std::size_t record;
    std::size_t face;
    std::size_t block;
    double loss;
    double grad;
    double weight_after;
};

struct TrainResult {
    BlockWeights weights;
    std::vector<TrainStep> trace;
};

struct TrainOptions {
    std::size_t iters = 200;
    double step = 1.0;
    std::uint64_t seed = 42;
    std::size_t n_out = 512;
    GradMode mode = GradMode::Analytic;
    double fd_step = 1e-5;
};

inline TrainResult train_block_weights(const std::vector<TrainingRecord>& records,
                                       const FusionParams& params, const TrainOptions& opt) {
    if (records.empty()) throw InvalidArgument("train_block_weights: no records");

    TrainResult result;
    Rng rng(opt.seed);

    auto loss_at = [&](const TrainingRecord& rec, const BlockWeights& bw) {
        const GraphTrace t = run_graph(rec.encoded, params, bw, opt.n_out, true);
        return chamfer_l2_loss(t.decode.out, rec.gt, *rec.gt_index).loss;
    };

    for (std::size_t it = 0; it < opt.iters; ++it) {
        const std::size_t ri = std::size_t(rng.next_below(records.size()));
        const std::size_t face = std::size_t(rng.next_below(6));
        const std::size_t block = std::size_t(rng.next_below(4));
        const std::size_t cell = BlockWeights::cell(face, block);
        const TrainingRecord& rec = records[ri];

        // only the drawn cell is active; the rest are clamped to the default
        BlockWeights pass;
        pass.w[cell] = result.weights.w[cell];

        double grad = 0.0;
        double loss = 0.0;
        if (opt.mode == GradMode::Analytic) {
            const GraphTrace t = run_graph(rec.encoded, params, pass, opt.n_out, true);
            const ChamferLoss cl = chamfer_l2_loss(t.decode.out, rec.gt, *rec.gt_index);
            loss = cl.loss;
            grad = graph_backward_weights(t, params, cl.d_pred)[cell];
        } else {
            loss = loss_at(rec, pass);
            BlockWeights hi = pass, lo = pass;
            hi.w[cell] += opt.fd_step;
            lo.w[cell] -= opt.fd_step;
            grad = (loss_at(rec, hi) - loss_at(rec, lo)) / (2.0 * opt.fd_step);
        }

        result.weights.w[cell] -= opt.step * grad;
        result.trace.push_back({it, ri, face, block, loss, grad, result.weights.w[cell]});
    }
    return result;
}

} // namespace pccf
