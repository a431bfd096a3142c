#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "pccf/error.hpp"
#include "pccf/rng.hpp"
#include "pccf/tensor.hpp"

namespace pccf {

// Shared Q/K/V/O projection weights for one cross-attention site. All four
// matrices are D x D and apply to row vectors as x * W^T.
struct AttentionParams {
    Mat wq, wk, wv, wo;
    double scale = 1.0;

    static AttentionParams seeded(std::size_t dim, std::uint64_t seed) {
        AttentionParams p;
        // unit-norm inputs: sqrt(3) entries in the q/k projections give the
        // scaled logits an O(1) spread at any dim, so the softmax neither
        // collapses to uniform nor saturates; sqrt(3/dim) makes the value
        // path roughly norm-preserving, keeping the assembled token rows on
        // a common scale
        const double qk = std::sqrt(3.0);
        const double vo = std::sqrt(3.0 / double(dim));
        p.wq = Mat::seeded(dim, dim, mix_seed(seed, "wq"), qk);
        p.wk = Mat::seeded(dim, dim, mix_seed(seed, "wk"), qk);
        p.wv = Mat::seeded(dim, dim, mix_seed(seed, "wv"), vo);
        p.wo = Mat::seeded(dim, dim, mix_seed(seed, "wo"), vo);
        p.scale = 1.0 / std::sqrt(double(dim));
        return p;
    }

    static AttentionParams identity(std::size_t dim) {
        AttentionParams p;
        p.wq = p.wk = p.wv = p.wo = Mat::identity(dim);
        p.scale = 1.0 / std::sqrt(double(dim));
        return p;
    }
};

struct AttentionGrads {
    Mat d_wq, d_wk, d_wv, d_wo;
};

// ---------------------------------------------------------------------------
// local_feature: block-weighted cross-attention over the 4 block tokens of
// one view. The learnable per-block weights scale the key tokens before the
// W_k projection: w_b controls how strongly every query attends to block
// b's content, and all-ones weights reduce bit-exactly to plain unweighted
// attention.
//   Q = T W_q^T, K = diag(w) T W_k^T, V = T W_v^T
//   A = softmax(Q K^T * scale), O = A V
//   F_l = mean_rows(O) W_o^T          (not normalized)
// ---------------------------------------------------------------------------

struct LocalFeatureCache {
    Mat tokens;     // 4 x D
    std::array<double, 4> w{1, 1, 1, 1};
    bool weighted = true;
    Mat tw;         // weighted tokens (key path)
    Mat q, k, v;    // 4 x D
    Mat attn;       // 4 x 4
    Mat out_tokens; // 4 x D
    Mat pooled;     // 1 x D
    Mat fl;         // 1 x D
};

inline LocalFeatureCache local_feature(const Mat& tokens, const std::array<double, 4>& w,
                                       const AttentionParams& p, bool use_weights = true) {
    check_shape(tokens.rows() == 4 && tokens.cols() == p.wq.cols(), "local_feature tokens");
    for (double x : w)
        if (!std::isfinite(x)) throw InvalidArgument("local_feature: non-finite weight");

    LocalFeatureCache c;
    c.tokens = tokens;
    c.w = w;
    c.weighted = use_weights;
    c.tw = tokens;
    if (use_weights) {
        for (std::size_t b = 0; b < 4; ++b) {
            double* row = c.tw.row(b);
            for (std::size_t j = 0; j < c.tw.cols(); ++j) row[j] = w[b] * row[j];
        }
    }
    c.q = mul_bt(tokens, p.wq);
    c.k = mul_bt(c.tw, p.wk);
    c.v = mul_bt(tokens, p.wv);
    c.attn = softmax_rows(scaled(mul_bt(c.q, c.k), p.scale));
    c.out_tokens = mul(c.attn, c.v);
    c.pooled = mean_rows(c.out_tokens);
    c.fl = mul_bt(c.pooled, p.wo);
    return c;
}

struct LocalFeatureGrads {
    Mat d_tokens;
    std::array<double, 4> d_w{0, 0, 0, 0};
    AttentionGrads d_p;
};

inline LocalFeatureGrads local_feature_backward(const LocalFeatureCache& c, const AttentionParams& p,
                                                const Mat& d_fl) {
    LocalFeatureGrads g;
    // fl = pooled W_o^T
    g.d_p.d_wo = mul_at(d_fl, c.pooled);       // D x D   (rows: out, cols: in)
    const Mat d_pooled = mul(d_fl, p.wo);      // 1 x D
    // pooled = mean of the 4 out_token rows
    Mat d_out(4, c.tokens.cols());
    for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t j = 0; j < d_out.cols(); ++j) d_out(b, j) = d_pooled(0, j) * 0.25;
    // out = A V
    const Mat d_attn = mul_bt(d_out, c.v);
    Mat d_v = mul_at(c.attn, d_out);
    // A = softmax(S), S = Q K^T * scale
    const Mat d_s = scaled(softmax_backward(c.attn, d_attn), p.scale);
    const Mat d_q = mul(d_s, c.k);
    const Mat d_k = mul_at(d_s, c.q);
    // projections (the key path carries the block weights)
    g.d_p.d_wq = mul_at(d_q, c.tokens);
    g.d_p.d_wk = mul_at(d_k, c.tw);
    g.d_p.d_wv = mul_at(d_v, c.tokens);
    const Mat d_tw = mul(d_k, p.wk);
    g.d_tokens = add(mul(d_q, p.wq), mul(d_v, p.wv));
    if (c.weighted) {
        for (std::size_t b = 0; b < 4; ++b) {
            double dw = 0.0;
            const double* trow = c.tokens.row(b);
            const double* drow = d_tw.row(b);
            double* grow = g.d_tokens.row(b);
            for (std::size_t j = 0; j < c.tokens.cols(); ++j) {
                dw += drow[j] * trow[j];
                grow[j] += c.w[b] * drow[j];
            }
            g.d_w[b] = dw;
        }
    } else {
        accumulate(g.d_tokens, d_tw);
    }
    return g;
}

// ---------------------------------------------------------------------------
// fuse_local_global: single-query cross-attention fusing one view's local
// and global features; F_g is the query, keys/values span {F_l, F_g}.
//   q = F_g W_q^T, K = [F_l; F_g] W_k^T, V = [F_l; F_g] W_v^T
//   F_f = softmax(q K^T * scale) V W_o^T
// After the projections that is exactly two matrix products: q K^T, then
// attn V.
// ---------------------------------------------------------------------------

struct FuseCache {
    Mat fl, fg;   // 1 x D each
    Mat kv_in;    // 2 x D: rows {fl, fg}
    Mat q;        // 1 x D
    Mat k, v;     // 2 x D
    Mat attn;     // 1 x 2
    Mat mixed;    // 1 x D
    Mat ff;       // 1 x D
};

inline FuseCache fuse_local_global(const Mat& fl, const Mat& fg, const AttentionParams& p) {
    check_shape(fl.rows() == 1 && fg.rows() == 1 && fl.cols() == fg.cols() && fl.cols() == p.wq.cols(),
                "fuse_local_global");
    FuseCache c;
    c.fl = fl;
    c.fg = fg;
    c.kv_in = vstack(fl, fg);
    c.q = mul_bt(fg, p.wq);
    c.k = mul_bt(c.kv_in, p.wk);
    c.v = mul_bt(c.kv_in, p.wv);
    c.attn = softmax_rows(scaled(mul_bt(c.q, c.k), p.scale));
    c.mixed = mul(c.attn, c.v);
    c.ff = mul_bt(c.mixed, p.wo);
    return c;
}

struct FuseGrads {
    Mat d_fl, d_fg;
    AttentionGrads d_p;
};

inline FuseGrads fuse_local_global_backward(const FuseCache& c, const AttentionParams& p, const Mat& d_ff) {
    FuseGrads g;
    g.d_p.d_wo = mul_at(d_ff, c.mixed);
    const Mat d_mixed = mul(d_ff, p.wo);
    const Mat d_attn = mul_bt(d_mixed, c.v);
    const Mat d_v = mul_at(c.attn, d_mixed);
    const Mat d_s = scaled(softmax_backward(c.attn, d_attn), p.scale);
    const Mat d_q = mul(d_s, c.k);
    const Mat d_k = mul_at(d_s, c.q);
    g.d_p.d_wq = mul_at(d_q, c.fg);
    g.d_p.d_wk = mul_at(d_k, c.kv_in);
    g.d_p.d_wv = mul_at(d_v, c.kv_in);
    const Mat d_kv = add(mul(d_k, p.wk), mul(d_v, p.wv)); // 2 x D
    g.d_fl = Mat(1, c.fl.cols());
    g.d_fg = mul(d_q, p.wq); // query path
    for (std::size_t j = 0; j < c.fl.cols(); ++j) {
        g.d_fl(0, j) = d_kv(0, j);
        g.d_fg(0, j) += d_kv(1, j);
    }
    return g;
}

// ---------------------------------------------------------------------------
// transform_clip: the point feature queries the 7 assembled CLIP tokens.
//   q = proj(F_p) W_q^T, K = F_c W_k^T, V = F_c W_v^T
//   F_c' = softmax(q K^T * scale) V W_o^T   (single query, already pooled)
// proj is a seeded D x D_p matrix when D_p != D, identity otherwise.
// ---------------------------------------------------------------------------

struct TransformClipCache {
    Mat fc;     // 7 x D
    Mat fp;     // 1 x D_p
    Mat fp_d;   // 1 x D (projected)
    bool projected = false;
    Mat q;      // 1 x D
    Mat k, v;   // 7 x D
    Mat attn;   // 1 x 7
    Mat mixed;  // 1 x D
    Mat fcp;    // 1 x D
};

inline TransformClipCache transform_clip(const Mat& fc, const Mat& fp, const AttentionParams& p,
                                         const Mat* fp_proj = nullptr) {
    check_shape(fc.cols() == p.wq.cols() && fp.rows() == 1, "transform_clip");
    TransformClipCache c;
    c.fc = fc;
    c.fp = fp;
    if (fp.cols() == fc.cols()) {
        c.fp_d = fp;
    } else {
        if (fp_proj == nullptr) throw InvalidArgument("transform_clip: D_p != D requires a projection");
        check_shape(fp_proj->rows() == fc.cols() && fp_proj->cols() == fp.cols(), "transform_clip proj");
        c.fp_d = mul_bt(fp, *fp_proj);
        c.projected = true;
    }
    c.q = mul_bt(c.fp_d, p.wq);
    c.k = mul_bt(fc, p.wk);
    c.v = mul_bt(fc, p.wv);
    c.attn = softmax_rows(scaled(mul_bt(c.q, c.k), p.scale));
    c.mixed = mul(c.attn, c.v);
    c.fcp = mul_bt(c.mixed, p.wo);
    return c;
}

struct TransformClipGrads {
    Mat d_fc, d_fp;
    Mat d_proj; // empty unless a projection was used
    AttentionGrads d_p;
};

inline TransformClipGrads transform_clip_backward(const TransformClipCache& c, const AttentionParams& p,
                                                  const Mat* fp_proj, const Mat& d_fcp) {
    TransformClipGrads g;
    g.d_p.d_wo = mul_at(d_fcp, c.mixed);
    const Mat d_mixed = mul(d_fcp, p.wo);
    const Mat d_attn = mul_bt(d_mixed, c.v);
    const Mat d_v = mul_at(c.attn, d_mixed);
    const Mat d_s = scaled(softmax_backward(c.attn, d_attn), p.scale);
    const Mat d_q = mul(d_s, c.k);
    const Mat d_k = mul_at(d_s, c.q);
    g.d_p.d_wq = mul_at(d_q, c.fp_d);
    g.d_p.d_wk = mul_at(d_k, c.fc);
    g.d_p.d_wv = mul_at(d_v, c.fc);
    g.d_fc = add(mul(d_k, p.wk), mul(d_v, p.wv));
    const Mat d_fp_d = mul(d_q, p.wq);
    if (c.projected) {
        g.d_proj = mul_at(d_fp_d, c.fp);
        g.d_fp = mul(d_fp_d, *fp_proj);
    } else {
        g.d_fp = d_fp_d;
    }
    return g;
}

} // namespace pccf
