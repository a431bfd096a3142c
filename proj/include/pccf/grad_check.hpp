#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pccf/fusion.hpp"
#include "pccf/inpaint.hpp"
#include "pccf/projection.hpp"

namespace pccf {

// Central finite differences against the analytic gradients of every
// differentiable fusion op. Checks run at small dimensions in double
// precision; the error metric is |a - fd| / max(1, |a|, |fd|), i.e. relative
// for large components and absolute near zero where FD roundoff dominates.

struct GradCheckResult {
    std::string op;
    double max_err = 0.0;
    std::string worst_coord;
    double tolerance = 1e-6;
    bool pass = false;
};

namespace gradcheck_detail {

struct Group {
    std::string name;
    double* data = nullptr;
    std::size_t n = 0;
    std::vector<double> analytic;
};

struct CheckSpec {
    std::string op;
    double tolerance = 1e-6;
    std::function<double()> loss;
    std::vector<Group> groups;
    std::shared_ptr<void> state; // keeps the op inputs alive
};

inline double rel_err(double a, double fd) {
    return std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
}

inline GradCheckResult run_spec(CheckSpec& spec, double h, bool corrupt) {
    if (corrupt) {
        // +10% on the largest-gradient entry: the negative control
        Group* gmax = nullptr;
        std::size_t imax = 0;
        double best = -1.0;
        for (Group& g : spec.groups) {
            for (std::size_t i = 0; i < g.n; ++i) {
                if (std::abs(g.analytic[i]) > best) {
                    best = std::abs(g.analytic[i]);
                    gmax = &g;
                    imax = i;
                }
            }
        }
        if (gmax) gmax->analytic[imax] *= 1.1;
    }

    GradCheckResult result;
    result.op = spec.op;
    result.tolerance = spec.tolerance;
    for (Group& g : spec.groups) {
        for (std::size_t i = 0; i < g.n; ++i) {
            const double saved = g.data[i];
            g.data[i] = saved + h;
            const double fp = spec.loss();
            g.data[i] = saved - h;
            const double fm = spec.loss();
            g.data[i] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double err = rel_err(g.analytic[i], fd);
            if (err > result.max_err) {
                result.max_err = err;
                result.worst_coord = g.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    result.pass = result.max_err <= spec.tolerance;
    return result;
}

// d(sum of squares)/d(out)
inline Mat two_times(const Mat& m) { return scaled(m, 2.0); }

inline CheckSpec make_linear(std::uint64_t seed) {
    struct State {
        FusionParams params;
        Mat fp, fcp;
    };
    auto st = std::make_shared<State>();
    FusionConfig cfg;
    cfg.dim = 16;
    cfg.dim_p = 12;
    cfg.dim_out = 10;
    cfg.hidden = 8;
    cfg.seed = seed;
    st->params = FusionParams::seeded(cfg);
    st->fp = Mat::seeded(1, cfg.dim_p, mix_seed(seed, "fp"), 1.0);
    st->fcp = Mat::seeded(1, cfg.dim, mix_seed(seed, "fcp"), 1.0);

    CheckSpec spec;
    spec.op = "linear";
    spec.tolerance = 1e-10;
    spec.state = st;
    spec.loss = [st]() { return sum_squares(fuse_final(st->fp, st->fcp, st->params).f_d); };

    const FuseFinalCache c = fuse_final(st->fp, st->fcp, st->params);
    const FuseFinalGrads g = fuse_final_backward(c, st->params, two_times(c.f_d));
    auto add_group = [&](const std::string& name, Mat& storage, const Mat& grad) {
        spec.groups.push_back({name, storage.data(), storage.size(),
                               std::vector<double>(grad.data(), grad.data() + grad.size())});
    };
    add_group("f_p", st->fp, g.d_fp);
    add_group("f_c'", st->fcp, g.d_fcp);
    add_group("final.w", st->params.final_w, g.d_w);
    add_group("final.b", st->params.final_b, g.d_b);
    return spec;
}

inline CheckSpec make_text(std::uint64_t seed) {
    struct State {
        FusionParams params;
        Mat f_T;
    };
    auto st = std::make_shared<State>();
    FusionConfig cfg;
    cfg.dim = 16;
    cfg.seed = seed;
    st->params = FusionParams::seeded(cfg);
    st->f_T = l2_normalized(Mat::seeded(1, cfg.dim, mix_seed(seed, "ft"), 1.0));

    CheckSpec spec;
    spec.op = "text";
    spec.state = st;
    spec.loss = [st]() { return sum_squares(process_text(st->f_T, st->params).f_t); };

    const ProcessTextCache c = process_text(st->f_T, st->params);
    const ProcessTextGrads g = process_text_backward(c, st->params, two_times(c.f_t));
    auto add_group = [&](const std::string& name, Mat& storage, const Mat& grad) {
        spec.groups.push_back({name, storage.data(), storage.size(),
                               std::vector<double>(grad.data(), grad.data() + grad.size())});
    };
    add_group("f_T", st->f_T, g.d_f_T);
    add_group("text.w", st->params.text_w, g.d_w);
    add_group("text.b", st->params.text_b, g.d_b);
    return spec;
}

inline CheckSpec make_local(std::uint64_t seed) {
    struct State {
        AttentionParams p;
        Mat tokens;
        std::array<double, 4> w;
    };
    auto st = std::make_shared<State>();
    const std::size_t dim = 16;
    st->p = AttentionParams::seeded(dim, mix_seed(seed, "p"));
    // scale keeps the largest gradients O(1) so a +10% corruption is
    // unmistakable against the 1e-2 bar
    st->tokens = Mat::seeded(4, dim, mix_seed(seed, "tokens"), 2.0);
    Rng rng(mix_seed(seed, "w"));
    for (double& x : st->w) x = 0.5 + rng.next_unit();

    CheckSpec spec;
    spec.op = "local";
    spec.state = st;
    spec.loss = [st]() { return sum_squares(local_feature(st->tokens, st->w, st->p).fl); };

    const LocalFeatureCache c = local_feature(st->tokens, st->w, st->p);
    const LocalFeatureGrads g = local_feature_backward(c, st->p, two_times(c.fl));
    auto add_group = [&](const std::string& name, Mat& storage, const Mat& grad) {
        spec.groups.push_back({name, storage.data(), storage.size(),
                               std::vector<double>(grad.data(), grad.data() + grad.size())});
    };
    spec.groups.push_back({"w", st->w.data(), 4, {g.d_w[0], g.d_w[1], g.d_w[2], g.d_w[3]}});
    add_group("tokens", st->tokens, g.d_tokens);
    add_group("wq", st->p.wq, g.d_p.d_wq);
    add_group("wk", st->p.wk, g.d_p.d_wk);
    add_group("wv", st->p.wv, g.d_p.d_wv);
    add_group("wo", st->p.wo, g.d_p.d_wo);
    return spec;
}

inline CheckSpec make_fuse(std::uint64_t seed) {
    struct State {
        AttentionParams p;
        Mat fl, fg;
    };
    auto st = std::make_shared<State>();
    const std::size_t dim = 16;
    st->p = AttentionParams::seeded(dim, mix_seed(seed, "p"));
    st->fl = Mat::seeded(1, dim, mix_seed(seed, "fl"), 1.0);
    st->fg = Mat::seeded(1, dim, mix_seed(seed, "fg"), 1.0);

    CheckSpec spec;
    spec.op = "fuse";
    spec.state = st;
    spec.loss = [st]() { return sum_squares(fuse_local_global(st->fl, st->fg, st->p).ff); };

    const FuseCache c = fuse_local_global(st->fl, st->fg, st->p);
    const FuseGrads g = fuse_local_global_backward(c, st->p, two_times(c.ff));
    auto add_group = [&](const std::string& name, Mat& storage, const Mat& grad) {
        spec.groups.push_back({name, storage.data(), storage.size(),
                               std::vector<double>(grad.data(), grad.data() + grad.size())});
    };
    add_group("f_l", st->fl, g.d_fl);
    add_group("f_g", st->fg, g.d_fg);
    add_group("wq", st->p.wq, g.d_p.d_wq);
    add_group("wk", st->p.wk, g.d_p.d_wk);
    add_group("wv", st->p.wv, g.d_p.d_wv);
    add_group("wo", st->p.wo, g.d_p.d_wo);
    return spec;
}

inline CheckSpec make_transform(std::uint64_t seed) {
    struct State {
        AttentionParams p;
        Mat fc, fp, proj;
    };
    auto st = std::make_shared<State>();
    const std::size_t dim = 16, dim_p = 12;
    st->p = AttentionParams::seeded(dim, mix_seed(seed, "p"));
    st->fc = Mat::seeded(7, dim, mix_seed(seed, "fc"), 1.0);
    st->fp = Mat::seeded(1, dim_p, mix_seed(seed, "fp"), 1.0);
    st->proj = Mat::seeded(dim, dim_p, mix_seed(seed, "proj"), 1.0 / std::sqrt(double(dim_p)));

    CheckSpec spec;
    spec.op = "transform";
    spec.state = st;
    spec.loss = [st]() { return sum_squares(transform_clip(st->fc, st->fp, st->p, &st->proj).fcp); };

    const TransformClipCache c = transform_clip(st->fc, st->fp, st->p, &st->proj);
    const TransformClipGrads g = transform_clip_backward(c, st->p, &st->proj, two_times(c.fcp));
    auto add_group = [&](const std::string& name, Mat& storage, const Mat& grad) {
        spec.groups.push_back({name, storage.data(), storage.size(),
                               std::vector<double>(grad.data(), grad.data() + grad.size())});
    };
    add_group("f_c", st->fc, g.d_fc);
    add_group("f_p", st->fp, g.d_fp);
    add_group("fp_proj", st->proj, g.d_proj);
    add_group("wq", st->p.wq, g.d_p.d_wq);
    add_group("wk", st->p.wk, g.d_p.d_wk);
    add_group("wv", st->p.wv, g.d_p.d_wv);
    add_group("wo", st->p.wo, g.d_p.d_wo);
    return spec;
}

inline CheckSpec make_pointenc(std::uint64_t seed) {
    struct State {
        FusionParams params;
        PointCloud cloud;
    };
    auto st = std::make_shared<State>();
    FusionConfig cfg;
    cfg.dim = 16;
    cfg.dim_p = 12;
    cfg.seed = seed;
    st->params = FusionParams::seeded(cfg);

    // retry seeds until every per-dim argmax has a clear margin, so the
    // max() subgradient matches FD
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(mix_seed(seed, attempt));
        st->cloud.points.clear();
        for (int i = 0; i < 8; ++i)
            st->cloud.points.push_back({rng.next_sym() * 0.5, rng.next_sym() * 0.5, rng.next_sym() * 0.5});
        const PointEncodeCache c = point_encode_toy(st->cloud, st->params);
        double min_gap = 1e30;
        for (std::size_t d = 0; d < cfg.dim_p; ++d) {
            double top = -1e30, second = -1e30;
            for (std::size_t i = 0; i < st->cloud.size(); ++i) {
                const double v = c.pre(i, d);
                if (v > top) {
                    second = top;
                    top = v;
                } else if (v > second) {
                    second = v;
                }
            }
            min_gap = std::min(min_gap, top - second);
        }
        if (min_gap > 1e-3) break;
    }

    CheckSpec spec;
    spec.op = "pointenc";
    spec.state = st;
    spec.loss = [st]() { return sum_squares(point_encode_toy(st->cloud, st->params).f_p); };

    const PointEncodeCache c = point_encode_toy(st->cloud, st->params);
    const PointEncodeGrads g = point_encode_backward(c, st->cloud, two_times(c.f_p));
    auto add_group = [&](const std::string& name, Mat& storage, const Mat& grad) {
        spec.groups.push_back({name, storage.data(), storage.size(),
                               std::vector<double>(grad.data(), grad.data() + grad.size())});
    };
    add_group("penc.w", st->params.penc_w, g.d_w);
    add_group("penc.b", st->params.penc_b, g.d_b);
    return spec;
}

inline CheckSpec make_decoder(std::uint64_t seed) {
    struct State {
        FusionParams params;
        Mat f_d;
        std::size_t n_out = 9;
    };
    auto st = std::make_shared<State>();
    FusionConfig cfg;
    cfg.dim = 16;
    cfg.dim_p = 16;
    cfg.dim_out = 10;
    cfg.hidden = 8;
    cfg.seed = seed;
    st->params = FusionParams::seeded(cfg);
    st->f_d = Mat::seeded(1, cfg.dim_out, mix_seed(seed, "fd"), 1.0);

    CheckSpec spec;
    spec.op = "decoder";
    spec.state = st;
    spec.loss = [st]() { return sum_squares(point_decode_toy(st->f_d, st->n_out, st->params).out); };

    const DecodeCache c = point_decode_toy(st->f_d, st->n_out, st->params);
    const DecodeGrads g = point_decode_backward(c, st->params, two_times(c.out));
    auto add_group = [&](const std::string& name, Mat& storage, const Mat& grad) {
        spec.groups.push_back({name, storage.data(), storage.size(),
                               std::vector<double>(grad.data(), grad.data() + grad.size())});
    };
    add_group("f_d", st->f_d, g.d_fd);
    add_group("dec.w1", st->params.dec_w1, g.d_w1);
    add_group("dec.b1", st->params.dec_b1, g.d_b1);
    add_group("dec.w2", st->params.dec_w2, g.d_w2);
    add_group("dec.b2", st->params.dec_b2, g.d_b2);
    return spec;
}

inline CheckSpec make_chamfer(std::uint64_t seed) {
    struct State {
        Mat pred;
        PointCloud gt;
        std::shared_ptr<NnIndex> gt_index;
    };
    auto st = std::make_shared<State>();

    // retry until all nearest-neighbor assignments (both directions) have a
    // solid margin, so FD does not straddle an assignment flip
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(mix_seed(seed, attempt));
        st->pred = Mat(7, 3);
        for (std::size_t i = 0; i < st->pred.size(); ++i) st->pred.data()[i] = rng.next_sym() * 0.5;
        st->gt.points.clear();
        for (int i = 0; i < 6; ++i)
            st->gt.points.push_back({rng.next_sym() * 0.5, rng.next_sym() * 0.5, rng.next_sym() * 0.5});

        auto margin_ok = [&]() {
            auto margin = [&](const Vec3& q, const std::vector<Vec3>& pts) {
                double best = 1e30, second = 1e30;
                for (const Vec3& p : pts) {
                    const double d2 = squared_dist(q, p);
                    if (d2 < best) {
                        second = best;
                        best = d2;
                    } else if (d2 < second) {
                        second = d2;
                    }
                }
                return second - best;
            };
            std::vector<Vec3> pred_pts;
            for (std::size_t i = 0; i < st->pred.rows(); ++i)
                pred_pts.push_back({st->pred(i, 0), st->pred(i, 1), st->pred(i, 2)});
            for (const Vec3& p : pred_pts)
                if (margin(p, st->gt.points) < 1e-3) return false;
            for (const Vec3& q : st->gt.points)
                if (margin(q, pred_pts) < 1e-3) return false;
            return true;
        };
        if (margin_ok()) break;
    }
    st->gt_index = std::make_shared<NnIndex>(st->gt);

    CheckSpec spec;
    spec.op = "chamfer";
    spec.state = st;
    spec.loss = [st]() { return chamfer_l2_loss(st->pred, st->gt, *st->gt_index).loss; };

    const ChamferLoss cl = chamfer_l2_loss(st->pred, st->gt, *st->gt_index);
    spec.groups.push_back({"pred", st->pred.data(), st->pred.size(),
                           std::vector<double>(cl.d_pred.data(), cl.d_pred.data() + cl.d_pred.size())});
    return spec;
}

// Full training path: d(CD_L2 loss)/d(w) for all 24 block weights through
// encoder stubs, both attentions, the clip transform, the final fusion and
// the decoder.
inline CheckSpec make_pipeline(std::uint64_t seed) {
    struct State {
        FusionParams params;
        EncodedRecord enc;
        PointCloud gt;
        std::shared_ptr<NnIndex> gt_index;
        BlockWeights bw;
        std::size_t n_out = 16;
    };
    auto st = std::make_shared<State>();

    FusionConfig cfg;
    cfg.dim = 16;
    cfg.dim_p = 16;
    cfg.dim_out = 12;
    cfg.hidden = 8;
    cfg.seed = mix_seed(seed, "params");
    st->params = FusionParams::seeded(cfg);

    Rng rng(mix_seed(seed, "cloud"));
    PointCloud raw;
    for (int i = 0; i < 48; ++i) {
        Vec3 p{rng.next_sym() * 0.5, rng.next_sym() * 0.5, rng.next_sym() * 0.5};
        if (p[0] > 0 && p[1] > 0 && p[2] > 0) continue; // carve a hole
        raw.points.push_back(p);
    }
    auto [cloud, transform] = normalize_to_unit(raw);

    ForwardInputs in;
    in.id = "gradcheck";
    in.text = generate_text("car");
    in.cloud = cloud;
    const DepthMapSet maps = project(cloud, 8, 8, transform);
    for (std::size_t v = 0; v < 6; ++v) {
        in.maps[v] = maps.maps[v];
        in.inpainted[v] = inpaint_naive(maps.maps[v], 64, 1e-9);
    }
    const EncoderHandle enc = EncoderHandle::stub(cfg.dim, mix_seed(seed, "encoder"));
    st->enc = encode_record(in, st->params, enc);

    for (int i = 0; i < 40; ++i)
        st->gt.points.push_back({rng.next_sym() * 0.5, rng.next_sym() * 0.5, rng.next_sym() * 0.5});
    st->gt_index = std::make_shared<NnIndex>(st->gt);

    Rng wrng(mix_seed(seed, "weights"));
    for (double& w : st->bw.w) w = 0.75 + 0.5 * wrng.next_unit();

    CheckSpec spec;
    spec.op = "pipeline";
    spec.state = st;
    spec.loss = [st]() {
        const GraphTrace t = run_graph(st->enc, st->params, st->bw, st->n_out, true);
        return chamfer_l2_loss(t.decode.out, st->gt, *st->gt_index).loss;
    };

    const GraphTrace t = run_graph(st->enc, st->params, st->bw, st->n_out, true);
    const ChamferLoss cl = chamfer_l2_loss(t.decode.out, st->gt, *st->gt_index);
    const std::array<double, 24> d_w = graph_backward_weights(t, st->params, cl.d_pred);
    spec.groups.push_back(
        {"block_weights", st->bw.w.data(), 24, std::vector<double>(d_w.begin(), d_w.end())});
    return spec;
}

} // namespace gradcheck_detail

inline const std::vector<std::string>& grad_check_ops() {
    static const std::vector<std::string> ops = {"linear",   "text",    "local",   "fuse", "transform",
                                                 "pointenc", "decoder", "chamfer", "pipeline"};
    return ops;
}

inline GradCheckResult grad_check(const std::string& op, std::uint64_t seed = 7, double h = 1e-5,
                                  bool corrupt = false) {
    using namespace gradcheck_detail;
    CheckSpec spec;
    if (op == "linear") spec = make_linear(seed);
    else if (op == "text") spec = make_text(seed);
    else if (op == "local") spec = make_local(seed);
    else if (op == "fuse") spec = make_fuse(seed);
    else if (op == "transform") spec = make_transform(seed);
    else if (op == "pointenc") spec = make_pointenc(seed);
    else if (op == "decoder") spec = make_decoder(seed);
    else if (op == "chamfer") spec = make_chamfer(seed);
    else if (op == "pipeline") spec = make_pipeline(seed);
    else throw InvalidArgument("grad_check: unknown op '" + op + "'");
    return run_spec(spec, h, corrupt);
}

} // namespace pccf
