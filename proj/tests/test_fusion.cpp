#include <doctest.h>

#include <algorithm>

#include "pccf/fusion.hpp"
#include "pccf/grad_check.hpp"
#include "pccf/metrics.hpp"
#include "support.hpp"

using namespace pccf;
using testsup::TempDir;

namespace {

FusionConfig small_config(std::uint64_t seed = 5) {
    FusionConfig cfg;
    cfg.dim = 16;
    cfg.dim_p = 16;
    cfg.dim_out = 12;
    cfg.hidden = 8;
    cfg.seed = seed;
    return cfg;
}

ForwardInputs small_inputs(std::uint64_t seed, const std::string& id = "fix-0") {
    auto [cloud, transform] = normalize_to_unit(testsup::cube_surface(seed, 200, true));
    ForwardInputs in;
    in.id = id;
    in.text = generate_text("car");
    in.cloud = cloud;
    const DepthMapSet maps = project(cloud, 8, 8, transform);
    for (std::size_t v = 0; v < 6; ++v) {
        in.maps[v] = maps.maps[v];
        in.inpainted[v] = inpaint_naive(maps.maps[v], 32, 1e-9);
    }
    return in;
}

} // namespace

TEST_CASE("block weights default to ones and round trip through BW24") {
    TempDir tmp("bw");
    BlockWeights bw;
    for (double w : bw.w) CHECK(w == 1.0);
    Rng rng(3);
    for (double& w : bw.w) w = rng.next_sym() * 2.0;
    save_block_weights(bw, tmp.path() / "w.bw24");
    const BlockWeights back = load_block_weights(tmp.path() / "w.bw24");
    CHECK(back.w == bw.w);
    const std::string bytes = testsup::read_file(tmp.path() / "w.bw24");
    CHECK(bytes.size() == 4 + 24 * 8);
    CHECK(bytes.substr(0, 4) == "BW24");
}

TEST_CASE("fusion params round trip through the bundle format") {
    TempDir tmp("ppb");
    FusionConfig cfg = small_config(9);
    cfg.dim_p = 12; // exercise the projection section
    const FusionParams p = FusionParams::seeded(cfg);
    save_fusion_params(p, tmp.path() / "p.ppb");
    const FusionParams back = load_fusion_params(tmp.path() / "p.ppb");
    CHECK(back.config.dim == cfg.dim);
    CHECK(back.config.dim_p == cfg.dim_p);
    CHECK(back.text_w == p.text_w);
    CHECK(back.local.wq == p.local.wq);
    CHECK(back.fuse.wo == p.fuse.wo);
    CHECK(back.clip.wv == p.clip.wv);
    CHECK(back.fp_proj == p.fp_proj);
    CHECK(back.final_w == p.final_w);
    CHECK(back.dec_w2 == p.dec_w2);
    CHECK(back.local.scale == doctest::Approx(p.local.scale).epsilon(1e-15));
}

TEST_CASE("process_text stays unit norm and is deterministic") {
    const FusionParams p = FusionParams::seeded(small_config());
    const EncoderHandle enc = EncoderHandle::stub(16, 77);
    const Mat ft = enc.encode_text("There is car point cloud projection map");
    const ProcessTextCache a = process_text(ft, p);
    const ProcessTextCache b = process_text(ft, p);
    CHECK(a.f_t == b.f_t);
    CHECK(std::abs(l2_norm(a.f_t) - 1.0) <= 1e-12);
}

TEST_CASE("point_encode_toy is exactly permutation invariant") {
    const FusionParams p = FusionParams::seeded(small_config());
    PointCloud c = testsup::random_cloud(6, 64, 0.5);
    const Mat a = point_encode_toy(c, p).f_p;
    std::reverse(c.points.begin(), c.points.end());
    const Mat b = point_encode_toy(c, p).f_p;
    CHECK(a == b);
}

TEST_CASE("point_encode_toy single point is tanh(affine)") {
    const FusionParams p = FusionParams::seeded(small_config());
    PointCloud c{{{0.1, -0.2, 0.3}}};
    const Mat fp = point_encode_toy(c, p).f_p;
    for (std::size_t d = 0; d < p.config.dim_p; ++d) {
        const double pre = p.penc_w(d, 0) * 0.1 + p.penc_w(d, 1) * -0.2 + p.penc_w(d, 2) * 0.3 + p.penc_b(0, d);
        CHECK(fp(0, d) == std::tanh(pre));
    }
}

TEST_CASE("point_encode_toy is idempotent under point duplication") {
    const FusionParams p = FusionParams::seeded(small_config());
    PointCloud c = testsup::random_cloud(7, 32, 0.5);
    const Mat a = point_encode_toy(c, p).f_p;
    PointCloud doubled = c;
    doubled.points.insert(doubled.points.end(), c.points.begin(), c.points.end());
    const Mat b = point_encode_toy(doubled, p).f_p;
    CHECK(a == b);
}

TEST_CASE("global_feature accepts naive and external fills, rejects holes") {
    const EncoderHandle enc = EncoderHandle::stub(16, 44);
    const ForwardInputs in = small_inputs(45);
    const Mat from_naive = global_feature(enc, in.inpainted[0]);
    CHECK(std::abs(l2_norm(from_naive) - 1.0) <= 1e-9);
    CHECK(from_naive == enc.encode_image(in.inpainted[0]).pooled);

    // a partial (un-inpainted) map is refused unless explicitly allowed
    CHECK_FALSE(in.maps[0].fully_occupied());
    CHECK_THROWS_AS(global_feature(enc, in.maps[0]), InvalidArgument);
    const Mat forced = global_feature(enc, in.maps[0], "", true);
    CHECK(std::abs(l2_norm(forced) - 1.0) <= 1e-9);
    // naive fill and the raw partial map generally differ
    CHECK_FALSE(from_naive == forced);
}

TEST_CASE("fuse_final: identity block projects F_p") {
    FusionConfig cfg = small_config();
    FusionParams p = FusionParams::seeded(cfg);
    // W = [I | 0], b = 0
    p.final_w = Mat(cfg.dim_out, cfg.dim_p + cfg.dim);
    for (std::size_t i = 0; i < cfg.dim_out; ++i) p.final_w(i, i) = 1.0;
    p.final_b = Mat(1, cfg.dim_out);
    const Mat fp = Mat::seeded(1, cfg.dim_p, 8, 1.0);
    const Mat fcp = Mat::seeded(1, cfg.dim, 9, 1.0);
    const Mat fd = fuse_final(fp, fcp, p).f_d;
    for (std::size_t j = 0; j < cfg.dim_out; ++j) CHECK(fd(0, j) == fp(0, j));
}

TEST_CASE("fuse_final is linear when the bias is zero") {
    FusionConfig cfg = small_config();
    FusionParams p = FusionParams::seeded(cfg);
    p.final_b = Mat(1, cfg.dim_out);
    const Mat fp = Mat::seeded(1, cfg.dim_p, 10, 1.0);
    const Mat fcp = Mat::seeded(1, cfg.dim, 11, 1.0);
    const Mat once = fuse_final(fp, fcp, p).f_d;
    const Mat twice = fuse_final(scaled(fp, 2.0), scaled(fcp, 2.0), p).f_d;
    for (std::size_t j = 0; j < cfg.dim_out; ++j)
        CHECK(twice(0, j) == doctest::Approx(2.0 * once(0, j)).epsilon(1e-12));
}

TEST_CASE("point_decode_toy shape, determinism, and zero-weight collapse") {
    FusionConfig cfg = small_config();
    FusionParams p = FusionParams::seeded(cfg);
    const Mat fd = Mat::seeded(1, cfg.dim_out, 12, 1.0);
    const DecodeCache a = point_decode_toy(fd, 4, p);
    CHECK(a.out.rows() == 4);
    const DecodeCache b = point_decode_toy(fd, 4, p);
    CHECK(a.out == b.out);
    CHECK_THROWS_AS(point_decode_toy(fd, 0, p), InvalidArgument);

    p.dec_w2 = Mat(3, cfg.hidden); // zero final layer -> every point at tanh(bias)
    const DecodeCache c = point_decode_toy(fd, 7, p);
    for (std::size_t j = 0; j < 7; ++j)
        for (int k = 0; k < 3; ++k) CHECK(c.out(j, k) == std::tanh(p.dec_b2(0, std::size_t(k))));
}

TEST_CASE("assemble_clip_feature keeps the fixed row order") {
    std::array<Mat, 6> views;
    for (std::size_t v = 0; v < 6; ++v) views[v] = Mat::seeded(1, 8, 20 + v, 1.0);
    const Mat ft = Mat::seeded(1, 8, 30, 1.0);
    const Mat fc = assemble_clip_feature(views, ft);
    REQUIRE(fc.rows() == 7);
    for (std::size_t v = 0; v < 6; ++v)
        for (std::size_t j = 0; j < 8; ++j) CHECK(fc(v, j) == views[v](0, j));
    for (std::size_t j = 0; j < 8; ++j) CHECK(fc(6, j) == ft(0, j));

    // permuting the views permutes the rows identically
    std::array<Mat, 6> swapped = views;
    std::swap(swapped[0], swapped[5]);
    const Mat fc2 = assemble_clip_feature(swapped, ft);
    for (std::size_t j = 0; j < 8; ++j) {
        CHECK(fc2(0, j) == views[5](0, j));
        CHECK(fc2(5, j) == views[0](0, j));
    }
}

TEST_CASE("forward is deterministic and fully populates the state") {
    const FusionParams params = FusionParams::seeded(small_config());
    const EncoderHandle enc = EncoderHandle::stub(16, 3);
    const ForwardInputs in = small_inputs(50);
    ForwardOptions opt;
    opt.n_out = 64;
    const ForwardResult a = forward(in, params, BlockWeights{}, enc, opt);
    const ForwardResult b = forward(in, params, BlockWeights{}, enc, opt);
    CHECK(a.prediction == b.prediction);
    CHECK(a.prediction.size() == 64);
    CHECK(a.state.f_c.rows() == 7);
    CHECK(std::abs(l2_norm(a.state.f_t) - 1.0) <= 1e-12);
    for (std::size_t v = 0; v < 6; ++v) {
        CHECK(a.state.f_l[v].cols() == 16);
        CHECK(a.state.f_f[v].cols() == 16);
        CHECK(std::abs(l2_norm(a.state.f_g[v]) - 1.0) <= 1e-9);
    }
    CHECK(a.state.f_d.cols() == 12);
    CHECK(a.state.f_p.all_finite());
}

TEST_CASE("weighting identity: all-ones weights equal the disabled path bit for bit") {
    const FusionParams params = FusionParams::seeded(small_config(31));
    const EncoderHandle enc = EncoderHandle::stub(16, 32);
    const ForwardInputs in = small_inputs(51);
    ForwardOptions weighted;
    weighted.n_out = 32;
    weighted.use_block_weights = true;
    ForwardOptions plain = weighted;
    plain.use_block_weights = false;
    const ForwardResult a = forward(in, params, BlockWeights{}, enc, weighted);
    const ForwardResult b = forward(in, params, BlockWeights{}, enc, plain);
    CHECK(a.prediction == b.prediction);
}

TEST_CASE("non-default weights change the prediction") {
    const FusionParams params = FusionParams::seeded(small_config(33));
    const EncoderHandle enc = EncoderHandle::stub(16, 34);
    const ForwardInputs in = small_inputs(52);
    ForwardOptions opt;
    opt.n_out = 32;
    BlockWeights bw;
    bw.at(0, 1) = 3.0;
    const ForwardResult a = forward(in, params, BlockWeights{}, enc, opt);
    const ForwardResult b = forward(in, params, bw, enc, opt);
    CHECK_FALSE(a.prediction == b.prediction);
}

TEST_CASE("chamfer_l2_loss agrees with the metric and its FD gradient") {
    const PointCloud gt = testsup::random_cloud(60, 24, 0.5);
    const NnIndex gt_index(gt);
    Mat pred = Mat::seeded(16, 3, 61, 0.4);
    const ChamferLoss cl = chamfer_l2_loss(pred, gt, gt_index);

    PointCloud pred_cloud;
    for (std::size_t i = 0; i < pred.rows(); ++i)
        pred_cloud.points.push_back({pred(i, 0), pred(i, 1), pred(i, 2)});
    CHECK(cl.loss == doctest::Approx(chamfer_l2(pred_cloud, gt)).epsilon(1e-12));
}

TEST_CASE("train_block_weights: zero step or zero iterations keep all ones") {
    const FusionParams params = FusionParams::seeded(small_config(70));
    const EncoderHandle enc = EncoderHandle::stub(16, 71);
    const ForwardInputs in = small_inputs(72);
    const PointCloud gt = normalize_to_unit(testsup::cube_surface(73, 250, false)).first;
    std::vector<TrainingRecord> recs{make_training_record(in, gt, params, enc)};

    TrainOptions opt;
    opt.iters = 0;
    opt.n_out = 32;
    const TrainResult none = train_block_weights(recs, params, opt);
    for (double w : none.weights.w) CHECK(w == 1.0);

    opt.iters = 10;
    opt.step = 0.0;
    const TrainResult frozen = train_block_weights(recs, params, opt);
    for (double w : frozen.weights.w) CHECK(w == 1.0);
    CHECK(frozen.trace.size() == 10);
}

TEST_CASE("train_block_weights is deterministic per seed") {
    const FusionParams params = FusionParams::seeded(small_config(80));
    const EncoderHandle enc = EncoderHandle::stub(16, 81);
    std::vector<TrainingRecord> recs;
    const PointCloud gt = normalize_to_unit(testsup::cube_surface(83, 250, false)).first;
    for (std::uint64_t s = 0; s < 2; ++s)
        recs.push_back(make_training_record(small_inputs(84 + s, "fix-" + std::to_string(s)), gt, params, enc));

    TrainOptions opt;
    opt.iters = 12;
    opt.step = 0.5;
    opt.seed = 42;
    opt.n_out = 32;
    const TrainResult a = train_block_weights(recs, params, opt);
    const TrainResult b = train_block_weights(recs, params, opt);
    CHECK(a.weights.w == b.weights.w);
    opt.seed = 43;
    const TrainResult c = train_block_weights(recs, params, opt);
    CHECK_FALSE(a.weights.w == c.weights.w);
}

TEST_CASE("forward regression pin: prediction matches the frozen reference exactly") {
    // fully deterministic fixture -> the committed prediction must reproduce
    // bit for bit (CD == 0); regenerate with PCCF_REGEN_PIN=1 only after a
    // reviewed, intentional pipeline change
    const FusionParams params = FusionParams::seeded(small_config(4242));
    const EncoderHandle enc = EncoderHandle::stub(16, 4243);
    const ForwardInputs in = small_inputs(4244, "pin-0");
    ForwardOptions opt;
    opt.n_out = 64;
    const ForwardResult r = forward(in, params, BlockWeights{}, enc, opt);

    const std::filesystem::path pin = std::filesystem::path(PCCF_TEST_DATA_DIR) / "forward_pin.pcf";
    if (std::getenv("PCCF_REGEN_PIN")) {
        std::filesystem::create_directories(pin.parent_path());
        save_cloud(r.prediction, pin, CloudFormat::RawF32le);
        MESSAGE("regenerated ", pin.string());
        return;
    }
    REQUIRE(std::filesystem::exists(pin));
    const PointCloud reference = load_cloud(pin);
    REQUIRE(reference.size() == r.prediction.size());
    // the pin freezes the saved (f32) prediction, so compare after the same
    // save round trip fuse-demo applies
    TempDir tmp("pin");
    save_cloud(r.prediction, tmp.path() / "pred.pcf", CloudFormat::RawF32le);
    const PointCloud saved = load_cloud(tmp.path() / "pred.pcf");
    CHECK(chamfer_l2(saved, reference) == 0.0);
    CHECK(saved == reference);
}

TEST_CASE("analytic and FD training take the same path") {
    const FusionParams params = FusionParams::seeded(small_config(90));
    const EncoderHandle enc = EncoderHandle::stub(16, 91);
    const ForwardInputs in = small_inputs(92);
    const PointCloud gt = normalize_to_unit(testsup::cube_surface(93, 250, false)).first;
    std::vector<TrainingRecord> recs{make_training_record(in, gt, params, enc)};

    TrainOptions opt;
    opt.iters = 6;
    opt.step = 0.5;
    opt.n_out = 32;
    opt.mode = GradMode::Analytic;
    const TrainResult a = train_block_weights(recs, params, opt);
    opt.mode = GradMode::FiniteDifference;
    const TrainResult b = train_block_weights(recs, params, opt);
    for (std::size_t i = 0; i < 24; ++i)
        CHECK(a.weights.w[i] == doctest::Approx(b.weights.w[i]).epsilon(1e-6));
}
