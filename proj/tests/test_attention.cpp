#include <doctest.h>

#include "pccf/attention.hpp"
#include "support.hpp"

using namespace pccf;

namespace {

Mat random_row(std::uint64_t seed, std::size_t dim, double scale = 1.0) {
    return Mat::seeded(1, dim, seed, scale);
}

} // namespace

TEST_CASE("softmax rows sum to one within 1e-12") {
    const Mat logits = Mat::seeded(5, 9, 3, 4.0);
    const Mat a = softmax_rows(logits);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
            s += a(i, j);
            CHECK(a(i, j) >= 0.0);
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("local_feature with all-ones weights is bit-identical to the unweighted path") {
    const std::size_t dim = 32;
    const AttentionParams p = AttentionParams::seeded(dim, 11);
    const Mat tokens = Mat::seeded(4, dim, 12, 1.0);
    const LocalFeatureCache weighted = local_feature(tokens, {1.0, 1.0, 1.0, 1.0}, p, true);
    const LocalFeatureCache plain = local_feature(tokens, {1.0, 1.0, 1.0, 1.0}, p, false);
    CHECK(weighted.fl == plain.fl);
    CHECK(weighted.attn == plain.attn);
}

TEST_CASE("identical tokens give uniform attention and F_l = W_o W_v t") {
    const std::size_t dim = 16;
    const AttentionParams p = AttentionParams::seeded(dim, 21);
    const Mat t = random_row(22, dim);
    Mat tokens(4, dim);
    for (std::size_t b = 0; b < 4; ++b)
        std::memcpy(tokens.row(b), t.row(0), dim * sizeof(double));
    const LocalFeatureCache c = local_feature(tokens, {1, 1, 1, 1}, p);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(c.attn(i, j) == doctest::Approx(0.25).epsilon(1e-12));
    const Mat want = mul_bt(mul_bt(t, p.wv), p.wo);
    for (std::size_t j = 0; j < dim; ++j) CHECK(c.fl(0, j) == doctest::Approx(want(0, j)).epsilon(1e-12));
}

TEST_CASE("local_feature rejects bad shapes and non-finite weights") {
    const AttentionParams p = AttentionParams::seeded(8, 1);
    CHECK_THROWS_AS(local_feature(Mat::seeded(3, 8, 2, 1.0), {1, 1, 1, 1}, p), InvalidArgument);
    CHECK_THROWS_AS(local_feature(Mat::seeded(4, 8, 2, 1.0),
                                  {1, std::numeric_limits<double>::infinity(), 1, 1}, p),
                    InvalidArgument);
}

TEST_CASE("fuse_local_global: equal inputs split attention evenly") {
    const std::size_t dim = 16;
    const AttentionParams p = AttentionParams::seeded(dim, 31);
    const Mat f = random_row(32, dim);
    const FuseCache c = fuse_local_global(f, f, p);
    CHECK(c.attn(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(c.attn(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    const Mat want = mul_bt(mul_bt(f, p.wv), p.wo);
    for (std::size_t j = 0; j < dim; ++j) CHECK(c.ff(0, j) == doctest::Approx(want(0, j)).epsilon(1e-12));
}

TEST_CASE("fuse_local_global: a dominant orthogonal global feature wins the attention") {
    const std::size_t dim = 8;
    const AttentionParams p = AttentionParams::identity(dim);
    Mat fl(1, dim), fg(1, dim);
    fl(0, 0) = 0.1;  // small local feature on axis 0
    fg(0, 1) = 10.0; // large orthogonal global feature on axis 1
    const FuseCache c = fuse_local_global(fl, fg, p);
    // q = fg, K = {fl, fg}: logit against fg is |fg|^2 >> logit against fl = 0
    CHECK(c.attn(0, 1) > 0.5);
}

TEST_CASE("transform_clip: identical rows make F_p irrelevant") {
    const std::size_t dim = 16;
    const AttentionParams p = AttentionParams::seeded(dim, 41);
    const Mat v = random_row(42, dim);
    Mat fc(7, dim);
    for (std::size_t r = 0; r < 7; ++r) std::memcpy(fc.row(r), v.row(0), dim * sizeof(double));
    const Mat fp1 = random_row(43, dim);
    const Mat fp2 = random_row(44, dim);
    const TransformClipCache a = transform_clip(fc, fp1, p);
    const TransformClipCache b = transform_clip(fc, fp2, p);
    const Mat want = mul_bt(mul_bt(v, p.wv), p.wo);
    for (std::size_t j = 0; j < dim; ++j) {
        CHECK(a.fcp(0, j) == doctest::Approx(want(0, j)).epsilon(1e-10));
        CHECK(a.fcp(0, j) == doctest::Approx(b.fcp(0, j)).epsilon(1e-12));
    }
}

TEST_CASE("transform_clip attention row sums to one") {
    const std::size_t dim = 16;
    const AttentionParams p = AttentionParams::seeded(dim, 51);
    const TransformClipCache c = transform_clip(Mat::seeded(7, dim, 52, 1.0), random_row(53, dim), p);
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) s += c.attn(0, j);
    CHECK(std::abs(s - 1.0) <= 1e-12);
}

TEST_CASE("transform_clip requires a projection when dims differ") {
    const AttentionParams p = AttentionParams::seeded(16, 61);
    const Mat fc = Mat::seeded(7, 16, 62, 1.0);
    const Mat fp = random_row(63, 12);
    CHECK_THROWS_AS(transform_clip(fc, fp, p), InvalidArgument);
    const Mat proj = Mat::seeded(16, 12, 64, 0.3);
    const TransformClipCache c = transform_clip(fc, fp, p, &proj);
    CHECK(c.fcp.cols() == 16);
}
