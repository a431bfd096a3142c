#include <doctest.h>

#include "pccf/grad_check.hpp"

using namespace pccf;

TEST_CASE("linear gradients are exact to 1e-10") {
    const GradCheckResult r = grad_check("linear");
    INFO("worst: ", r.worst_coord, " err ", r.max_err);
    CHECK(r.pass);
    CHECK(r.max_err <= 1e-10);
}

TEST_CASE("softmax-attention stacks pass at 1e-6") {
    for (const char* op : {"text", "local", "fuse", "transform"}) {
        const GradCheckResult r = grad_check(op);
        INFO("op ", op, " worst: ", r.worst_coord, " err ", r.max_err);
        CHECK(r.pass);
        CHECK(r.max_err <= 1e-6);
    }
}

TEST_CASE("toy encoder, decoder and chamfer gradients pass at 1e-6") {
    for (const char* op : {"pointenc", "decoder", "chamfer"}) {
        const GradCheckResult r = grad_check(op);
        INFO("op ", op, " worst: ", r.worst_coord, " err ", r.max_err);
        CHECK(r.pass);
    }
}

TEST_CASE("full pipeline gradient w.r.t. the 24 block weights passes at 1e-6") {
    const GradCheckResult r = grad_check("pipeline");
    INFO("worst: ", r.worst_coord, " err ", r.max_err);
    CHECK(r.pass);
    CHECK(r.max_err <= 1e-6);
}

TEST_CASE("corrupted gradient is caught at its coordinate") {
    const GradCheckResult r = grad_check("local", 7, 1e-5, true);
    CHECK_FALSE(r.pass);
    CHECK(r.max_err > 1e-2);
}

TEST_CASE("unknown op is rejected") {
    CHECK_THROWS_AS(grad_check("unknown-op"), InvalidArgument);
}

TEST_CASE("checks are deterministic per seed") {
    const GradCheckResult a = grad_check("fuse", 123);
    const GradCheckResult b = grad_check("fuse", 123);
    CHECK(a.max_err == b.max_err);
    CHECK(a.worst_coord == b.worst_coord);
}
