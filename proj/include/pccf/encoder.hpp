#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "pccf/depth_map.hpp"
#include "pccf/error.hpp"
#include "pccf/map_io.hpp"
#include "pccf/rng.hpp"
#include "pccf/tensor.hpp"

namespace pccf {

struct EncodedImage {
    Mat pooled; // 1 x D, unit L2 norm
    Mat tokens; // T x D, one unit-norm token per 2x2 block for the stub
};

// "EMB1" | u32 dim | u32 token count T (0 = pooled only) | (1+T)*dim f32le,
// pooled vector first.
inline void save_embedding(const std::filesystem::path& path, const Mat& pooled, const Mat& tokens) {
    if (pooled.rows() != 1) throw InvalidArgument("save_embedding: pooled must be 1 x D");
    if (tokens.size() > 0 && tokens.cols() != pooled.cols())
        throw InvalidArgument("save_embedding: token dim mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write("EMB1", 4);
    auto write_u32 = [&](std::uint32_t v) {
        std::uint8_t b[4];
        for (int i = 0; i < 4; ++i) b[i] = std::uint8_t((v >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    write_u32(std::uint32_t(pooled.cols()));
    write_u32(std::uint32_t(tokens.rows()));
    auto write_row = [&](const double* row, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            const float f = float(row[i]);
            out.write(reinterpret_cast<const char*>(&f), 4);
        }
    };
    write_row(pooled.row(0), pooled.cols());
    for (std::size_t t = 0; t < tokens.rows(); ++t) write_row(tokens.row(t), tokens.cols());
    if (!out) throw Error("write failed: " + path.string());
}

inline EncodedImage load_embedding(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "EMB1", 4) != 0)
        throw Error(path.string() + ": bad magic (expected EMB1)");
    auto read_u32 = [&]() {
        std::uint8_t b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(path.string() + ": truncated header");
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    };
    const std::uint32_t dim = read_u32();
    const std::uint32_t count = read_u32();
    if (dim == 0) throw Error(path.string() + ": zero dim");
    auto read_row = [&](double* row) {
        for (std::uint32_t i = 0; i < dim; ++i) {
            float f;
            if (!in.read(reinterpret_cast<char*>(&f), 4)) throw Error(path.string() + ": truncated data");
            if (!std::isfinite(f)) throw Error(path.string() + ": non-finite value");
            row[i] = double(f);
        }
    };
    EncodedImage e;
    e.pooled = Mat(1, dim);
    read_row(e.pooled.row(0));
    e.tokens = Mat(count, dim);
    for (std::uint32_t t = 0; t < count; ++t) read_row(e.tokens.row(t));
    return e;
}

// Deterministic stand-in for a pretrained vision-language encoder, or a
// loader for embeddings precomputed by a real one. The stub maps inputs
// through a fixed seeded random projection (hash-addressed, so nothing big
// is ever materialized); the file kind resolves vectors by record id plus
// face (or "text").
class EncoderHandle {
public:
    // stub bias magnitude: small enough that tokens are dominated by block
    // content, nonzero so an all-zero input still has a defined direction
    static constexpr double kBiasScale = 0.1;

    static EncoderHandle stub(std::size_t dim, std::uint64_t seed) {
        EncoderHandle h;
        h.dim_ = dim;
        h.seed_ = seed;
        return h;
    }

    static EncoderHandle file(std::filesystem::path dir, std::size_t dim) {
        EncoderHandle h;
        h.dim_ = dim;
        h.dir_ = std::move(dir);
        return h;
    }

    std::size_t dim() const { return dim_; }
    bool is_stub() const { return !dir_; }

    // Optional resolution pin; when set, encode_image rejects other sizes.
    void expect_resolution(std::uint32_t h, std::uint32_t w) {
        expect_h_ = h;
        expect_w_ = w;
    }

    EncodedImage encode_image(const DepthMap& map, const std::string& record_id = {}) const {
        if (expect_h_ && (map.height != expect_h_ || map.width != expect_w_))
            throw InvalidArgument("encode_image: map resolution " + std::to_string(map.height) + "x" +
                                  std::to_string(map.width) + " does not match configured " +
                                  std::to_string(expect_h_) + "x" + std::to_string(expect_w_));
        if (!dir_) return stub_image(map);
        EncodedImage e = load_checked(*dir_ / (record_id + "." + face_key(map.face) + ".emb"));
        return e;
    }

    Mat encode_text(const std::string& text, const std::string& record_id = {}) const {
        if (text.empty()) throw InvalidArgument("encode_text: empty text");
        if (!dir_) return stub_text(text);
        return load_checked(*dir_ / (record_id + ".text.emb")).pooled;
    }

private:
    EncodedImage load_checked(const std::filesystem::path& path) const {
        EncodedImage e = load_embedding(path);
        if (e.pooled.cols() != dim_)
            throw Error(path.string() + ": dim " + std::to_string(e.pooled.cols()) +
                        " does not match encoder dim " + std::to_string(dim_));
        // the file stores f32, so allow quantization noise, then restore the
        // exact unit norm the Embedding contract promises
        const double n = l2_norm(e.pooled);
        if (std::abs(n - 1.0) > 1e-5)
            throw Error(path.string() + ": pooled embedding is not unit norm (|e| = " + std::to_string(n) + ")");
        e.pooled = l2_normalized(e.pooled);
        return e;
    }

    // token_b = normalize(bias + R * x_b), x_b the block's depths (0 where
    // unoccupied), R a fixed +-1/sqrt(P) random matrix addressed by hash;
    // pooled = normalize(mean of tokens)
    EncodedImage stub_image(const DepthMap& map) const {
        const auto blocks = split_blocks(map);
        const std::size_t pixels = blocks[0].depth.size();
        const double inv_sqrt_p = 1.0 / std::sqrt(double(pixels));
        const std::uint64_t proj_seed = mix_seed(seed_, "image-proj");
        const std::uint64_t bias_seed = mix_seed(seed_, "image-bias");

        EncodedImage out;
        out.tokens = Mat(4, dim_);
        for (int b = 0; b < 4; ++b) {
            const DepthMap& blk = blocks[std::size_t(b)];
            Mat token(1, dim_);
            for (std::size_t d = 0; d < dim_; ++d) {
                double acc = hashed_sym(bias_seed, d) * kBiasScale;
                for (std::size_t i = 0; i < pixels; ++i) {
                    if (!blk.occupancy[i]) continue;
                    const double x = double(blk.depth[i]);
                    if (x == 0.0) continue;
                    acc += hashed_sym(proj_seed, std::uint64_t(d) * pixels + i) * inv_sqrt_p * x;
                }
                token(0, d) = acc;
            }
            token = l2_normalized(token);
            std::memcpy(out.tokens.row(std::size_t(b)), token.row(0), dim_ * sizeof(double));
        }
        out.pooled = l2_normalized(mean_rows(out.tokens));
        return out;
    }

    // seeded projection of the UTF-8 bytes, padded/truncated to 256
    Mat stub_text(const std::string& text) const {
        constexpr std::size_t kBytes = 256;
        const std::uint64_t proj_seed = mix_seed(seed_, "text-proj");
        const std::uint64_t bias_seed = mix_seed(seed_, "text-bias");
        const double inv_sqrt_p = 1.0 / std::sqrt(double(kBytes));
        Mat v(1, dim_);
        for (std::size_t d = 0; d < dim_; ++d) {
            double acc = hashed_sym(bias_seed, d) * kBiasScale;
            for (std::size_t i = 0; i < kBytes && i < text.size(); ++i) {
                const double x = double(std::uint8_t(text[i])) / 255.0;
                acc += hashed_sym(proj_seed, std::uint64_t(d) * kBytes + i) * inv_sqrt_p * x;
            }
            v(0, d) = acc;
        }
        return l2_normalized(v);
    }

    std::size_t dim_ = 512;
    std::uint64_t seed_ = 0;
    std::optional<std::filesystem::path> dir_;
    std::uint32_t expect_h_ = 0, expect_w_ = 0;
};

} // namespace pccf
