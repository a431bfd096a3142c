#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "pccf/error.hpp"
#include "pccf/rng.hpp"

namespace pccf {

// Small dense row-major matrix of doubles. Embeddings are 1 x D rows; a
// weight matrix W of shape (out, in) applies to a row x as x * W^T. Every
// reduction runs in a fixed order so results are bit-reproducible.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), a_(rows * cols, 0.0) {}

    static Mat seeded(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale) {
        Mat m(rows, cols);
        Rng rng(seed);
        for (double& v : m.a_) v = rng.next_sym() * scale;
        return m;
    }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return a_.size(); }
    bool empty() const { return a_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return a_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a_[r * cols_ + c]; }
    double* data() { return a_.data(); }
    const double* data() const { return a_.data(); }
    double* row(std::size_t r) { return a_.data() + r * cols_; }
    const double* row(std::size_t r) const { return a_.data() + r * cols_; }

    bool operator==(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && a_ == o.a_; }

    bool all_finite() const {
        for (double v : a_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> a_;
};

inline void check_shape(bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("shape mismatch: ") + what);
}

// C = A * B
inline Mat mul(const Mat& a, const Mat& b) {
    check_shape(a.cols() == b.rows(), "mul");
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            double* crow = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// C = A * B^T
inline Mat mul_bt(const Mat& a, const Mat& b) {
    check_shape(a.cols() == b.cols(), "mul_bt");
    Mat c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
            c(i, j) = s;
        }
    }
    return c;
}

// C = A^T * B
inline Mat mul_at(const Mat& a, const Mat& b) {
    check_shape(a.rows() == b.rows(), "mul_at");
    Mat c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* arow = a.row(k);
        const double* brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* crow = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

inline Mat add(const Mat& a, const Mat& b) {
    check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
    Mat c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

inline void accumulate(Mat& a, const Mat& b) {
    check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "accumulate");
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

inline Mat scaled(const Mat& a, double s) {
    Mat c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= s;
    return c;
}

// stable row softmax
inline Mat softmax_rows(const Mat& logits) {
    Mat out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* in = logits.row(i);
        double* o = out.row(i);
        double mx = in[0];
        for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (std::size_t j = 0; j < logits.cols(); ++j) o[j] /= sum;
    }
    return out;
}

// d_logits for a = softmax(logits) given d_a, per row:
// ds_j = a_j * (da_j - sum_k da_k a_k)
inline Mat softmax_backward(const Mat& a, const Mat& da) {
    check_shape(a.rows() == da.rows() && a.cols() == da.cols(), "softmax_backward");
    Mat ds(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) dot += da(i, j) * a(i, j);
        for (std::size_t j = 0; j < a.cols(); ++j) ds(i, j) = a(i, j) * (da(i, j) - dot);
    }
    return ds;
}

inline double l2_norm(const Mat& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v.data()[i] * v.data()[i];
    return std::sqrt(s);
}

inline Mat l2_normalized(const Mat& v) {
    const double n = l2_norm(v);
    if (n == 0.0) throw InvalidArgument("l2_normalized: zero vector");
    return scaled(v, 1.0 / n);
}

// sum of squares; the scalar probe used by the gradient checks
inline double sum_squares(const Mat& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v.data()[i] * v.data()[i];
    return s;
}

inline Mat mean_rows(const Mat& m) {
    Mat out(1, m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
    const double inv = 1.0 / double(m.rows());
    for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) *= inv;
    return out;
}

inline Mat concat_cols(const Mat& a, const Mat& b) {
    check_shape(a.rows() == b.rows(), "concat_cols");
    Mat c(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::memcpy(c.row(i), a.row(i), a.cols() * sizeof(double));
        std::memcpy(c.row(i) + a.cols(), b.row(i), b.cols() * sizeof(double));
    }
    return c;
}

inline Mat vstack(const Mat& a, const Mat& b) {
    check_shape(a.cols() == b.cols(), "vstack");
    Mat c(a.rows() + b.rows(), a.cols());
    std::memcpy(c.data(), a.data(), a.size() * sizeof(double));
    std::memcpy(c.data() + a.size(), b.data(), b.size() * sizeof(double));
    return c;
}

} // namespace pccf
