// Dense row-major float64 matrices and the handful of products the models use.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "langgan/common.hpp"

namespace langgan {

struct Tensor2 {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Tensor2() = default;
    Tensor2(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(size_t r, size_t c) { return data[r * cols + c]; }
    double operator()(size_t r, size_t c) const { return data[r * cols + c]; }

    double* row(size_t r) { return data.data() + r * cols; }
    const double* row(size_t r) const { return data.data() + r * cols; }
    std::span<double> row_span(size_t r) { return {row(r), cols}; }
    std::span<const double> row_span(size_t r) const { return {row(r), cols}; }

    size_t size() const { return data.size(); }
    bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(0.0); }

    bool finite() const { return all_finite(data); }
};

// Integer id matrix (token batches).
struct IntMat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<int32_t> data;

    IntMat() = default;
    IntMat(size_t r, size_t c, int32_t fill = 0) : rows(r), cols(c), data(r * c, fill) {}

    int32_t& operator()(size_t r, size_t c) { return data[r * cols + c]; }
    int32_t operator()(size_t r, size_t c) const { return data[r * cols + c]; }
    const int32_t* row(size_t r) const { return data.data() + r * cols; }
    int32_t* row(size_t r) { return data.data() + r * cols; }
};

namespace detail {
inline void require(bool ok, const char* msg) {
    if (!ok) throw DimensionError(msg);
}
}  // namespace detail

// out = a · b
inline Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    detail::require(a.cols == b.rows, "matmul: inner dimensions differ");
    Tensor2 out(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        double* oi = out.row(i);
        const double* ai = a.row(i);
        for (size_t k = 0; k < a.cols; ++k) {
            double aik = ai[k];
            const double* bk = b.row(k);
            for (size_t j = 0; j < b.cols; ++j) oi[j] += aik * bk[j];
        }
    }
    return out;
}

// out = a · bᵀ
inline Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
    detail::require(a.cols == b.cols, "matmul_nt: inner dimensions differ");
    Tensor2 out(a.rows, b.rows);
    for (size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (size_t j = 0; j < b.rows; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
            oi[j] = s;
        }
    }
    return out;
}

// acc += aᵀ · b  (gradient accumulation for weight matrices)
inline void matmul_tn_acc(const Tensor2& a, const Tensor2& b, Tensor2& acc) {
    detail::require(a.rows == b.rows, "matmul_tn_acc: outer dimensions differ");
    detail::require(acc.rows == a.cols && acc.cols == b.cols, "matmul_tn_acc: acc shape");
    for (size_t k = 0; k < a.rows; ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (size_t i = 0; i < a.cols; ++i) {
            double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = acc.row(i);
            for (size_t j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
        }
    }
}

inline void add_inplace(Tensor2& a, const Tensor2& b) {
    detail::require(a.same_shape(b), "add_inplace: shape mismatch");
    for (size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

inline void axpy(double alpha, const Tensor2& x, Tensor2& y) {
    detail::require(x.same_shape(y), "axpy: shape mismatch");
    for (size_t i = 0; i < x.size(); ++i) y.data[i] += alpha * x.data[i];
}

// out(r, :) += v for every row r
inline void add_row_vector(Tensor2& a, const Tensor2& v) {
    detail::require(v.rows == 1 && v.cols == a.cols, "add_row_vector: shape mismatch");
    for (size_t i = 0; i < a.rows; ++i) {
        double* ai = a.row(i);
        for (size_t j = 0; j < a.cols; ++j) ai[j] += v.data[j];
    }
}

// acc(0, :) += column sums of a (bias gradients)
inline void add_col_sums(const Tensor2& a, Tensor2& acc) {
    detail::require(acc.rows == 1 && acc.cols == a.cols, "add_col_sums: shape mismatch");
    for (size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        for (size_t j = 0; j < a.cols; ++j) acc.data[j] += ai[j];
    }
}

inline Tensor2 transpose(const Tensor2& a) {
    Tensor2 out(a.cols, a.rows);
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

inline Tensor2 hconcat(const Tensor2& a, const Tensor2& b) {
    detail::require(a.rows == b.rows, "hconcat: row counts differ");
    Tensor2 out(a.rows, a.cols + b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        std::copy(a.row(i), a.row(i) + a.cols, out.row(i));
        std::copy(b.row(i), b.row(i) + b.cols, out.row(i) + a.cols);
    }
    return out;
}

// Row-wise softmax of logits/temperature, max-subtracted for stability.
inline Tensor2 softmax_rows(const Tensor2& logits, double temperature) {
    if (!(temperature > 0.0)) throw ArgumentError("softmax_rows: temperature must be > 0");
    if (!logits.finite()) throw ArgumentError("softmax_rows: logits must be finite");
    Tensor2 out(logits.rows, logits.cols);
    for (size_t i = 0; i < logits.rows; ++i) {
        const double* in = logits.row(i);
        double* o = out.row(i);
        double mx = -1e300;
        for (size_t j = 0; j < logits.cols; ++j) {
            o[j] = in[j] / temperature;
            mx = std::max(mx, o[j]);
        }
        double sum = 0.0;
        for (size_t j = 0; j < logits.cols; ++j) {
            o[j] = std::exp(o[j] - mx);
            sum += o[j];
        }
        for (size_t j = 0; j < logits.cols; ++j) o[j] /= sum;
    }
    return out;
}

// log softmax of a single row at temperature 1 (log-sum-exp stabilized)
inline std::vector<double> log_softmax(std::span<const double> logits) {
    double mx = -1e300;
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    double lse = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (size_t j = 0; j < logits.size(); ++j) out[j] = logits[j] - lse;
    return out;
}

}  // namespace langgan
