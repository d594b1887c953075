#pragma once

#include <cstddef>
#include <vector>

namespace svac {

// Row-major float32 matrix. All model arithmetic stays in float32; reductions
// accumulate sequentially by index (or via single-threaded BLAS kernels), so
// results are bit-stable run to run.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    float* row(std::size_t r) { return data.data() + r * cols; }
    const float* row(std::size_t r) const { return data.data() + r * cols; }
    float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;
};

// out(m,n) = a(m,k) @ b(k,n), optionally transposing b (b given as (n,k)).
void matmul(const float* a, const float* b, float* out,
            std::size_t m, std::size_t k, std::size_t n, bool transpose_b = false);

void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool transpose_b = false);

// Pins the BLAS backend to one thread. Call once per process before any
// forward pass; determinism across our own worker pool depends on it.
void pin_blas_single_thread();

} // namespace svac
