#include "svac/matrix.hpp"

#include <cblas.h>
#include <cmath>
#include <stdexcept>

extern "C" void openblas_set_num_threads(int);

namespace svac {

bool Matrix::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void matmul(const float* a, const float* b, float* out,
            std::size_t m, std::size_t k, std::size_t n, bool transpose_b) {
    cblas_sgemm(CblasRowMajor, CblasNoTrans, transpose_b ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k),
                1.0f, a, static_cast<int>(k),
                b, static_cast<int>(transpose_b ? k : n),
                0.0f, out, static_cast<int>(n));
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool transpose_b) {
    const std::size_t bk = transpose_b ? b.cols : b.rows;
    const std::size_t bn = transpose_b ? b.rows : b.cols;
    if (a.cols != bk) throw std::invalid_argument("matmul: inner dimension mismatch");
    out = Matrix(a.rows, bn);
    matmul(a.data.data(), b.data.data(), out.data.data(), a.rows, a.cols, bn, transpose_b);
}

void pin_blas_single_thread() {
    openblas_set_num_threads(1);
}

} // namespace svac
