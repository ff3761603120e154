#pragma once

#include "tnce/matrix.hpp"

namespace tnce::kernels {

// The dense kernels ship in two flavors: a serial reference implementation
// and an OpenMP one parallelized over output rows. Both accumulate each
// output element in the same index order, so results are bit-identical
// regardless of backend or thread count. The dispatching entry points pick
// the OpenMP flavor when the FLOP count is worth a parallel region.
enum class Backend { serial, openmp, automatic };

Backend& backend();  // process-wide switch, default automatic

namespace serial {
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate);
}  // namespace serial

namespace openmp {
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate);
}  // namespace openmp

// out = a * b (+ out if accumulate); a: m x k, b: k x n
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out = a * b^T; a: m x k, b: n x k
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out = a^T * b; a: k x m, b: k x n
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);

// out[i, :] += bias[0, :]
void add_row_vector(Matrix& out, const Matrix& bias);

// out[0, j] (+)= sum_i x[i, j]
void column_sums(const Matrix& x, Matrix& out, bool accumulate = false);

}  // namespace tnce::kernels
