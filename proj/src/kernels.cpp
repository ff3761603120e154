#include "tnce/kernels.hpp"

#include <cstdint>

#include "tnce/error.hpp"

namespace tnce::kernels {

Backend& backend() {
  static Backend b = Backend::automatic;
  return b;
}

namespace {

void check_gemm(const Matrix& a, const Matrix& b, const Matrix& out, int m,
                int k, int n, const char* name) {
  require(!out.empty(), name, ": output not allocated");
  require(out.rows() == m && out.cols() == n, name, ": output is ",
          shape_str(out), ", expected ", m, "x", n);
  require(a.data() != out.data() && b.data() != out.data(), name,
          ": output must not alias an input");
  (void)k;
}

// Work estimate deciding when a parallel region pays off. Tuned coarsely;
// below this the fork/join overhead dominates on small matrices.
constexpr std::int64_t kParallelFlopThreshold = 64 * 1024;

bool go_parallel(std::int64_t m, std::int64_t k, std::int64_t n) {
  switch (backend()) {
    case Backend::serial: return false;
    case Backend::openmp: return true;
    case Backend::automatic: return m * k * n >= kParallelFlopThreshold;
  }
  return false;
}

// Each output element accumulates over the inner index in ascending order in
// every variant below; that keeps serial and OpenMP results bit-identical.
inline void gemm_nn_rows(const Matrix& a, const Matrix& b, Matrix& out,
                         bool accumulate, int i_begin, int i_end) {
  const int k = a.cols(), n = b.cols();
  for (int i = i_begin; i < i_end; ++i) {
    double* out_row = out.row(i);
    if (!accumulate)
      for (int j = 0; j < n; ++j) out_row[j] = 0.0;
    const double* a_row = a.row(i);
    for (int l = 0; l < k; ++l) {
      const double av = a_row[l];
      const double* b_row = b.row(l);
      for (int j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
}

inline void gemm_nt_rows(const Matrix& a, const Matrix& b, Matrix& out,
                         bool accumulate, int i_begin, int i_end) {
  const int k = a.cols(), n = b.rows();
  for (int i = i_begin; i < i_end; ++i) {
    const double* a_row = a.row(i);
    double* out_row = out.row(i);
    for (int j = 0; j < n; ++j) {
      const double* b_row = b.row(j);
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += a_row[l] * b_row[l];
      out_row[j] = accumulate ? out_row[j] + acc : acc;
    }
  }
}

inline void gemm_tn_cols(const Matrix& a, const Matrix& b, Matrix& out,
                         bool accumulate, int i_begin, int i_end) {
  const int k = a.rows(), n = b.cols();
  for (int i = i_begin; i < i_end; ++i) {
    double* out_row = out.row(i);
    if (!accumulate)
      for (int j = 0; j < n; ++j) out_row[j] = 0.0;
    for (int l = 0; l < k; ++l) {
      const double av = a(l, i);
      const double* b_row = b.row(l);
      for (int j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
}

}  // namespace

namespace serial {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  require(a.cols() == b.rows(), "gemm_nn: inner dims differ, a is ",
          shape_str(a), ", b is ", shape_str(b));
  check_gemm(a, b, out, a.rows(), a.cols(), b.cols(), "gemm_nn");
  gemm_nn_rows(a, b, out, accumulate, 0, a.rows());
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  require(a.cols() == b.cols(), "gemm_nt: inner dims differ, a is ",
          shape_str(a), ", b is ", shape_str(b));
  check_gemm(a, b, out, a.rows(), a.cols(), b.rows(), "gemm_nt");
  gemm_nt_rows(a, b, out, accumulate, 0, a.rows());
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  require(a.rows() == b.rows(), "gemm_tn: inner dims differ, a is ",
          shape_str(a), ", b is ", shape_str(b));
  check_gemm(a, b, out, a.cols(), a.rows(), b.cols(), "gemm_tn");
  gemm_tn_cols(a, b, out, accumulate, 0, a.cols());
}

}  // namespace serial

namespace openmp {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  require(a.cols() == b.rows(), "gemm_nn: inner dims differ, a is ",
          shape_str(a), ", b is ", shape_str(b));
  check_gemm(a, b, out, a.rows(), a.cols(), b.cols(), "gemm_nn");
  const int m = a.rows();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) gemm_nn_rows(a, b, out, accumulate, i, i + 1);
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  require(a.cols() == b.cols(), "gemm_nt: inner dims differ, a is ",
          shape_str(a), ", b is ", shape_str(b));
  check_gemm(a, b, out, a.rows(), a.cols(), b.rows(), "gemm_nt");
  const int m = a.rows();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) gemm_nt_rows(a, b, out, accumulate, i, i + 1);
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  require(a.rows() == b.rows(), "gemm_tn: inner dims differ, a is ",
          shape_str(a), ", b is ", shape_str(b));
  check_gemm(a, b, out, a.cols(), a.rows(), b.cols(), "gemm_tn");
  const int m = a.cols();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) gemm_tn_cols(a, b, out, accumulate, i, i + 1);
}

}  // namespace openmp

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (go_parallel(a.rows(), a.cols(), b.cols()))
    openmp::gemm_nn(a, b, out, accumulate);
  else
    serial::gemm_nn(a, b, out, accumulate);
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (go_parallel(a.rows(), a.cols(), b.rows()))
    openmp::gemm_nt(a, b, out, accumulate);
  else
    serial::gemm_nt(a, b, out, accumulate);
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (go_parallel(a.cols(), a.rows(), b.cols()))
    openmp::gemm_tn(a, b, out, accumulate);
  else
    serial::gemm_tn(a, b, out, accumulate);
}

void add_row_vector(Matrix& out, const Matrix& bias) {
  require(bias.rows() == 1 && bias.cols() == out.cols(),
          "add_row_vector: bias is ", shape_str(bias), ", expected 1x",
          out.cols());
  const double* b = bias.row(0);
  for (int i = 0; i < out.rows(); ++i) {
    double* r = out.row(i);
    for (int j = 0; j < out.cols(); ++j) r[j] += b[j];
  }
}

void column_sums(const Matrix& x, Matrix& out, bool accumulate) {
  require(out.rows() == 1 && out.cols() == x.cols(), "column_sums: output is ",
          shape_str(out), ", expected 1x", x.cols());
  double* o = out.row(0);
  if (!accumulate)
    for (int j = 0; j < x.cols(); ++j) o[j] = 0.0;
  for (int i = 0; i < x.rows(); ++i) {
    const double* r = x.row(i);
    for (int j = 0; j < x.cols(); ++j) o[j] += r[j];
  }
}

}  // namespace tnce::kernels
