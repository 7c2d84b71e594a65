#pragma once

#include <cstddef>
#include <vector>

namespace clhpo {

// Dense row-major matrix of doubles. Deliberately minimal: the network code
// needs storage plus the handful of kernels below, nothing more.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

namespace kernels {

// Runtime switch between the OpenMP kernels and the serial reference. Both
// produce bit-identical output: the parallel loops split work by output row
// and each element is accumulated in the same order as the serial code. The
// serial versions are kept as the reference the tests and the benchmark
// compare against.
bool parallel_enabled();
void set_parallel_enabled(bool on);

// C = A * B^T,  A: n x k, B: m x k, C: n x m
void matmul_nt_serial(const Mat& a, const Mat& b, Mat& c);
void matmul_nt_omp(const Mat& a, const Mat& b, Mat& c);

// C = A^T * B,  A: n x m, B: n x k, C: m x k
void matmul_tn_serial(const Mat& a, const Mat& b, Mat& c);
void matmul_tn_omp(const Mat& a, const Mat& b, Mat& c);

// C = A * B,  A: n x m, B: m x k, C: n x k
void matmul_nn_serial(const Mat& a, const Mat& b, Mat& c);
void matmul_nn_omp(const Mat& a, const Mat& b, Mat& c);

// Dispatchers honouring parallel_enabled().
void matmul_nt(const Mat& a, const Mat& b, Mat& c);
void matmul_tn(const Mat& a, const Mat& b, Mat& c);
void matmul_nn(const Mat& a, const Mat& b, Mat& c);

// Row-wise bias add: c[r, :] += bias
void add_bias_rows(Mat& c, const std::vector<double>& bias);

// column sums of a into out (length a.cols)
void col_sums(const Mat& a, std::vector<double>& out);

// Elementwise max(x, 0) forward; backward zeroes grad where preact <= 0.
void relu_forward(Mat& a);
void relu_backward(const Mat& preact, Mat& grad);

}  // namespace kernels
}  // namespace clhpo
