#include "clhpo/kernels.hpp"

#include <atomic>

#include "clhpo/error.hpp"

namespace clhpo::kernels {

namespace {
std::atomic<bool> g_parallel{true};

void check_nt(const Mat& a, const Mat& b, const Mat& c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
    throw ShapeError("matmul_nt: incompatible shapes");
}
void check_tn(const Mat& a, const Mat& b, const Mat& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    throw ShapeError("matmul_tn: incompatible shapes");
}
void check_nn(const Mat& a, const Mat& b, const Mat& c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
    throw ShapeError("matmul_nn: incompatible shapes");
}
}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel_enabled(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

void matmul_nt_serial(const Mat& a, const Mat& b, Mat& c) {
  check_nt(a, b, c);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* bj = b.row(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += ai[k] * bj[k];
      ci[j] = acc;
    }
  }
}

void matmul_nt_omp(const Mat& a, const Mat& b, Mat& c) {
  check_nt(a, b, c);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* bj = b.row(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += ai[k] * bj[k];
      ci[j] = acc;
    }
  }
}

void matmul_tn_serial(const Mat& a, const Mat& b, Mat& c) {
  check_tn(a, b, c);
  for (int i = 0; i < a.cols; ++i) {
    double* ci = c.row(i);
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.rows; ++k) acc += a.at(k, i) * b.at(k, j);
      ci[j] = acc;
    }
  }
}

void matmul_tn_omp(const Mat& a, const Mat& b, Mat& c) {
  check_tn(a, b, c);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.cols; ++i) {
    double* ci = c.row(i);
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.rows; ++k) acc += a.at(k, i) * b.at(k, j);
      ci[j] = acc;
    }
  }
}

void matmul_nn_serial(const Mat& a, const Mat& b, Mat& c) {
  check_nn(a, b, c);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += ai[k] * b.at(k, j);
      ci[j] = acc;
    }
  }
}

void matmul_nn_omp(const Mat& a, const Mat& b, Mat& c) {
  check_nn(a, b, c);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += ai[k] * b.at(k, j);
      ci[j] = acc;
    }
  }
}

void matmul_nt(const Mat& a, const Mat& b, Mat& c) {
  if (parallel_enabled())
    matmul_nt_omp(a, b, c);
  else
    matmul_nt_serial(a, b, c);
}

void matmul_tn(const Mat& a, const Mat& b, Mat& c) {
  if (parallel_enabled())
    matmul_tn_omp(a, b, c);
  else
    matmul_tn_serial(a, b, c);
}

void matmul_nn(const Mat& a, const Mat& b, Mat& c) {
  if (parallel_enabled())
    matmul_nn_omp(a, b, c);
  else
    matmul_nn_serial(a, b, c);
}

void add_bias_rows(Mat& c, const std::vector<double>& bias) {
  if (static_cast<int>(bias.size()) != c.cols)
    throw ShapeError("add_bias_rows: bias length != cols");
  for (int i = 0; i < c.rows; ++i) {
    double* ci = c.row(i);
    for (int j = 0; j < c.cols; ++j) ci[j] += bias[j];
  }
}

void col_sums(const Mat& a, std::vector<double>& out) {
  out.assign(a.cols, 0.0);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    for (int j = 0; j < a.cols; ++j) out[j] += ai[j];
  }
}

void relu_forward(Mat& a) {
  for (double& x : a.v)
    if (x < 0.0) x = 0.0;
}

void relu_backward(const Mat& preact, Mat& grad) {
  if (!preact.same_shape(grad)) throw ShapeError("relu_backward: shape mismatch");
  for (std::size_t i = 0; i < grad.v.size(); ++i)
    if (preact.v[i] <= 0.0) grad.v[i] = 0.0;
}

}  // namespace clhpo::kernels
