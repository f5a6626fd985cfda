#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

// Raw dense kernels. Each parallel kernel partitions work by output row, so a
// given output element is always computed by exactly one thread in a fixed
// serial order: results are bit-identical to the *_serial reference for any
// thread count. The serial variants are kept as the test oracle and for the
// kernel benchmark.
namespace numkit::kernels {

// Work threshold below which the OpenMP variants stay single-threaded.
inline constexpr std::int64_t kOmpMinWork = 1 << 15;

// c[m x p] = a[m x k] * b[k x p]
template <typename T>
void matmul_nn_serial(const T* a, const T* b, T* c, int m, int k, int p) {
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<std::size_t>(i) * p;
    std::fill(ci, ci + p, T(0));
    const T* ai = a + static_cast<std::size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const T av = ai[l];
      const T* bl = b + static_cast<std::size_t>(l) * p;
      for (int j = 0; j < p; ++j) ci[j] += av * bl[j];
    }
  }
}

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, int m, int k, int p) {
#ifdef _OPENMP
  const std::int64_t work = static_cast<std::int64_t>(m) * k * p;
#pragma omp parallel for schedule(static) if (work >= kOmpMinWork)
  for (int i = 0; i < m; ++i) matmul_nn_serial(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * p, 1, k, p);
#else
  matmul_nn_serial(a, b, c, m, k, p);
#endif
}

// c[m x p] = a[m x k] * b[p x k]^T
template <typename T>
void matmul_nt_serial(const T* a, const T* b, T* c, int m, int k, int p) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<std::size_t>(i) * k;
    T* ci = c + static_cast<std::size_t>(i) * p;
    for (int j = 0; j < p; ++j) {
      const T* bj = b + static_cast<std::size_t>(j) * k;
      T acc = T(0);
      for (int l = 0; l < k; ++l) acc += ai[l] * bj[l];
      ci[j] = acc;
    }
  }
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int m, int k, int p) {
#ifdef _OPENMP
  const std::int64_t work = static_cast<std::int64_t>(m) * k * p;
#pragma omp parallel for schedule(static) if (work >= kOmpMinWork)
  for (int i = 0; i < m; ++i) matmul_nt_serial(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * p, 1, k, p);
#else
  matmul_nt_serial(a, b, c, m, k, p);
#endif
}

// c[k x p] = a[m x k]^T * b[m x p]
template <typename T>
void matmul_tn_serial(const T* a, const T* b, T* c, int m, int k, int p) {
  std::fill(c, c + static_cast<std::size_t>(k) * p, T(0));
  for (int l = 0; l < m; ++l) {
    const T* al = a + static_cast<std::size_t>(l) * k;
    const T* bl = b + static_cast<std::size_t>(l) * p;
    for (int i = 0; i < k; ++i) {
      const T av = al[i];
      T* ci = c + static_cast<std::size_t>(i) * p;
      for (int j = 0; j < p; ++j) ci[j] += av * bl[j];
    }
  }
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int m, int k, int p) {
#ifdef _OPENMP
  const std::int64_t work = static_cast<std::int64_t>(m) * k * p;
  if (work >= kOmpMinWork) {
    // Parallel over output rows i (columns of a): each thread scans a,b once.
#pragma omp parallel for schedule(static)
    for (int i = 0; i < k; ++i) {
      T* ci = c + static_cast<std::size_t>(i) * p;
      std::fill(ci, ci + p, T(0));
      for (int l = 0; l < m; ++l) {
        const T av = a[static_cast<std::size_t>(l) * k + i];
        const T* bl = b + static_cast<std::size_t>(l) * p;
        for (int j = 0; j < p; ++j) ci[j] += av * bl[j];
      }
    }
    return;
  }
#endif
  matmul_tn_serial(a, b, c, m, k, p);
}

// Row-wise softmax with an additive mask. A row whose mask entries are all
// kNegInf yields an all-zero row; valid_row[i] reports which case happened.
// Masked entries are exactly 0 in the output.
template <typename T>
void masked_softmax_rows_serial(const T* x, const T* mask, T* y, bool* valid_row,
                                int rows, int cols) {
  const T cut = static_cast<T>(kNegInf / 2);
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<std::size_t>(i) * cols;
    const T* mi = mask + static_cast<std::size_t>(i) * cols;
    T* yi = y + static_cast<std::size_t>(i) * cols;
    T mx = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (int j = 0; j < cols; ++j) {
      if (mi[j] > cut) {
        any = true;
        mx = std::max(mx, xi[j]);
      }
    }
    if (valid_row) valid_row[i] = any;
    if (!any) {
      std::fill(yi, yi + cols, T(0));
      continue;
    }
    T denom = T(0);
    for (int j = 0; j < cols; ++j) {
      if (mi[j] > cut) {
        yi[j] = std::exp(xi[j] - mx);
        denom += yi[j];
      } else {
        yi[j] = T(0);
      }
    }
    const T inv = T(1) / denom;
    for (int j = 0; j < cols; ++j) yi[j] *= inv;
  }
}

template <typename T>
void masked_softmax_rows(const T* x, const T* mask, T* y, bool* valid_row,
                         int rows, int cols) {
#ifdef _OPENMP
  const std::int64_t work = static_cast<std::int64_t>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kOmpMinWork)
  for (int i = 0; i < rows; ++i)
    masked_softmax_rows_serial(x + static_cast<std::size_t>(i) * cols,
                               mask + static_cast<std::size_t>(i) * cols,
                               y + static_cast<std::size_t>(i) * cols,
                               valid_row ? valid_row + i : nullptr, 1, cols);
#else
  masked_softmax_rows_serial(x, mask, y, valid_row, rows, cols);
#endif
}

// Per-row standardization followed by the affine map gamma*x_hat + beta.
// Biased variance (divide by cols).
template <typename T>
void layer_norm_rows_serial(const T* x, const T* gamma, const T* beta, T eps,
                            T* y, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<std::size_t>(i) * cols;
    T* yi = y + static_cast<std::size_t>(i) * cols;
    T mean = T(0);
    for (int j = 0; j < cols; ++j) mean += xi[j];
    mean /= static_cast<T>(cols);
    T var = T(0);
    for (int j = 0; j < cols; ++j) {
      const T d = xi[j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(cols);
    const T inv = T(1) / std::sqrt(var + eps);
    for (int j = 0; j < cols; ++j) yi[j] = gamma[j] * ((xi[j] - mean) * inv) + beta[j];
  }
}

template <typename T>
void layer_norm_rows(const T* x, const T* gamma, const T* beta, T eps, T* y,
                     int rows, int cols) {
#ifdef _OPENMP
  const std::int64_t work = static_cast<std::int64_t>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kOmpMinWork)
  for (int i = 0; i < rows; ++i)
    layer_norm_rows_serial(x + static_cast<std::size_t>(i) * cols, gamma, beta, eps,
                           y + static_cast<std::size_t>(i) * cols, 1, cols);
#else
  layer_norm_rows_serial(x, gamma, beta, eps, y, rows, cols);
#endif
}

}  // namespace numkit::kernels
