#include "grokkit/nd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace grokkit::nd::kernels {

namespace {

struct GemmShape {
  std::size_t m, n, k;
};

template <typename T>
GemmShape check_gemm(Trans ta, Trans tb, const Tensor2<T>& a, const Tensor2<T>& b) {
  const std::size_t m = ta == Trans::No ? a.rows() : a.cols();
  const std::size_t ka = ta == Trans::No ? a.cols() : a.rows();
  const std::size_t kb = tb == Trans::No ? b.rows() : b.cols();
  const std::size_t n = tb == Trans::No ? b.cols() : b.rows();
  if (ka != kb) {
    throw DimensionError("matmul: inner dimensions differ, lhs " + a.shape() +
                         (ta == Trans::Yes ? "^T" : "") + " vs rhs " + b.shape() +
                         (tb == Trans::Yes ? "^T" : ""));
  }
  return {m, n, ka};
}

template <typename T>
void prepare_output(Tensor2<T>& c, std::size_t m, std::size_t n, bool accumulate) {
  if (accumulate) {
    if (c.rows() != m || c.cols() != n) {
      throw DimensionError("matmul: accumulator shape " + c.shape() + " vs result " +
                           Tensor2<T>::shape_string(m, n));
    }
  } else if (c.rows() != m || c.cols() != n) {
    c = Tensor2<T>(m, n);
  } else {
    c.fill(T(0));
  }
}

// Register-tiled block: C[0:MR, 0:NR] += A[0:MR, 0:k] * B[0:k, 0:NR].
// A(r, l) lives at a[r * a_rs + l * a_cs]; B is row-major with leading dim ldb.
template <typename T, int MR, int NR>
inline void micro_tile(const T* a, std::size_t a_rs, std::size_t a_cs, const T* b, std::size_t ldb,
                       T* c, std::size_t ldc, std::size_t k) {
  T acc[MR][NR] = {};
  for (std::size_t l = 0; l < k; ++l) {
    const T* brow = b + l * ldb;
    for (int r = 0; r < MR; ++r) {
      const T av = a[r * a_rs + l * a_cs];
#pragma omp simd
      for (int j = 0; j < NR; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (int r = 0; r < MR; ++r)
    for (int j = 0; j < NR; ++j) c[r * ldc + j] += acc[r][j];
}

// Generic remainder block of size rows x cols.
template <typename T>
inline void edge_tile(const T* a, std::size_t a_rs, std::size_t a_cs, const T* b, std::size_t ldb,
                      T* c, std::size_t ldc, std::size_t k, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* crow = c + r * ldc;
    for (std::size_t l = 0; l < k; ++l) {
      const T av = a[r * a_rs + l * a_cs];
      const T* brow = b + l * ldb;
#pragma omp simd
      for (std::size_t j = 0; j < cols; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
constexpr int tile_cols() {
  return 64 / static_cast<int>(sizeof(T)) * 2;  // two cache lines per row
}

// C (m x n) += A * B, A addressed via strides, B row-major k x n.
template <typename T>
void gemm_tiled(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_rs,
                std::size_t a_cs, const T* b, T* c) {
  constexpr int MR = 4;
  constexpr int NR = tile_cols<T>();
  const std::int64_t row_blocks = static_cast<std::int64_t>((m + MR - 1) / MR);
  // Bound the k-panel so a B panel stays cache resident across row blocks.
  const std::size_t kc = 256;
#pragma omp parallel for schedule(static)
  for (std::int64_t rb = 0; rb < row_blocks; ++rb) {
    const std::size_t i0 = static_cast<std::size_t>(rb) * MR;
    const std::size_t rows = std::min<std::size_t>(MR, m - i0);
    for (std::size_t l0 = 0; l0 < k; l0 += kc) {
      const std::size_t kk = std::min(kc, k - l0);
      const T* ablk = a + i0 * a_rs + l0 * a_cs;
      const T* bblk = b + l0 * n;
      std::size_t j0 = 0;
      if (rows == MR) {
        for (; j0 + NR <= n; j0 += NR)
          micro_tile<T, MR, NR>(ablk, a_rs, a_cs, bblk + j0, n, c + i0 * n + j0, n, kk);
      }
      if (j0 < n) edge_tile(ablk, a_rs, a_cs, bblk + j0, n, c + i0 * n + j0, n, kk, rows, n - j0);
    }
  }
}

// C (m x n) += A * Bt^T with A row-major m x k and Bt row-major n x k.
// Used when n is too narrow for column tiling.
template <typename T>
void gemm_dots(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* bt, T* c) {
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(m); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = bt + j * k;
      T s = T(0);
#pragma omp simd reduction(+ : s)
      for (std::size_t l = 0; l < k; ++l) s += arow[l] * brow[l];
      c[i * n + j] += s;
    }
  }
}

template <typename T>
Tensor2<T> transpose_of(const Tensor2<T>& x) {
  Tensor2<T> t(x.cols(), x.rows());
  const std::size_t r = x.rows(), cc = x.cols();
  constexpr std::size_t blk = 32;
  for (std::size_t i0 = 0; i0 < r; i0 += blk)
    for (std::size_t j0 = 0; j0 < cc; j0 += blk)
      for (std::size_t i = i0; i < std::min(r, i0 + blk); ++i)
        for (std::size_t j = j0; j < std::min(cc, j0 + blk); ++j) t(j, i) = x(i, j);
  return t;
}

constexpr std::size_t kNarrow = 16;

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename T>
void gemm(Trans ta, Trans tb, const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c,
          bool accumulate) {
  const auto [m, n, k] = check_gemm(ta, tb, a, b);
  prepare_output(c, m, n, accumulate);
  if (m == 0 || n == 0 || k == 0) return;

  if (n < kNarrow && m >= n) {
    // Narrow output: dot products over contiguous rows.
    if (ta == Trans::No) {
      if (tb == Trans::Yes) {
        gemm_dots(m, n, k, a.data().data(), b.data().data(), c.data().data());
      } else {
        const Tensor2<T> bt = transpose_of(b);
        gemm_dots(m, n, k, a.data().data(), bt.data().data(), c.data().data());
      }
      return;
    }
    // op(A) = A^T: compute C^T = op(B)^T * A with A row-major (k x m).
    Tensor2<T> ct(n, m);
    if (tb == Trans::No) {
      // op(B)^T(r, l) = B(l, r): strided rows, contiguous B panel = A.
      gemm_tiled(n, m, k, b.data().data(), std::size_t{1}, n, a.data().data(), ct.data().data());
    } else {
      gemm_tiled(n, m, k, b.data().data(), k, std::size_t{1}, a.data().data(), ct.data().data());
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c(i, j) += ct(j, i);
    return;
  }

  const T* bp = b.data().data();
  Tensor2<T> bt;
  if (tb == Trans::Yes) {
    bt = transpose_of(b);
    bp = bt.data().data();
  }
  if (ta == Trans::No) {
    gemm_tiled(m, n, k, a.data().data(), k, std::size_t{1}, bp, c.data().data());
  } else {
    gemm_tiled(m, n, k, a.data().data(), std::size_t{1}, m, bp, c.data().data());
  }
}

template <typename T>
void softmax_rows(const Tensor2<T>& x, Tensor2<T>& out) {
  if (!out.same_shape(x)) out = Tensor2<T>(x.rows(), x.cols());
  const std::size_t cols = x.cols();
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(x.rows()); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const T* xr = x.data().data() + i * cols;
    T* orow = out.data().data() + i * cols;
    T mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    T s = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      orow[j] = std::exp(xr[j] - mx);
      s += orow[j];
    }
    const T inv = T(1) / s;
    for (std::size_t j = 0; j < cols; ++j) orow[j] *= inv;
  }
}

namespace reference {

template <typename T>
void gemm(Trans ta, Trans tb, const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c,
          bool accumulate) {
  const auto [m, n, k] = check_gemm(ta, tb, a, b);
  prepare_output(c, m, n, accumulate);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = T(0);
      for (std::size_t l = 0; l < k; ++l) {
        const T av = ta == Trans::No ? a(i, l) : a(l, i);
        const T bv = tb == Trans::No ? b(l, j) : b(j, l);
        s += av * bv;
      }
      c(i, j) += s;
    }
  }
}

template <typename T>
void softmax_rows(const Tensor2<T>& x, Tensor2<T>& out) {
  out = Tensor2<T>(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    T mx = x(i, 0);
    for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
    T s = T(0);
    for (std::size_t j = 0; j < x.cols(); ++j) s += std::exp(x(i, j) - mx);
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = std::exp(x(i, j) - mx) / s;
  }
}

template void gemm<float>(Trans, Trans, const Tensor2<float>&, const Tensor2<float>&,
                          Tensor2<float>&, bool);
template void gemm<double>(Trans, Trans, const Tensor2<double>&, const Tensor2<double>&,
                           Tensor2<double>&, bool);
template void softmax_rows<float>(const Tensor2<float>&, Tensor2<float>&);
template void softmax_rows<double>(const Tensor2<double>&, Tensor2<double>&);

}  // namespace reference

template void gemm<float>(Trans, Trans, const Tensor2<float>&, const Tensor2<float>&,
                          Tensor2<float>&, bool);
template void gemm<double>(Trans, Trans, const Tensor2<double>&, const Tensor2<double>&,
                           Tensor2<double>&, bool);
template void softmax_rows<float>(const Tensor2<float>&, Tensor2<float>&);
template void softmax_rows<double>(const Tensor2<double>&, Tensor2<double>&);

}  // namespace grokkit::nd::kernels
