#pragma once

#include <cstddef>

#include "grokkit/nd/tensor.hpp"

// Dense kernels used by the autodiff graph. Each kernel has an OpenMP-parallel
// version (the one the graph calls) and a plain serial twin under
// `reference::` that the tests and benchmarks compare against.
//
// Parallel kernels partition the *output* across threads and keep every
// reduction inside a single thread in a fixed order, so results are bitwise
// identical for any thread count.

namespace grokkit::nd::kernels {

enum class Trans { No, Yes };

/// c = op(a) * op(b), or c += op(a) * op(b) when `accumulate` is set.
/// `c` is resized when not accumulating.
template <typename T>
void gemm(Trans ta, Trans tb, const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c,
          bool accumulate = false);

/// Row-wise numerically stable softmax.
template <typename T>
void softmax_rows(const Tensor2<T>& x, Tensor2<T>& out);

/// Number of threads the parallel kernels will use.
int max_threads();

namespace reference {

template <typename T>
void gemm(Trans ta, Trans tb, const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c,
          bool accumulate = false);

template <typename T>
void softmax_rows(const Tensor2<T>& x, Tensor2<T>& out);

}  // namespace reference

}  // namespace grokkit::nd::kernels
