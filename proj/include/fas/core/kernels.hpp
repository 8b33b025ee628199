#pragma once

#include "fas/core/tensor.hpp"

namespace fas::core::kernels {

// Execution mode. Serial variants are the reference implementations; the
// parallel variants assign every output element to exactly one thread and
// keep the inner accumulation order identical, so results are bit-equal.
enum class Exec { Serial, Parallel };

Exec default_exec();
void set_default_exec(Exec e);

// C[M,N] = A[M,K] * B[K,N]   (+= if accumulate)
void gemm(const double* a, const double* b, double* c,
          int64_t m, int64_t k, int64_t n, bool accumulate, Exec exec);

// C[M,N] = A[M,K] * B[N,K]^T
void gemm_nt(const double* a, const double* b, double* c,
             int64_t m, int64_t k, int64_t n, bool accumulate, Exec exec);

// C[M,N] = A[K,M]^T * B[K,N]
void gemm_tn(const double* a, const double* b, double* c,
             int64_t m, int64_t k, int64_t n, bool accumulate, Exec exec);

struct Conv2dShape {
    int64_t batch, in_ch, in_h, in_w;
    int64_t out_ch, kernel, stride, pad;
    int64_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
    int64_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

// One image worth of patches: cols[in_ch*k*k, out_h*out_w]
void im2col(const double* x, const Conv2dShape& s, double* cols);
// Gather form of the transpose: each input pixel sums its column entries.
void col2im(const double* cols, const Conv2dShape& s, double* dx, Exec exec);

// x: [n, ci, h, w]; w: [co, ci, k, k]; bias: [co] (may be null) -> y: [n, co, oh, ow]
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias,
                      int64_t stride, int64_t pad, Exec exec);

// dy: [n, co, oh, ow]. Computes dx (same shape as x), dw, db (each may be null).
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     int64_t stride, int64_t pad,
                     Tensor* dx, Tensor* dw, Tensor* db, Exec exec);

// Non-overlapping average pooling k x k (input dims must be divisible by k).
Tensor avg_pool(const Tensor& x, int64_t k, Exec exec);
Tensor avg_pool_backward(const Tensor& dy, int64_t k,
                         const std::vector<int64_t>& in_shape, Exec exec);

Tensor upsample_nearest2(const Tensor& x, Exec exec);
Tensor upsample_nearest2_backward(const Tensor& dy, Exec exec);

} // namespace fas::core::kernels
