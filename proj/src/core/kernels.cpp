#include "fas/core/kernels.hpp"

#include <atomic>
#include <cstring>

namespace fas::core::kernels {

namespace {
std::atomic<Exec> g_default_exec{Exec::Parallel};

constexpr int64_t kRowBlock = 16;
constexpr int64_t kColBlock = 96;

inline int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }
} // namespace

Exec default_exec() { return g_default_exec.load(); }
void set_default_exec(Exec e) { g_default_exec.store(e); }

// Each (row-block, col-block) tile of C is produced by a single thread with
// the k loop ascending, so serial and parallel runs produce identical bits.
static void gemm_tile(const double* a, const double* b, double* c,
                      int64_t k, int64_t n,
                      int64_t i0, int64_t i1, int64_t j0, int64_t j1,
                      bool accumulate) {
    for (int64_t i = i0; i < i1; ++i) {
        double* crow = c + i * n;
        if (!accumulate) {
            for (int64_t j = j0; j < j1; ++j) crow[j] = 0.0;
        }
        const double* arow = a + i * k;
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + kk * n;
            for (int64_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm(const double* a, const double* b, double* c,
          int64_t m, int64_t k, int64_t n, bool accumulate, Exec exec) {
    const int64_t rb = ceil_div(m, kRowBlock);
    const int64_t cb = ceil_div(n, kColBlock);
    if (exec == Exec::Serial) {
        for (int64_t t = 0; t < rb * cb; ++t) {
            const int64_t i0 = (t / cb) * kRowBlock;
            const int64_t j0 = (t % cb) * kColBlock;
            gemm_tile(a, b, c, k, n, i0, std::min(i0 + kRowBlock, m),
                      j0, std::min(j0 + kColBlock, n), accumulate);
        }
        return;
    }
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < rb * cb; ++t) {
        const int64_t i0 = (t / cb) * kRowBlock;
        const int64_t j0 = (t % cb) * kColBlock;
        gemm_tile(a, b, c, k, n, i0, std::min(i0 + kRowBlock, m),
                  j0, std::min(j0 + kColBlock, n), accumulate);
    }
}

// C[M,N] = A[M,K] * B[N,K]^T -- dot products of rows, k ascending.
static void gemm_nt_rows(const double* a, const double* b, double* c,
                         int64_t k, int64_t n, int64_t i0, int64_t i1,
                         bool accumulate) {
    for (int64_t i = i0; i < i1; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void gemm_nt(const double* a, const double* b, double* c,
             int64_t m, int64_t k, int64_t n, bool accumulate, Exec exec) {
    if (exec == Exec::Serial) {
        gemm_nt_rows(a, b, c, k, n, 0, m, accumulate);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i)
        gemm_nt_rows(a, b, c, k, n, i, i + 1, accumulate);
}

// C[M,N] = A[K,M]^T * B[K,N]
static void gemm_tn_tile(const double* a, const double* b, double* c,
                         int64_t m, int64_t k, int64_t n,
                         int64_t i0, int64_t i1, int64_t j0, int64_t j1,
                         bool accumulate) {
    for (int64_t i = i0; i < i1; ++i) {
        double* crow = c + i * n;
        if (!accumulate) {
            for (int64_t j = j0; j < j1; ++j) crow[j] = 0.0;
        }
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = a[kk * m + i];
            const double* brow = b + kk * n;
            for (int64_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_tn(const double* a, const double* b, double* c,
             int64_t m, int64_t k, int64_t n, bool accumulate, Exec exec) {
    const int64_t rb = ceil_div(m, kRowBlock);
    const int64_t cb = ceil_div(n, kColBlock);
    if (exec == Exec::Serial) {
        for (int64_t t = 0; t < rb * cb; ++t) {
            const int64_t i0 = (t / cb) * kRowBlock;
            const int64_t j0 = (t % cb) * kColBlock;
            gemm_tn_tile(a, b, c, m, k, n, i0, std::min(i0 + kRowBlock, m),
                         j0, std::min(j0 + kColBlock, n), accumulate);
        }
        return;
    }
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < rb * cb; ++t) {
        const int64_t i0 = (t / cb) * kRowBlock;
        const int64_t j0 = (t % cb) * kColBlock;
        gemm_tn_tile(a, b, c, m, k, n, i0, std::min(i0 + kRowBlock, m),
                     j0, std::min(j0 + kColBlock, n), accumulate);
    }
}

void im2col(const double* x, const Conv2dShape& s, double* cols) {
    const int64_t oh = s.out_h(), ow = s.out_w();
    const int64_t p = oh * ow;
    for (int64_t ci = 0; ci < s.in_ch; ++ci) {
        const double* plane = x + ci * s.in_h * s.in_w;
        for (int64_t ky = 0; ky < s.kernel; ++ky) {
            for (int64_t kx = 0; kx < s.kernel; ++kx) {
                double* row = cols + ((ci * s.kernel + ky) * s.kernel + kx) * p;
                for (int64_t oy = 0; oy < oh; ++oy) {
                    const int64_t iy = oy * s.stride + ky - s.pad;
                    if (iy < 0 || iy >= s.in_h) {
                        for (int64_t ox = 0; ox < ow; ++ox) row[oy * ow + ox] = 0.0;
                        continue;
                    }
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        const int64_t ix = ox * s.stride + kx - s.pad;
                        row[oy * ow + ox] =
                            (ix >= 0 && ix < s.in_w) ? plane[iy * s.in_w + ix] : 0.0;
                    }
                }
            }
        }
    }
}

// Gather: dx[ci,y,x] = sum over (ky,kx) of the matching column entries.
void col2im(const double* cols, const Conv2dShape& s, double* dx, Exec exec) {
    const int64_t oh = s.out_h(), ow = s.out_w();
    const int64_t p = oh * ow;
    auto run = [&](int64_t ci) {
        double* plane = dx + ci * s.in_h * s.in_w;
        for (int64_t y = 0; y < s.in_h; ++y) {
            for (int64_t x = 0; x < s.in_w; ++x) {
                double acc = 0.0;
                for (int64_t ky = 0; ky < s.kernel; ++ky) {
                    const int64_t ty = y + s.pad - ky;
                    if (ty < 0 || ty % s.stride) continue;
                    const int64_t oy = ty / s.stride;
                    if (oy >= oh) continue;
                    for (int64_t kx = 0; kx < s.kernel; ++kx) {
                        const int64_t tx = x + s.pad - kx;
                        if (tx < 0 || tx % s.stride) continue;
                        const int64_t ox = tx / s.stride;
                        if (ox >= ow) continue;
                        acc += cols[((ci * s.kernel + ky) * s.kernel + kx) * p + oy * ow + ox];
                    }
                }
                plane[y * s.in_w + x] += acc;
            }
        }
    };
    if (exec == Exec::Serial) {
        for (int64_t ci = 0; ci < s.in_ch; ++ci) run(ci);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int64_t ci = 0; ci < s.in_ch; ++ci) run(ci);
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias,
                      int64_t stride, int64_t pad, Exec exec) {
    const Conv2dShape s{x.dim(0), x.dim(1), x.dim(2), x.dim(3),
                        w.dim(0), w.dim(2), stride, pad};
    if (w.dim(1) != s.in_ch)
        throw std::invalid_argument("conv2d_forward: channel mismatch");
    const int64_t oh = s.out_h(), ow = s.out_w();
    const int64_t p = oh * ow;
    const int64_t kdim = s.in_ch * s.kernel * s.kernel;
    Tensor y({s.batch, s.out_ch, oh, ow});
    std::vector<double> cols(static_cast<size_t>(kdim * p));
    for (int64_t n = 0; n < s.batch; ++n) {
        im2col(x.data() + n * s.in_ch * s.in_h * s.in_w, s, cols.data());
        gemm(w.data(), cols.data(), y.data() + n * s.out_ch * p,
             s.out_ch, kdim, p, false, exec);
        if (bias) {
            double* yn = y.data() + n * s.out_ch * p;
            for (int64_t co = 0; co < s.out_ch; ++co) {
                const double b = (*bias)[co];
                for (int64_t i = 0; i < p; ++i) yn[co * p + i] += b;
            }
        }
    }
    return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     int64_t stride, int64_t pad,
                     Tensor* dx, Tensor* dw, Tensor* db, Exec exec) {
    const Conv2dShape s{x.dim(0), x.dim(1), x.dim(2), x.dim(3),
                        w.dim(0), w.dim(2), stride, pad};
    const int64_t oh = s.out_h(), ow = s.out_w();
    const int64_t p = oh * ow;
    const int64_t kdim = s.in_ch * s.kernel * s.kernel;
    std::vector<double> cols(static_cast<size_t>(kdim * p));
    std::vector<double> dcols(static_cast<size_t>(kdim * p));
    for (int64_t n = 0; n < s.batch; ++n) {
        const double* dyn = dy.data() + n * s.out_ch * p;
        if (dw || db || dx) {
            if (dw) {
                im2col(x.data() + n * s.in_ch * s.in_h * s.in_w, s, cols.data());
                // dw[co,kdim] += dy_n[co,p] * cols[kdim,p]^T
                gemm_nt(dyn, cols.data(), dw->data(), s.out_ch, p, kdim, true, exec);
            }
            if (db) {
                for (int64_t co = 0; co < s.out_ch; ++co) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < p; ++i) acc += dyn[co * p + i];
                    (*db)[co] += acc;
                }
            }
            if (dx) {
                // dcols[kdim,p] = w[co,kdim]^T * dy_n[co,p]
                gemm_tn(w.data(), dyn, dcols.data(), kdim, s.out_ch, p, false, exec);
                col2im(dcols.data(), s, dx->data() + n * s.in_ch * s.in_h * s.in_w, exec);
            }
        }
    }
}

Tensor avg_pool(const Tensor& x, int64_t k, Exec exec) {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % k || w % k) throw std::invalid_argument("avg_pool: size not divisible");
    const int64_t oh = h / k, ow = w / k;
    Tensor y({n, c, oh, ow});
    const double inv = 1.0 / static_cast<double>(k * k);
    auto run = [&](int64_t nc) {
        const int64_t ni = nc / c, ci = nc % c;
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int64_t dy = 0; dy < k; ++dy)
                    for (int64_t dx0 = 0; dx0 < k; ++dx0)
                        acc += x.at(ni, ci, oy * k + dy, ox * k + dx0);
                y.at(ni, ci, oy, ox) = acc * inv;
            }
    };
    if (exec == Exec::Serial) {
        for (int64_t t = 0; t < n * c; ++t) run(t);
    } else {
#pragma omp parallel for schedule(static)
        for (int64_t t = 0; t < n * c; ++t) run(t);
    }
    return y;
}

Tensor avg_pool_backward(const Tensor& dy, int64_t k,
                         const std::vector<int64_t>& in_shape, Exec exec) {
    Tensor dx(in_shape);
    const int64_t n = in_shape[0], c = in_shape[1];
    const int64_t oh = dy.dim(2), ow = dy.dim(3);
    const double inv = 1.0 / static_cast<double>(k * k);
    auto run = [&](int64_t nc) {
        const int64_t ni = nc / c, ci = nc % c;
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                const double g = dy.at(ni, ci, oy, ox) * inv;
                for (int64_t dyk = 0; dyk < k; ++dyk)
                    for (int64_t dxk = 0; dxk < k; ++dxk)
                        dx.at(ni, ci, oy * k + dyk, ox * k + dxk) = g;
            }
    };
    if (exec == Exec::Serial) {
        for (int64_t t = 0; t < n * c; ++t) run(t);
    } else {
#pragma omp parallel for schedule(static)
        for (int64_t t = 0; t < n * c; ++t) run(t);
    }
    return dx;
}

Tensor upsample_nearest2(const Tensor& x, Exec exec) {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({n, c, h * 2, w * 2});
    auto run = [&](int64_t nc) {
        const int64_t ni = nc / c, ci = nc % c;
        for (int64_t yy = 0; yy < h * 2; ++yy)
            for (int64_t xx = 0; xx < w * 2; ++xx)
                y.at(ni, ci, yy, xx) = x.at(ni, ci, yy / 2, xx / 2);
    };
    if (exec == Exec::Serial) {
        for (int64_t t = 0; t < n * c; ++t) run(t);
    } else {
#pragma omp parallel for schedule(static)
        for (int64_t t = 0; t < n * c; ++t) run(t);
    }
    return y;
}

Tensor upsample_nearest2_backward(const Tensor& dy, Exec exec) {
    const int64_t n = dy.dim(0), c = dy.dim(1), h = dy.dim(2) / 2, w = dy.dim(3) / 2;
    Tensor dx({n, c, h, w});
    auto run = [&](int64_t nc) {
        const int64_t ni = nc / c, ci = nc % c;
        for (int64_t yy = 0; yy < h; ++yy)
            for (int64_t xx = 0; xx < w; ++xx) {
                double acc = 0.0;
                for (int64_t dyk = 0; dyk < 2; ++dyk)
                    for (int64_t dxk = 0; dxk < 2; ++dxk)
                        acc += dy.at(ni, ci, yy * 2 + dyk, xx * 2 + dxk);
                dx.at(ni, ci, yy, xx) = acc;
            }
    };
    if (exec == Exec::Serial) {
        for (int64_t t = 0; t < n * c; ++t) run(t);
    } else {
#pragma omp parallel for schedule(static)
        for (int64_t t = 0; t < n * c; ++t) run(t);
    }
    return dx;
}

} // namespace fas::core::kernels
