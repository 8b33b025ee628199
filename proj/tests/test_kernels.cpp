#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fas/core/kernels.hpp"
#include "fas/core/rng.hpp"

using namespace fas::core;
namespace K = fas::core::kernels;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// textbook three-loop reference
void naive_gemm(const Tensor& a, const Tensor& b, Tensor& c) {
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0;
            for (int64_t kk = 0; kk < k; ++kk) acc += a.at(i, kk) * b.at(kk, j);
            c.at(i, j) = acc;
        }
}

Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride,
                  int64_t pad) {
    const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), ww = x.dim(3);
    const int64_t co = w.dim(0), k = w.dim(2);
    const int64_t oh = (h + 2 * pad - k) / stride + 1;
    const int64_t ow = (ww + 2 * pad - k) / stride + 1;
    Tensor y({n, co, oh, ow});
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t c = 0; c < co; ++c)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double acc = bias.numel() ? bias[c] : 0.0;
                    for (int64_t cc = 0; cc < ci; ++cc)
                        for (int64_t ky = 0; ky < k; ++ky)
                            for (int64_t kx = 0; kx < k; ++kx) {
                                const int64_t iy = oy * stride + ky - pad;
                                const int64_t ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= ww) continue;
                                acc += x.at(ni, cc, iy, ix) * w.at(c, cc, ky, kx);
                            }
                    y.at(ni, c, oy, ox) = acc;
                }
    return y;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

} // namespace

TEST_CASE("gemm matches naive reference") {
    Rng rng(42);
    for (auto [m, k, n] : {std::tuple<int64_t, int64_t, int64_t>{3, 5, 7},
                           {17, 33, 129},
                           {1, 600, 1024},
                           {48, 108, 256}}) {
        Tensor a = random_tensor({m, k}, rng);
        Tensor b = random_tensor({k, n}, rng);
        Tensor want({m, n}), got({m, n});
        naive_gemm(a, b, want);
        K::gemm(a.data(), b.data(), got.data(), m, k, n, false, K::Exec::Serial);
        for (int64_t i = 0; i < want.numel(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("parallel kernels are bit-identical to serial") {
    Rng rng(7);
    const int64_t m = 37, k = 211, n = 403;
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    Tensor c1({m, n}), c2({m, n});
    K::gemm(a.data(), b.data(), c1.data(), m, k, n, false, K::Exec::Serial);
    K::gemm(a.data(), b.data(), c2.data(), m, k, n, false, K::Exec::Parallel);
    CHECK(bit_equal(c1, c2));

    Tensor bt = random_tensor({n, k}, rng);
    Tensor d1({m, n}), d2({m, n});
    K::gemm_nt(a.data(), bt.data(), d1.data(), m, k, n, false, K::Exec::Serial);
    K::gemm_nt(a.data(), bt.data(), d2.data(), m, k, n, false, K::Exec::Parallel);
    CHECK(bit_equal(d1, d2));

    Tensor at = random_tensor({k, m}, rng);
    Tensor e1({m, n}), e2({m, n});
    K::gemm_tn(at.data(), b.data(), e1.data(), m, k, n, false, K::Exec::Serial);
    K::gemm_tn(at.data(), b.data(), e2.data(), m, k, n, false, K::Exec::Parallel);
    CHECK(bit_equal(e1, e2));

    Tensor x = random_tensor({2, 5, 16, 16}, rng);
    Tensor w = random_tensor({8, 5, 3, 3}, rng, -0.5, 0.5);
    Tensor bias = random_tensor({8}, rng);
    Tensor ys = K::conv2d_forward(x, w, &bias, 1, 1, K::Exec::Serial);
    Tensor yp = K::conv2d_forward(x, w, &bias, 1, 1, K::Exec::Parallel);
    CHECK(bit_equal(ys, yp));

    Tensor dy = random_tensor(ys.shape(), rng);
    Tensor dxs(x.shape()), dws(w.shape()), dbs({8});
    Tensor dxp(x.shape()), dwp(w.shape()), dbp({8});
    K::conv2d_backward(x, w, dy, 1, 1, &dxs, &dws, &dbs, K::Exec::Serial);
    K::conv2d_backward(x, w, dy, 1, 1, &dxp, &dwp, &dbp, K::Exec::Parallel);
    CHECK(bit_equal(dxs, dxp));
    CHECK(bit_equal(dws, dwp));
    CHECK(bit_equal(dbs, dbp));
}

TEST_CASE("conv2d_forward matches naive convolution") {
    Rng rng(11);
    for (auto [stride, pad] : {std::pair<int64_t, int64_t>{1, 1}, {2, 1}, {1, 0}}) {
        Tensor x = random_tensor({2, 3, 12, 12}, rng);
        Tensor w = random_tensor({6, 3, 3, 3}, rng, -0.5, 0.5);
        Tensor bias = random_tensor({6}, rng);
        Tensor want = naive_conv(x, w, bias, stride, pad);
        Tensor got = K::conv2d_forward(x, w, &bias, stride, pad, K::Exec::Parallel);
        REQUIRE(got.shape() == want.shape());
        for (int64_t i = 0; i < want.numel(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d_backward gradients match finite differences") {
    Rng rng(3);
    Tensor x = random_tensor({1, 2, 6, 6}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
    Tensor bias = random_tensor({3}, rng);
    const int64_t stride = 2, pad = 1;

    // scalar objective: weighted sum of outputs
    Tensor y0 = K::conv2d_forward(x, w, &bias, stride, pad, K::Exec::Serial);
    Tensor coef = random_tensor(y0.shape(), rng);
    auto objective = [&](const Tensor& xx, const Tensor& ww, const Tensor& bb) {
        Tensor y = K::conv2d_forward(xx, ww, &bb, stride, pad, K::Exec::Serial);
        double s = 0;
        for (int64_t i = 0; i < y.numel(); ++i) s += y[i] * coef[i];
        return s;
    };

    Tensor dx(x.shape()), dw(w.shape()), db({3});
    K::conv2d_backward(x, w, coef, stride, pad, &dx, &dw, &db, K::Exec::Serial);

    const double h = 1e-6;
    for (int64_t i = 0; i < x.numel(); i += 7) {
        Tensor xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (objective(xp, w, bias) - objective(xm, w, bias)) / (2 * h);
        CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (int64_t i = 0; i < w.numel(); i += 5) {
        Tensor wp = w, wm = w;
        wp[i] += h;
        wm[i] -= h;
        const double fd = (objective(x, wp, bias) - objective(x, wm, bias)) / (2 * h);
        CHECK(dw[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (int64_t i = 0; i < 3; ++i) {
        Tensor bp = bias, bm = bias;
        bp[i] += h;
        bm[i] -= h;
        const double fd = (objective(x, w, bp) - objective(x, w, bm)) / (2 * h);
        CHECK(db[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("pooling and upsampling round shapes correctly") {
    Rng rng(5);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor y = K::avg_pool(x, 2, K::Exec::Parallel);
    CHECK(y.shape() == std::vector<int64_t>{2, 3, 4, 4});
    CHECK(y.at(0, 0, 0, 0) ==
          doctest::Approx((x.at(0, 0, 0, 0) + x.at(0, 0, 0, 1) + x.at(0, 0, 1, 0) +
                           x.at(0, 0, 1, 1)) /
                          4.0));
    Tensor up = K::upsample_nearest2(y, K::Exec::Serial);
    CHECK(up.shape() == x.shape());
    CHECK(up.at(0, 0, 1, 1) == y.at(0, 0, 0, 0));
}
