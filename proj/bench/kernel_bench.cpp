// Compares the serial reference kernels against the OpenMP variants on
// training-shaped workloads and reports throughput.
#include <chrono>
#include <cstdio>

#include <omp.h>

#include "fas/core/kernels.hpp"
#include "fas/core/rng.hpp"

using namespace fas::core;
namespace K = fas::core::kernels;
using clock_type = std::chrono::steady_clock;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

void bench_gemm(int64_t m, int64_t k, int64_t n, int reps) {
    Rng rng(1);
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    Tensor c({m, n});
    const double flops = 2.0 * static_cast<double>(m * k * n) * reps;

    auto t0 = clock_type::now();
    for (int r = 0; r < reps; ++r)
        K::gemm(a.data(), b.data(), c.data(), m, k, n, false, K::Exec::Serial);
    const double ts = seconds_since(t0);

    t0 = clock_type::now();
    for (int r = 0; r < reps; ++r)
        K::gemm(a.data(), b.data(), c.data(), m, k, n, false, K::Exec::Parallel);
    const double tp = seconds_since(t0);

    std::printf("gemm %4lldx%4lldx%4lld  serial %7.2f ms (%5.2f GF/s)  omp %7.2f ms (%5.2f GF/s)  speedup %.2fx\n",
                (long long)m, (long long)k, (long long)n, ts * 1e3 / reps,
                flops / ts * 1e-9, tp * 1e3 / reps, flops / tp * 1e-9, ts / tp);
}

void bench_conv(int64_t batch, int64_t ci, int64_t hw, int64_t co, int reps) {
    Rng rng(2);
    Tensor x = random_tensor({batch, ci, hw, hw}, rng);
    Tensor w = random_tensor({co, ci, 3, 3}, rng);
    Tensor bias = random_tensor({co}, rng);
    const double flops = 2.0 * static_cast<double>(batch * co * ci * 9 * hw * hw) * reps;

    auto t0 = clock_type::now();
    for (int r = 0; r < reps; ++r)
        (void)K::conv2d_forward(x, w, &bias, 1, 1, K::Exec::Serial);
    const double ts = seconds_since(t0);

    t0 = clock_type::now();
    for (int r = 0; r < reps; ++r)
        (void)K::conv2d_forward(x, w, &bias, 1, 1, K::Exec::Parallel);
    const double tp = seconds_since(t0);

    std::printf("conv n=%lld %lldx%lldx%lld->%lld  serial %7.2f ms (%5.2f GF/s)  omp %7.2f ms (%5.2f GF/s)  speedup %.2fx\n",
                (long long)batch, (long long)ci, (long long)hw, (long long)hw,
                (long long)co, ts * 1e3 / reps, flops / ts * 1e-9, tp * 1e3 / reps,
                flops / tp * 1e-9, ts / tp);
}

} // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    bench_gemm(48, 108, 1024, 20);
    bench_gemm(64, 603, 1024, 10);
    bench_gemm(256, 256, 256, 20);
    bench_conv(8, 3, 32, 12, 20);
    bench_conv(8, 12, 32, 12, 10);
    bench_conv(8, 67, 32, 12, 5);
    bench_conv(8, 24, 16, 24, 20);
    return 0;
}
