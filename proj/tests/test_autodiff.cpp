#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <functional>

#include "fas/core/autodiff.hpp"
#include "fas/core/nn.hpp"
#include "fas/core/rng.hpp"

using namespace fas::core;
namespace ad = fas::core::ad;
namespace nn = fas::core::nn;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Central finite differences against the analytic gradient of a scalar graph.
void gradcheck(Tensor x0, const std::function<ad::Var(const ad::Var&)>& f,
               double h = 1e-6, double tol = 1e-5, int64_t stride = 1) {
    ad::Var x = ad::Var::leaf(x0);
    ad::Var y = f(x);
    REQUIRE(y.val().numel() == 1);
    x.zero_grad();
    ad::backward(y);
    Tensor g = x.grad();
    for (int64_t i = 0; i < x0.numel(); i += stride) {
        Tensor xp = x0, xm = x0;
        xp[i] += h;
        xm[i] -= h;
        const double fp = f(ad::Var::leaf(xp)).val()[0];
        const double fm = f(ad::Var::leaf(xm)).val()[0];
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
        CHECK_MESSAGE(std::abs(g[i] - fd) / denom < tol,
                      "index ", i, " analytic ", g[i], " fd ", fd);
    }
}

} // namespace

TEST_CASE("elementwise op gradients") {
    Rng rng(1);
    Tensor x0 = random_tensor({2, 6}, rng, 0.2, 1.5);

    gradcheck(x0, [](const ad::Var& x) { return ad::mean_all(ad::square(x)); });
    gradcheck(x0, [](const ad::Var& x) { return ad::sum_all(ad::sqrt_(x)); });
    gradcheck(x0, [](const ad::Var& x) {
        return ad::mean_all(ad::mul(ad::sigmoid(x), ad::add_scalar(x, 0.3)));
    });
    gradcheck(x0, [](const ad::Var& x) {
        return ad::mean_all(ad::leaky_relu(ad::rsub_scalar(0.9, x), 0.1));
    });
    gradcheck(x0, [](const ad::Var& x) { return ad::sum_all(ad::softplus(x)); });
    const Tensor coef = random_tensor({2, 6}, rng);
    gradcheck(x0, [&](const ad::Var& x) {
        return ad::mean_all(ad::mul(x, ad::constant(coef)));
    });
}

TEST_CASE("structured op gradients") {
    Rng rng(2);

    SUBCASE("conv + pool + dense pipeline") {
        Tensor x0 = random_tensor({2, 3, 8, 8}, rng);
        Rng prng(3);
        nn::ParamSet ps;
        nn::Conv2d conv(ps, "c", 3, 4, 3, 2, 1, prng);
        nn::Dense fc(ps, "f", 4, 3, prng);
        auto f = [&](const ad::Var& x) {
            ad::Var h = ad::leaky_relu(conv(x));
            h = ad::global_avg_pool(h);
            return ad::mean_all(ad::square(fc(h)));
        };
        gradcheck(x0, f, 1e-6, 1e-4, 3);

        // and through the parameters
        ad::Var y = f(ad::Var::leaf(x0));
        ps.zero_grads();
        ad::backward(y);
        Tensor wgrad = conv.w.grad();
        const double h = 1e-6;
        for (int64_t i = 0; i < wgrad.numel(); i += 17) {
            const double keep = conv.w.val()[i];
            conv.w.val()[i] = keep + h;
            const double fp = f(ad::Var::leaf(x0)).val()[0];
            conv.w.val()[i] = keep - h;
            const double fm = f(ad::Var::leaf(x0)).val()[0];
            conv.w.val()[i] = keep;
            const double fd = (fp - fm) / (2 * h);
            CHECK(wgrad[i] == doctest::Approx(fd).epsilon(1e-4));
        }
    }

    SUBCASE("upsample + concat") {
        Tensor x0 = random_tensor({1, 2, 4, 4}, rng);
        gradcheck(x0, [](const ad::Var& x) {
            ad::Var up = ad::upsample_nearest2(ad::avg_pool(x, 2));
            return ad::mean_all(ad::square(ad::concat_channels(x, up)));
        });
    }

    SUBCASE("row and channel normalization") {
        Tensor x0 = random_tensor({3, 5}, rng, 0.1, 2.0);
        const Tensor row_ref = random_tensor({3, 5}, rng);
        gradcheck(x0, [&](const ad::Var& x) {
            return ad::mean_all(
                ad::square(ad::sub(ad::l2_normalize_rows(x), ad::constant(row_ref))));
        });
        gradcheck(x0, [&](const ad::Var& x) {
            ad::Var n = ad::l2_normalize_rows(x);
            return ad::sum_all(ad::rowwise_dot(n, ad::constant(row_ref)));
        });
        Tensor img0 = random_tensor({1, 4, 3, 3}, rng, 0.1, 1.0);
        const Tensor ch_ref = random_tensor({1, 4, 3, 3}, rng);
        gradcheck(img0, [&](const ad::Var& x) {
            return ad::mean_all(
                ad::square(ad::sub(ad::channel_l2_normalize(x), ad::constant(ch_ref))));
        });
        Tensor wc({4});
        for (int64_t i = 0; i < 4; ++i) wc[i] = 0.5 + 0.25 * static_cast<double>(i);
        gradcheck(img0, [&](const ad::Var& x) {
            return ad::mean_all(ad::scale_channels(ad::square(x), wc));
        });
    }

    SUBCASE("logsumexp and select") {
        Tensor x0 = random_tensor({4, 6}, rng, -2.0, 2.0);
        std::vector<int64_t> idx{1, 0, 5, 3};
        gradcheck(x0, [&](const ad::Var& x) {
            return ad::mean_all(ad::sub(ad::logsumexp_rows(x), ad::select_cols(x, idx)));
        });
    }
}

TEST_CASE("gradient accumulates across reuse") {
    Tensor x0({2}, {3.0, -1.0});
    ad::Var x = ad::Var::leaf(x0);
    ad::Var y = ad::sum_all(ad::add(ad::mul(x, x), x)); // d/dx = 2x + 1
    ad::backward(y);
    CHECK(x.grad()[0] == doctest::Approx(7.0));
    CHECK(x.grad()[1] == doctest::Approx(-1.0));
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
    Rng rng(4);
    nn::ParamSet ps;
    ad::Var p = ps.add("p", random_tensor({3, 3}, rng));
    Tensor before = p.val();
    nn::Adam opt(1e-2);
    ps.zero_grads();
    p.grad_mut(); // allocate zero grad
    opt.step(ps);
    for (int64_t i = 0; i < before.numel(); ++i) CHECK(p.val()[i] == before[i]);
}

TEST_CASE("plateau schedule decays by 20 percent after 5 flat epochs") {
    nn::PlateauSchedule sched(0.8, 5, 1e-4);
    CHECK(sched.observe(1.0) == doctest::Approx(1.0));
    for (int i = 0; i < 4; ++i) CHECK(sched.observe(1.0) == doctest::Approx(1.0));
    CHECK(sched.observe(1.0) == doctest::Approx(0.8)); // 5th flat epoch
    for (int i = 0; i < 4; ++i) CHECK(sched.observe(1.0) == doctest::Approx(0.8));
    CHECK(sched.observe(1.0) == doctest::Approx(0.64)); // 10th flat epoch
    // improvement resets the counter
    nn::PlateauSchedule s2(0.8, 5, 1e-4);
    for (int i = 0; i < 4; ++i) s2.observe(1.0);
    s2.observe(0.5);
    for (int i = 0; i < 4; ++i) CHECK(s2.observe(0.5) == doctest::Approx(1.0));
}

TEST_CASE("step decay schedule") {
    CHECK(nn::step_decay_lr(5e-5, 0, 20000, 0.9) == doctest::Approx(5e-5));
    CHECK(nn::step_decay_lr(5e-5, 19999, 20000, 0.9) == doctest::Approx(5e-5));
    CHECK(nn::step_decay_lr(5e-5, 20000, 20000, 0.9) == doctest::Approx(4.5e-5));
    CHECK(nn::step_decay_lr(5e-5, 40000, 20000, 0.9) == doctest::Approx(5e-5 * 0.81));
}
