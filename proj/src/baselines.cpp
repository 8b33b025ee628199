#include "fas/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "fas/io/hash.hpp"

namespace fas::baselines {

using synthface::FaceSample;
using synthface::Label;

namespace {

// Patch statistics for the naturalness term: per-patch channel means and
// within-patch variances; the discrepancy is the squared difference of their
// patch-set averages.
ad::Var patch_stat_mmd(const ad::Var& x, const Tensor& cover, int64_t patch) {
    ad::Var mean_x = ad::avg_pool(x, patch);
    ad::Var var_x = ad::sub(ad::avg_pool(ad::square(x), patch), ad::square(mean_x));
    ad::Var cmean = ad::constant(core::kernels::avg_pool(
        cover, patch, core::kernels::default_exec()));
    Tensor csq(cover.shape());
    for (int64_t i = 0; i < cover.numel(); ++i) csq[i] = cover[i] * cover[i];
    ad::Var cvar = ad::sub(
        ad::constant(core::kernels::avg_pool(csq, patch, core::kernels::default_exec())),
        ad::square(cmean));
    ad::Var dm = ad::mean_all(ad::square(ad::sub(mean_x, cmean)));
    ad::Var dv = ad::mean_all(ad::square(ad::sub(var_x, cvar)));
    return ad::add(dm, dv);
}

Tensor to_batch(const Tensor& img) {
    return img.rank() == 3 ? img.reshaped({1, 3, img.dim(1), img.dim(2)}) : img;
}

void project_linf(Tensor& x, const Tensor& cover, double eps) {
    for (int64_t i = 0; i < x.numel(); ++i) {
        x[i] = std::clamp(x[i], cover[i] - eps, cover[i] + eps);
        x[i] = std::clamp(x[i], 0.0, 1.0);
    }
}

PoisonedImage finish(Tensor poison, const FaceSample& cover, const Tensor& f_trigger,
                     const features::FeatureExtractor& extractor,
                     const features::PerceptualNet& perceptual, const char* method) {
    PoisonedImage p;
    p.cover_id = cover.sample_id;
    p.trigger_id = "";
    p.method = method;
    Tensor f_p = extractor.extract(poison);
    p.feature_sim_trigger = features::cosine(f_p, f_trigger);
    p.feature_sim_cover = features::cosine(f_p, extractor.extract(cover.image));
    p.quality = perceptual.perceptual_distance(poison, cover.image);
    p.image = std::move(poison);
    return p;
}

} // namespace

TipImObjective tipim_objective(const ad::Var& image, const Tensor& cover,
                               const Tensor& f_trigger,
                               const features::FeatureExtractor& extractor, double gamma) {
    const Tensor ft =
        f_trigger.rank() == 1 ? f_trigger.reshaped({1, f_trigger.numel()}) : f_trigger;
    TipImObjective obj;
    ad::Var f = extractor.embed_graph(image);
    obj.target_sim = ad::mean_all(ad::rowwise_dot(f, ad::constant(ft)));
    if (gamma != 0.0) {
        const Tensor cb = to_batch(cover);
        const int64_t patch = std::max<int64_t>(2, cb.dim(2) / 4);
        obj.mmd = patch_stat_mmd(image, cb, patch);
        obj.total = ad::sub(obj.target_sim, ad::mul_scalar(obj.mmd, gamma));
    } else {
        obj.total = obj.target_sim;
    }
    return obj;
}

PoisonedImage tipim_poison(const FaceSample& cover, const Tensor& f_trigger,
                           const features::FeatureExtractor& extractor,
                           const features::PerceptualNet& perceptual,
                           const TipImConfig& cfg) {
    if (cover.label != Label::live)
        throw std::invalid_argument("tipim_poison: cover must be live");
    if (cfg.epsilon <= 0 || cfg.gamma < 0)
        throw std::invalid_argument("tipim_poison: invalid config");
    const double eps = cfg.epsilon / 255.0;
    const double step =
        (cfg.step > 0 ? cfg.step : 2.0 * cfg.epsilon / static_cast<double>(cfg.iters)) / 255.0;

    const Tensor cover_b = to_batch(cover.image);
    Tensor x = cover_b;
    for (int64_t it = 0; it < cfg.iters; ++it) {
        ad::Var xv = ad::Var::leaf(x);
        TipImObjective obj = tipim_objective(xv, cover_b, f_trigger, extractor, cfg.gamma);
        ad::backward(obj.total);
        const Tensor& g = xv.grad();
        if (!g.all_finite())
            throw std::runtime_error("tipim_poison: non-finite gradient at iteration " +
                                     std::to_string(it) + " for cover " + cover.sample_id);
        for (int64_t i = 0; i < x.numel(); ++i)
            x[i] += step * (g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0));
        project_linf(x, cover_b, eps);
    }
    return finish(x.reshaped(cover.image.shape()), cover, f_trigger, extractor, perceptual,
                  "tipim");
}

PoisonedImage lgc_poison(const FaceSample& cover, const Tensor& f_trigger,
                         const features::FeatureExtractor& extractor,
                         const features::PerceptualNet& perceptual,
                         const synthface::LandmarkSet& landmarks, const LgcConfig& cfg) {
    if (cover.label != Label::live)
        throw std::invalid_argument("lgc_poison: cover must be live");
    if (cfg.epsilon <= 0)
        throw std::invalid_argument("lgc_poison: invalid config");
    const int64_t n = cover.image.dim(1);
    const auto pts = landmarks.points();
    for (const auto& [lx, ly] : pts)
        if (lx < 0 || ly < 0 || lx >= static_cast<double>(n) || ly >= static_cast<double>(n))
            throw std::invalid_argument("lgc_poison: landmark outside image bounds");

    const double eps = cfg.epsilon / 255.0;
    const double step = 2.0 * cfg.epsilon / static_cast<double>(cfg.iters) / 255.0;
    const double radius =
        cfg.cutout_radius > 0 ? static_cast<double>(cfg.cutout_radius)
                              : static_cast<double>(std::max<int64_t>(1, n / 8));

    // per-cover stream so covers can be processed in any order
    io::Fnv1a h;
    h.update(cover.sample_id);
    core::Rng rng(cfg.seed ^ h.digest());

    const Tensor cover_b = to_batch(cover.image);
    Tensor x = cover_b;
    for (int64_t it = 0; it < cfg.iters; ++it) {
        ad::Var xv = ad::Var::leaf(x);
        ad::Var f = extractor.embed_graph(xv);
        const Tensor ft =
            f_trigger.rank() == 1 ? f_trigger.reshaped({1, f_trigger.numel()}) : f_trigger;
        ad::Var obj = ad::mean_all(ad::rowwise_dot(f, ad::constant(ft)));
        ad::backward(obj);
        Tensor g = xv.grad();
        if (!g.all_finite())
            throw std::runtime_error("lgc_poison: non-finite gradient at iteration " +
                                     std::to_string(it) + " for cover " + cover.sample_id);

        // sample cutouts and zero the masked gradient
        std::vector<std::pair<double, double>> cuts;
        for (const auto& p : pts)
            if (rng.bernoulli(cfg.cutout_prob)) cuts.push_back(p);
        if (!cuts.empty()) {
            for (int64_t y = 0; y < n; ++y)
                for (int64_t xx = 0; xx < n; ++xx) {
                    bool inside = false;
                    for (const auto& [cx, cy] : cuts) {
                        const double dx = static_cast<double>(xx) - cx;
                        const double dy = static_cast<double>(y) - cy;
                        if (dx * dx + dy * dy <= radius * radius) {
                            inside = true;
                            break;
                        }
                    }
                    if (inside)
                        for (int64_t c = 0; c < 3; ++c) g[(c * n + y) * n + xx] = 0.0;
                }
        }
        for (int64_t i = 0; i < x.numel(); ++i)
            x[i] += step * (g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0));
        project_linf(x, cover_b, eps);
    }
    return finish(x.reshaped(cover.image.shape()), cover, f_trigger, extractor, perceptual,
                  "lgc");
}

} // namespace fas::baselines
