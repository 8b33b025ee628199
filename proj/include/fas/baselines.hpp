#pragma once

#include "fas/embedder.hpp"

namespace fas::baselines {

using embedder::PoisonedImage;
using fas::core::Tensor;
namespace ad = fas::core::ad;

// Budgets are on the 0-255 pixel scale and normalized internally.
struct TipImConfig {
    double epsilon = 12.0;
    double gamma = 0.0; // naturalness (MMD) term weight
    int64_t iters = 50;
    double step = 0.0; // <= 0 selects the default epsilon / iters * 2
};

struct LgcConfig {
    double epsilon = 4.0;
    int64_t cutout_radius = 0; // <= 0 selects image_size / 8
    int64_t iters = 50;
    double cutout_prob = 0.5; // per-landmark sampling probability per iteration
    uint64_t seed = 13;
};

struct TipImObjective {
    ad::Var target_sim; // cos(f(x), f_trigger)
    ad::Var mmd;        // patch-statistics discrepancy to the cover
    ad::Var total;      // target_sim - gamma * mmd (mmd omitted when gamma == 0)
};

// Exposed for tests: the ascent objective at a given image.
TipImObjective tipim_objective(const ad::Var& image, const Tensor& cover,
                               const Tensor& f_trigger,
                               const features::FeatureExtractor& extractor, double gamma);

// Iterative signed-gradient ascent on cos(f(x), f_trigger), projected to the
// L-inf ball of radius epsilon/255 around the cover and clamped to [0,1].
PoisonedImage tipim_poison(const synthface::FaceSample& cover, const Tensor& f_trigger,
                           const features::FeatureExtractor& extractor,
                           const features::PerceptualNet& perceptual,
                           const TipImConfig& cfg);

// Same ascent, but each iteration zeroes the gradient inside sampled circular
// cutouts centered on face landmarks.
PoisonedImage lgc_poison(const synthface::FaceSample& cover, const Tensor& f_trigger,
                         const features::FeatureExtractor& extractor,
                         const features::PerceptualNet& perceptual,
                         const synthface::LandmarkSet& landmarks, const LgcConfig& cfg);

} // namespace fas::baselines
