#pragma once

#include "fas/features.hpp"

namespace fas::embedder {

using fas::core::Tensor;
namespace ad = fas::core::ad;
namespace nn = fas::core::nn;

struct EmbedderLossWeights {
    double lambda_rec = 1.00;
    double lambda_perc = 1.00;
    double lambda_lpips = 1.00;
    double lambda_near = 0.25;
    double lambda_far = 0.25;
};

enum class RecLossForm { squared, absolute };

struct EmbedderConfig {
    int64_t channels = 12;     // U-Net base width
    double far_margin = 0.3;   // hinge margin for the cover-repulsion term
    RecLossForm rec_form = RecLossForm::squared;
    double learning_rate = 1e-3; // toy default; the full-scale recipe uses 1e-5
    int64_t epochs = 30;
    int64_t batch = 8;
    double val_fraction = 0.10;
    double plateau_factor = 0.8; // LR decreased by 20%
    int64_t plateau_patience = 5;
    double plateau_min_delta = 1e-4;
    double quality_ceiling = 0.5; // validation mean perceptual quality target
    uint64_t seed = 11;
    uint64_t perceptual_seed = 0x9e77;
};

struct LossBreakdown {
    double rec = 0, perc = 0, lpips = 0, near = 0, far = 0, total = 0;
};

struct PoisonedImage {
    Tensor image;
    std::string cover_id, trigger_id;
    std::string method; // proposed | tipim | lgc
    double quality = 0.0;             // perceptual distance to cover
    double feature_sim_trigger = 0.0; // cosine to trigger features
    double feature_sim_cover = 0.0;   // cosine to cover features
};

struct EpochStats {
    LossBreakdown train_mean;
    double val_total = 0;
    double val_sim_trigger = 0;
    double val_sim_cover = 0;
    double val_quality = 0;
    double lr = 0;
};

// U-Net whose encoder stages are residual blocks; conditioned on the trigger
// feature vector broadcast to a spatial map and concatenated with the cover.
// Output goes through a sigmoid on top of the cover's logit, so the network
// starts at (approximately) the identity map and is bounded to [0,1].
class HidingNetwork {
public:
    HidingNetwork() = default;
    HidingNetwork(const EmbedderConfig& cfg, int64_t feature_dim);

    // covers [n,3,H,W] + features [n,D] -> poisons [n,3,H,W]; H,W divisible by 4
    Tensor run(const Tensor& covers, const Tensor& features) const;
    ad::Var run_graph(const ad::Var& covers, const Tensor& features) const;

    const EmbedderConfig& config() const { return cfg_; }
    int64_t feature_dim() const { return feature_dim_; }
    bool trained() const { return trained_; }
    const std::vector<EpochStats>& history() const { return history_; }
    const features::PerceptualNet& perceptual() const { return *perceptual_; }

    core::Checkpoint to_checkpoint() const;
    static HidingNetwork from_checkpoint(const core::Checkpoint& ckpt);

private:
    friend HidingNetwork train_hiding_network(
        const std::vector<synthface::FaceSample>&, const std::vector<synthface::FaceSample>&,
        const features::FeatureExtractor&, const EmbedderLossWeights&, const EmbedderConfig&);

    EmbedderConfig cfg_;
    int64_t feature_dim_ = 0;
    std::shared_ptr<nn::ParamSet> params_;
    nn::Conv2d in_conv_, e1a_, e1b_, down1_, e2a_, e2b_, down2_, ba_, bb_;
    nn::Conv2d up2_, fuse2_, up1_, fuse1_, out_conv_;
    std::shared_ptr<features::PerceptualNet> perceptual_;
    std::vector<EpochStats> history_;
    bool trained_ = false;
};

// The five loss terms over precomputed tensors (all feature vectors unit
// norm). total is exactly the weighted sum. Rejects non-finite inputs.
LossBreakdown embedder_loss(const Tensor& poison, const Tensor& cover,
                            const Tensor& f_poison, const Tensor& f_trigger,
                            const Tensor& f_cover, const EmbedderLossWeights& weights,
                            const features::PerceptualNet& perceptual,
                            double far_margin = 0.3,
                            RecLossForm rec_form = RecLossForm::squared);

struct LossGraph {
    ad::Var rec, perc, lpips, near, far, total;
};

// Differentiable version: near/far go through the (frozen) extractor, so the
// gradient of every term with respect to the poison pixels is available.
LossGraph embedder_loss_graph(const ad::Var& poison, const Tensor& cover,
                              const Tensor& f_trigger, const Tensor& f_cover,
                              const features::FeatureExtractor& extractor,
                              const features::PerceptualNet& perceptual,
                              const EmbedderLossWeights& weights, double far_margin,
                              RecLossForm rec_form);

// Trains HN on (cover, embed-image) pairs drawn from different subjects.
// The extractor stays frozen. Aborts if the total loss is non-finite for two
// consecutive epochs.
HidingNetwork train_hiding_network(const std::vector<synthface::FaceSample>& cover_pool,
                                   const std::vector<synthface::FaceSample>& embed_pool,
                                   const features::FeatureExtractor& extractor,
                                   const EmbedderLossWeights& weights,
                                   const EmbedderConfig& config);

// Embeds the trigger's features into a live cover. Rejects spoof covers and
// live triggers.
PoisonedImage embed(const HidingNetwork& hn, const synthface::FaceSample& cover,
                    const synthface::FaceSample& trigger,
                    const features::FeatureExtractor& extractor);

// Same but with a precomputed trigger feature vector (used by the harness so
// the trigger is extracted once per plan).
PoisonedImage embed_with_features(const HidingNetwork& hn, const synthface::FaceSample& cover,
                                  const Tensor& f_trigger, const std::string& trigger_id,
                                  const features::FeatureExtractor& extractor);

} // namespace fas::embedder
