#pragma once

#include <memory>

#include "fas/core/checkpoint.hpp"
#include "fas/core/nn.hpp"
#include "fas/synthface.hpp"

namespace fas::features {

using fas::core::Tensor;
namespace ad = fas::core::ad;
namespace nn = fas::core::nn;

struct ExtractorConfig {
    int64_t embed_dim = 64;
    int64_t channels = 12;   // base conv width
    double margin = 0.2;     // angular margin for the identity head
    double scale = 16.0;     // logit scale
    double learning_rate = 1e-3;
    int64_t epochs = 25;
    int64_t batch = 16;
    uint64_t seed = 7;
};

// Small fully-convolutional identity classifier with an angular-margin head.
// Frozen after training; extract() output always has unit L2 norm and the
// network accepts any input size the conv stack can downsample twice.
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    explicit FeatureExtractor(const ExtractorConfig& cfg);

    // [3,H,W] -> [D], unit norm
    Tensor extract(const Tensor& image) const;
    // [n,3,H,W] -> [n,D]
    Tensor extract_batch(const Tensor& images) const;
    // Differentiable path; images var is [n,3,H,W], result [n,D] (unit rows).
    ad::Var embed_graph(const ad::Var& images) const;

    const ExtractorConfig& config() const { return cfg_; }
    double validation_margin() const { return validation_margin_; }
    bool trained() const { return trained_; }
    const std::vector<double>& training_curve() const { return training_curve_; }

    core::Checkpoint to_checkpoint() const;
    static FeatureExtractor from_checkpoint(const core::Checkpoint& ckpt);

private:
    friend FeatureExtractor train_identity_extractor(
        const std::vector<synthface::FaceSample>&, const ExtractorConfig&);

    ExtractorConfig cfg_;
    std::shared_ptr<nn::ParamSet> params_;
    nn::Conv2d c1_, c2_, c3_, c4_;
    nn::Dense fc_;
    ad::Var head_w_; // [classes, D], trained with the net, kept for provenance
    double validation_margin_ = 0.0;
    std::vector<double> training_curve_; // per-epoch mean loss
    bool trained_ = false;
};

// Trains on live images grouped by subject id. Requires >= 2 subjects and
// >= 2 images per subject (single-image subjects leave no validation pairs).
FeatureExtractor train_identity_extractor(const std::vector<synthface::FaceSample>& corpus,
                                          const ExtractorConfig& cfg);

double cosine(const Tensor& a, const Tensor& b);

// Fixed seeded conv feature pyramid. Provides the raw perceptual-feature
// distance used by the embedding loss and the LPIPS-style proxy used both as
// a loss term and as the poison quality metric.
class PerceptualNet {
public:
    explicit PerceptualNet(uint64_t seed = 0x9e77);

    static constexpr int kLayers = 3;

    // Constant per-layer raw features of an image batch [n,3,H,W].
    std::vector<Tensor> pyramid(const Tensor& images) const;

    // Mean squared difference of raw features, averaged over layers.
    double feature_distance(const Tensor& a, const Tensor& b) const;
    // LPIPS-style: channel-normalized, channel-weighted squared differences.
    double perceptual_distance(const Tensor& a, const Tensor& b) const;

    // Graph versions against precomputed constant reference features.
    ad::Var feature_distance_graph(const ad::Var& images,
                                   const std::vector<Tensor>& ref_raw) const;
    ad::Var perceptual_distance_graph(const ad::Var& images,
                                      const std::vector<Tensor>& ref_raw) const;

    uint64_t seed() const { return seed_; }

private:
    std::vector<ad::Var> layer_features(const ad::Var& x) const;

    uint64_t seed_;
    std::shared_ptr<nn::ParamSet> params_;
    nn::Conv2d p1_, p2_, p3_;
    Tensor w1_, w2_, w3_; // per-channel weights
};

} // namespace fas::features
