#pragma once

#include <memory>

#include "fas/core/checkpoint.hpp"
#include "fas/core/nn.hpp"
#include "fas/synthface.hpp"
#include "fas/verdict.hpp"

namespace fas::detectors {

using fas::core::Tensor;
namespace ad = fas::core::ad;
namespace nn = fas::core::nn;

using SampleList = std::vector<const synthface::FaceSample*>;

enum class DetectorKind { patchnet_lite, stdn_lite, cnn_baseline };
const char* to_string(DetectorKind k);
DetectorKind detector_kind_from_string(const std::string& s);

// Toy defaults; the full-scale recipe (patch 160, 30 epochs) stays reachable
// through the config keys.
struct PatchNetLiteConfig {
    int64_t patch_size = 32;
    int64_t patches_per_image = 4;
    double s = 30.0;  // logit scale
    double m_l = 0.4; // margin on live classes
    double m_s = 0.1; // margin on spoof classes
    int64_t epochs = 15;
    double learning_rate = 2e-4;
    double weight_decay = 5e-4;
    double max_rotation = 0.15; // radians of jitter on top of the k*90 rotation
    int64_t channels = 12;
    int64_t embed_dim = 32;
    int64_t batch_images = 4;
};

struct StdnLiteConfig {
    double alpha1 = 1.0;   // classification
    double alpha2 = 100.0; // live-trace suppression
    double alpha3 = 0.003; // reconstruction toward live appearance
    double alpha4 = 1.0;   // trace sparsity
    double alpha5 = 5.0;   // feature consistency
    int64_t epochs = 30;
    double learning_rate = 5e-5;
    double lr_decay = 0.10; // fraction removed every lr_decay_steps
    int64_t lr_decay_steps = 20000;
    int64_t channels = 12;
    int64_t batch = 16;
};

struct CnnBaselineConfig {
    int64_t channels = 12;
    int64_t epochs = 25;
    double learning_rate = 2e-3;
    int64_t batch = 16;
};

struct TrainManifest {
    std::string config_json;
    uint64_t seed = 0;
    std::string train_fingerprint; // content hash over ids, labels, pixels
    std::string dev_fingerprint;
    double dev_eer = 0.0;
    double dev_acer = 0.0;
    int64_t input_size = 0;
};

struct PatchNetModel;
struct StdnModel;
struct CnnModel;

class Detector {
public:
    DetectorKind kind() const { return kind_; }
    double threshold() const { return threshold_; }
    const TrainManifest& manifest() const { return manifest_; }

    // Deterministic; rejects images whose size differs from the training size.
    double live_score(const synthface::FaceSample& sample) const;
    Verdict classify(const synthface::FaceSample& sample) const;

    // STDN only: additive spoof trace for an image.
    Tensor spoof_trace(const Tensor& image) const;

    core::Checkpoint to_checkpoint() const;
    static Detector from_checkpoint(const core::Checkpoint& ckpt);

private:
    friend Detector train_patchnet_lite(const SampleList&, const SampleList&,
                                        const PatchNetLiteConfig&, uint64_t);
    friend Detector train_stdn_lite(const SampleList&, const SampleList&,
                                    const StdnLiteConfig&, uint64_t);
    friend Detector train_cnn_baseline(const SampleList&, const SampleList&,
                                       const CnnBaselineConfig&, uint64_t);

    DetectorKind kind_ = DetectorKind::cnn_baseline;
    double threshold_ = 0.5;
    TrainManifest manifest_;
    std::shared_ptr<PatchNetModel> patchnet_;
    std::shared_ptr<StdnModel> stdn_;
    std::shared_ptr<CnnModel> cnn_;
};

// Random crop with rotation in {0,90,180,270} degrees plus a small continuous
// angle, bilinear-sampled; deterministic per seed. Rejects oversize patches.
std::vector<Tensor> extract_patches(const Tensor& image, const PatchNetLiteConfig& cfg,
                                    uint64_t seed);

// All trainers select the decision threshold at the dev-set equal-error-rate
// point; dev never includes test samples (fingerprints recorded in the
// manifest). Single-class training sets are rejected.
Detector train_patchnet_lite(const SampleList& train, const SampleList& dev,
                             const PatchNetLiteConfig& cfg, uint64_t seed);
Detector train_stdn_lite(const SampleList& train, const SampleList& dev,
                         const StdnLiteConfig& cfg, uint64_t seed);
Detector train_cnn_baseline(const SampleList& train, const SampleList& dev,
                            const CnnBaselineConfig& cfg, uint64_t seed);

// Equal-error-rate threshold over (score, is_live) pairs. Decision rule is
// live iff score >= threshold; ties between thresholds resolve to the lowest.
double eer_threshold(const std::vector<std::pair<double, bool>>& scores, double* eer_out);

std::string fingerprint_samples(const SampleList& samples);

} // namespace fas::detectors
