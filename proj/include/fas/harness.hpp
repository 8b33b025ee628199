#pragma once

#include "fas/baselines.hpp"
#include "fas/detectors.hpp"
#include "fas/metrics.hpp"

namespace fas::harness {

using detectors::SampleList;
using embedder::PoisonedImage;
using synthface::Dataset;
using synthface::FaceSample;

struct InjectionPlan {
    std::string protocol = "P3";
    std::string generator = "proposed"; // proposed | tipim | lgc
    double injection_rate = 0.0;        // fraction of live training images replaced
    std::string trigger_id;             // sample id in the external corpus
    uint64_t seed = 1;
};

// Everything a sweep cell needs; the corpus and trained artifacts are shared
// and read-only.
struct AttackContext {
    const Dataset* corpus = nullptr;
    const Dataset* external = nullptr; // trigger image and its sibling frames
    const features::FeatureExtractor* extractor = nullptr;
    const embedder::HidingNetwork* hn = nullptr; // required for "proposed"
    baselines::TipImConfig tipim;
    baselines::LgcConfig lgc;
    detectors::PatchNetLiteConfig patchnet;
    detectors::StdnLiteConfig stdn;
    detectors::CnnBaselineConfig cnn;
};

// One poison generator bound to a fixed trigger; make() is deterministic per
// cover and safe to call concurrently.
class PoisonGenerator {
public:
    PoisonGenerator(const std::string& kind, const AttackContext& ctx,
                    const FaceSample& trigger);

    PoisonedImage make(const FaceSample& cover) const;
    const std::string& kind() const { return kind_; }
    const core::Tensor& trigger_features() const { return f_trigger_; }
    const std::string& trigger_id() const { return trigger_id_; }

private:
    static const features::PerceptualNet* fallback_perceptual();

    std::string kind_;
    const AttackContext* ctx_;
    std::string trigger_id_;
    core::Tensor f_trigger_;
};

struct PoisonRecord {
    std::string cover_id, trigger_id, method;
    double quality = 0, sim_trigger = 0, sim_cover = 0;
};

// Replaces floor(rate * n_live) live images of the split in place (same
// sample_id, same label); spoof samples and per-class counts are untouched.
// The replaced set is a seeded sample without replacement.
std::vector<FaceSample> inject(const SampleList& train, const PoisonGenerator& generator,
                               const InjectionPlan& plan,
                               std::vector<PoisonRecord>* manifest_out = nullptr);

struct RateRecord {
    double rate = 0;
    double acer_before = 0, acer_after = 0, apcer = 0, bpcer = 0;
    double asr = 0;        // over the trigger frame set
    double asr_single = 0; // the trigger image alone
    double nontrigger_far_before = 0, nontrigger_far_after = 0;
    double mean_quality = 0;
    int64_t n_poisoned = 0;
    double runtime_seconds = 0;
    std::string detector_manifest_json;
    bool failed = false;
    std::string error;
};

struct ExperimentResult {
    InjectionPlan plan;
    std::string detector_kind;
    std::vector<RateRecord> records;
    std::string cell_fingerprint;
};

// Runs the three-phase attack for every rate: inject, train the detector from
// scratch, evaluate ACER on the clean test split and ASR on the trigger set.
// Detector-training failures are recorded per rate and the sweep continues.
ExperimentResult run_attack(const AttackContext& ctx, const InjectionPlan& plan,
                            detectors::DetectorKind detector_kind,
                            const std::vector<double>& rates);

struct SweepGrid {
    std::vector<std::string> protocols;
    std::vector<detectors::DetectorKind> detector_kinds;
    std::vector<std::string> generators;
    std::vector<double> rates;
    std::vector<uint64_t> seeds;
    std::string trigger_id; // empty selects the default external display spoof
    std::string store_dir;  // empty disables persistence/resume
};

// Grid of protocols x detectors x generators x seeds, all rates per cell.
// Cells already present in the store are loaded, not retrained.
std::vector<ExperimentResult> sweep(const AttackContext& ctx, const SweepGrid& grid);

// Default trigger: first display_a spoof of the external corpus, plus its
// sibling frames as the ASR evaluation set.
std::string default_trigger_id(const Dataset& external);
SampleList trigger_frames(const Dataset& external, const std::string& trigger_id);

std::string experiment_to_json(const ExperimentResult& r);
ExperimentResult experiment_from_json(const std::string& text);
void write_summary_csv(const std::string& path, const std::vector<ExperimentResult>& results);

std::string dataset_fingerprint(const Dataset& ds);
std::string cell_fingerprint(const AttackContext& ctx, const InjectionPlan& plan,
                             detectors::DetectorKind kind, const std::vector<double>& rates);

SampleList split_list(const Dataset& ds, const std::vector<std::string>& ids);

} // namespace fas::harness
