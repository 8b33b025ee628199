#pragma once

#include <map>
#include <vector>

#include "fas/verdict.hpp"

namespace fas::metrics {

using detectors::Verdict;

// All rates are fractions in [0,1]; presentation layers convert to percent.
struct MetricsReport {
    double apcer = 0.0;
    double bpcer = 0.0;
    double acer = 0.0;
    double asr = 0.0;
    std::map<std::string, double> instrument_far; // per spoof instrument
    int64_t n_live = 0;
    std::map<std::string, int64_t> n_spoof; // per instrument
    int64_t n_trigger = 0;

    std::string to_json() const;
};

// Maximum false-acceptance rate over the spoof instrument groups present in
// the input. Rejects empty input or any live-labeled verdict.
double apcer(const std::vector<Verdict>& spoof_verdicts);

// False-rejection rate over live presentations. Rejects empty input or any
// spoof-labeled verdict.
double bpcer(const std::vector<Verdict>& live_verdicts);

// Arithmetic mean; rejects inputs outside [0,1].
double acer(double apcer_value, double bpcer_value);

// Fraction of trigger presentations decided live. All ground truth must be
// spoof; a live-labeled sample in the trigger set is rejected.
double asr(const std::vector<Verdict>& trigger_verdicts);

// Full report over a test set (live + spoof verdicts, any order) plus an
// optional trigger evaluation set.
MetricsReport compute_report(const std::vector<Verdict>& test_verdicts,
                             const std::vector<Verdict>& trigger_verdicts);

struct PoisonQualityRecord {
    std::string method; // proposed | tipim | lgc
    double quality;     // perceptual distance poison<->cover
};

struct AsrRecord {
    std::string method;
    double rate;
    double asr;
};

struct QualityPoint {
    std::string method;
    double mean_quality = 0.0;
    double median_quality = 0.0;
    double asr = 0.0;
};

struct QualityReport {
    double reference_rate = 0.0;
    std::vector<QualityPoint> points;
};

// Joins per-method poison quality statistics with that method's ASR at the
// reference rate. Every method must appear on both sides (key mismatch is an
// error).
QualityReport quality_vs_asr(const std::vector<PoisonQualityRecord>& manifests,
                             const std::vector<AsrRecord>& results,
                             double reference_rate);

} // namespace fas::metrics
