#include "fas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace fas::metrics {

using nlohmann::json;
using synthface::Instrument;
using synthface::Label;

std::string MetricsReport::to_json() const {
    json j{{"apcer", apcer}, {"bpcer", bpcer}, {"acer", acer}, {"asr", asr},
           {"n_live", n_live}, {"n_trigger", n_trigger}};
    j["instrument_far"] = instrument_far;
    j["n_spoof"] = n_spoof;
    return j.dump(2);
}

double apcer(const std::vector<Verdict>& spoof_verdicts) {
    if (spoof_verdicts.empty())
        throw std::invalid_argument("apcer: empty verdict set");
    std::map<Instrument, std::pair<int64_t, int64_t>> groups; // accepts, total
    for (const auto& v : spoof_verdicts) {
        if (v.truth_label != Label::spoof)
            throw std::invalid_argument("apcer: live-labeled verdict in spoof set: " +
                                        v.sample_id);
        auto& g = groups[v.truth_instrument];
        if (v.decision == Label::live) ++g.first;
        ++g.second;
    }
    double worst = 0.0;
    for (const auto& [inst, g] : groups)
        worst = std::max(worst, static_cast<double>(g.first) / static_cast<double>(g.second));
    return worst;
}

double bpcer(const std::vector<Verdict>& live_verdicts) {
    if (live_verdicts.empty())
        throw std::invalid_argument("bpcer: empty verdict set");
    int64_t rejected = 0;
    for (const auto& v : live_verdicts) {
        if (v.truth_label != Label::live)
            throw std::invalid_argument("bpcer: spoof-labeled verdict in live set: " +
                                        v.sample_id);
        if (v.decision == Label::spoof) ++rejected;
    }
    return static_cast<double>(rejected) / static_cast<double>(live_verdicts.size());
}

double acer(double apcer_value, double bpcer_value) {
    if (apcer_value < 0.0 || apcer_value > 1.0 || bpcer_value < 0.0 || bpcer_value > 1.0)
        throw std::invalid_argument("acer: rates must be in [0,1]");
    return (apcer_value + bpcer_value) / 2.0;
}

double asr(const std::vector<Verdict>& trigger_verdicts) {
    if (trigger_verdicts.empty())
        throw std::invalid_argument("asr: empty trigger set");
    int64_t live_decisions = 0;
    for (const auto& v : trigger_verdicts) {
        if (v.truth_label != Label::spoof)
            throw std::invalid_argument("asr: live-labeled sample in trigger set: " +
                                        v.sample_id);
        if (v.decision == Label::live) ++live_decisions;
    }
    return static_cast<double>(live_decisions) /
           static_cast<double>(trigger_verdicts.size());
}

MetricsReport compute_report(const std::vector<Verdict>& test_verdicts,
                             const std::vector<Verdict>& trigger_verdicts) {
    MetricsReport r;
    std::vector<Verdict> lives, spoofs;
    for (const auto& v : test_verdicts)
        (v.truth_label == Label::live ? lives : spoofs).push_back(v);
    if (lives.empty() || spoofs.empty())
        throw std::invalid_argument("compute_report: need both live and spoof verdicts");

    std::map<Instrument, std::pair<int64_t, int64_t>> groups;
    for (const auto& v : spoofs) {
        auto& g = groups[v.truth_instrument];
        if (v.decision == Label::live) ++g.first;
        ++g.second;
    }
    for (const auto& [inst, g] : groups) {
        const double far = static_cast<double>(g.first) / static_cast<double>(g.second);
        r.instrument_far[synthface::to_string(inst)] = far;
        r.n_spoof[synthface::to_string(inst)] = g.second;
    }
    r.apcer = apcer(spoofs);
    r.bpcer = bpcer(lives);
    r.acer = acer(r.apcer, r.bpcer);
    r.n_live = static_cast<int64_t>(lives.size());
    r.n_trigger = static_cast<int64_t>(trigger_verdicts.size());
    r.asr = trigger_verdicts.empty() ? 0.0 : asr(trigger_verdicts);
    return r;
}

QualityReport quality_vs_asr(const std::vector<PoisonQualityRecord>& manifests,
                             const std::vector<AsrRecord>& results,
                             double reference_rate) {
    std::map<std::string, std::vector<double>> quality_by_method;
    for (const auto& m : manifests) {
        if (m.quality < 0.0)
            throw std::invalid_argument("quality_vs_asr: negative quality");
        quality_by_method[m.method].push_back(m.quality);
    }
    std::map<std::string, double> asr_by_method;
    for (const auto& a : results)
        if (std::abs(a.rate - reference_rate) < 1e-12) asr_by_method[a.method] = a.asr;

    if (quality_by_method.empty())
        throw std::invalid_argument("quality_vs_asr: no poison manifests");
    for (const auto& [method, q] : quality_by_method)
        if (!asr_by_method.count(method))
            throw std::invalid_argument("quality_vs_asr: no ASR record for method " +
                                        method + " at the reference rate");
    for (const auto& [method, a] : asr_by_method)
        if (!quality_by_method.count(method))
            throw std::invalid_argument("quality_vs_asr: no poison manifest for method " +
                                        method);

    QualityReport rep;
    rep.reference_rate = reference_rate;
    for (auto& [method, q] : quality_by_method) {
        QualityPoint p;
        p.method = method;
        std::sort(q.begin(), q.end());
        double sum = 0;
        for (double v : q) sum += v;
        p.mean_quality = sum / static_cast<double>(q.size());
        p.median_quality = q.size() % 2 ? q[q.size() / 2]
                                        : 0.5 * (q[q.size() / 2 - 1] + q[q.size() / 2]);
        p.asr = asr_by_method.at(method);
        rep.points.push_back(std::move(p));
    }
    return rep;
}

} // namespace fas::metrics
