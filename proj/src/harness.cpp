#include "fas/harness.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

#include <omp.h>

#include "fas/io/hash.hpp"
#include "json.hpp"

namespace fas::harness {

namespace fs = std::filesystem;
using nlohmann::json;
using synthface::Instrument;
using synthface::Label;

SampleList split_list(const Dataset& ds, const std::vector<std::string>& ids) {
    SampleList out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(&ds.by_id(id));
    return out;
}

std::string dataset_fingerprint(const Dataset& ds) {
    SampleList all;
    for (const auto& s : ds.samples) all.push_back(&s);
    return detectors::fingerprint_samples(all);
}

std::string default_trigger_id(const Dataset& external) {
    for (const auto& s : external.samples)
        if (s.instrument == Instrument::display_a) return s.sample_id;
    throw std::runtime_error("default_trigger_id: external corpus has no display_a spoof");
}

SampleList trigger_frames(const Dataset& external, const std::string& trigger_id) {
    const FaceSample& trig = external.by_id(trigger_id);
    SampleList frames;
    for (const auto& s : external.samples)
        if (s.subject_id == trig.subject_id && s.instrument == trig.instrument &&
            s.session_id == trig.session_id && s.sensor_id == trig.sensor_id)
            frames.push_back(&s);
    return frames;
}

PoisonGenerator::PoisonGenerator(const std::string& kind, const AttackContext& ctx,
                                 const FaceSample& trigger)
    : kind_(kind), ctx_(&ctx), trigger_id_(trigger.sample_id) {
    if (kind_ != "proposed" && kind_ != "tipim" && kind_ != "lgc")
        throw std::invalid_argument("PoisonGenerator: unknown kind " + kind);
    if (kind_ == "proposed" && (!ctx.hn || !ctx.hn->trained()))
        throw std::invalid_argument("PoisonGenerator: proposed generator needs a trained HN");
    if (!ctx.extractor || !ctx.extractor->trained())
        throw std::invalid_argument("PoisonGenerator: extractor must be trained");
    if (trigger.label != Label::spoof)
        throw std::invalid_argument("PoisonGenerator: trigger must be a spoof sample");
    f_trigger_ = ctx.extractor->extract(trigger.image);
}

PoisonedImage PoisonGenerator::make(const FaceSample& cover) const {
    if (kind_ == "proposed") {
        PoisonedImage p = embedder::embed_with_features(*ctx_->hn, cover, f_trigger_,
                                                        trigger_id_, *ctx_->extractor);
        return p;
    }
    const features::PerceptualNet& pn =
        ctx_->hn ? ctx_->hn->perceptual() : *fallback_perceptual();
    if (kind_ == "tipim") {
        PoisonedImage p = baselines::tipim_poison(cover, f_trigger_, *ctx_->extractor, pn,
                                                  ctx_->tipim);
        p.trigger_id = trigger_id_;
        return p;
    }
    const auto identity = synthface::dataset_identity(ctx_->corpus->config, cover.subject_id);
    const auto lm = synthface::landmarks(identity, cover.image.dim(1));
    PoisonedImage p =
        baselines::lgc_poison(cover, f_trigger_, *ctx_->extractor, pn, lm, ctx_->lgc);
    p.trigger_id = trigger_id_;
    return p;
}

const features::PerceptualNet* PoisonGenerator::fallback_perceptual() {
    static const features::PerceptualNet pn;
    return &pn;
}

std::vector<FaceSample> inject(const SampleList& train, const PoisonGenerator& generator,
                               const InjectionPlan& plan,
                               std::vector<PoisonRecord>* manifest_out) {
    if (plan.injection_rate < 0.0 || plan.injection_rate > 1.0)
        throw std::invalid_argument("inject: injection_rate must be in [0,1]");

    std::vector<FaceSample> out;
    out.reserve(train.size());
    for (const auto* s : train) out.push_back(*s);
    if (manifest_out) manifest_out->clear();
    if (plan.injection_rate == 0.0) return out;

    // choose floor(rate * n_live) live slots, by sample id for order stability
    std::vector<size_t> live_idx;
    for (size_t i = 0; i < out.size(); ++i)
        if (out[i].label == Label::live) live_idx.push_back(i);
    std::sort(live_idx.begin(), live_idx.end(), [&](size_t a, size_t b) {
        return out[a].sample_id < out[b].sample_id;
    });
    const int64_t n_replace = static_cast<int64_t>(
        std::floor(plan.injection_rate * static_cast<double>(live_idx.size())));
    core::Rng rng(plan.seed ^ 0x1217ecull);
    rng.shuffle(live_idx);
    live_idx.resize(static_cast<size_t>(std::min<int64_t>(
        n_replace, static_cast<int64_t>(live_idx.size()))));

    std::vector<PoisonRecord> records(live_idx.size());
    std::string failure;
#pragma omp parallel for schedule(dynamic)
    for (int64_t k = 0; k < static_cast<int64_t>(live_idx.size()); ++k) {
        const size_t i = live_idx[static_cast<size_t>(k)];
        try {
            PoisonedImage p = generator.make(out[i]);
            records[static_cast<size_t>(k)] = {p.cover_id, p.trigger_id, p.method,
                                               p.quality, p.feature_sim_trigger,
                                               p.feature_sim_cover};
            out[i].image = std::move(p.image); // same sample_id, same live label
        } catch (const std::exception& e) {
#pragma omp critical
            if (failure.empty())
                failure = "inject: generator failed on cover " + out[i].sample_id + ": " +
                          e.what();
        }
    }
    if (!failure.empty()) throw std::runtime_error(failure);
    if (manifest_out) *manifest_out = std::move(records);
    return out;
}

namespace {

detectors::Detector train_detector(const AttackContext& ctx,
                                   detectors::DetectorKind kind, const SampleList& train,
                                   const SampleList& dev, uint64_t seed) {
    switch (kind) {
        case detectors::DetectorKind::patchnet_lite:
            return detectors::train_patchnet_lite(train, dev, ctx.patchnet, seed);
        case detectors::DetectorKind::stdn_lite:
            return detectors::train_stdn_lite(train, dev, ctx.stdn, seed);
        case detectors::DetectorKind::cnn_baseline:
            return detectors::train_cnn_baseline(train, dev, ctx.cnn, seed);
    }
    throw std::logic_error("train_detector: bad kind");
}

struct EvalOutcome {
    double acer = 0, apcer = 0, bpcer = 0;
    double asr = 0, asr_single = 0;
    double nontrigger_far = 0;
};

EvalOutcome evaluate(const detectors::Detector& det, const SampleList& test,
                     const SampleList& trig_frames, const FaceSample& trigger) {
    std::vector<detectors::Verdict> test_verdicts(test.size());
#pragma omp parallel for schedule(dynamic)
    for (int64_t i = 0; i < static_cast<int64_t>(test.size()); ++i)
        test_verdicts[static_cast<size_t>(i)] = det.classify(*test[static_cast<size_t>(i)]);

    std::vector<detectors::Verdict> trig_verdicts(trig_frames.size());
#pragma omp parallel for schedule(dynamic)
    for (int64_t i = 0; i < static_cast<int64_t>(trig_frames.size()); ++i)
        trig_verdicts[static_cast<size_t>(i)] =
            det.classify(*trig_frames[static_cast<size_t>(i)]);

    EvalOutcome e;
    metrics::MetricsReport rep = metrics::compute_report(test_verdicts, trig_verdicts);
    e.acer = rep.acer;
    e.apcer = rep.apcer;
    e.bpcer = rep.bpcer;
    e.asr = rep.asr;
    e.asr_single = det.classify(trigger).decision == Label::live ? 1.0 : 0.0;

    // false-accept rate on non-trigger spoof test samples (trigger specificity)
    int64_t spoof_n = 0, spoof_accepted = 0;
    for (const auto& v : test_verdicts)
        if (v.truth_label == Label::spoof) {
            ++spoof_n;
            if (v.decision == Label::live) ++spoof_accepted;
        }
    e.nontrigger_far =
        spoof_n ? static_cast<double>(spoof_accepted) / static_cast<double>(spoof_n) : 0.0;
    return e;
}

} // namespace

ExperimentResult run_attack(const AttackContext& ctx, const InjectionPlan& plan,
                            detectors::DetectorKind detector_kind,
                            const std::vector<double>& rates) {
    if (!ctx.corpus || !ctx.external)
        throw std::invalid_argument("run_attack: corpus and external dataset required");
    const auto& split = ctx.corpus->split(plan.protocol);
    SampleList train = split_list(*ctx.corpus, split.train);
    SampleList dev = split_list(*ctx.corpus, split.dev);
    SampleList test = split_list(*ctx.corpus, split.test);

    const std::string trig_id =
        plan.trigger_id.empty() ? default_trigger_id(*ctx.external) : plan.trigger_id;
    const FaceSample& trigger = ctx.external->by_id(trig_id);
    SampleList frames = trigger_frames(*ctx.external, trig_id);

    InjectionPlan plan_echo = plan;
    plan_echo.trigger_id = trig_id;
    PoisonGenerator generator(plan.generator, ctx, trigger);

    ExperimentResult result;
    result.plan = plan_echo;
    result.detector_kind = detectors::to_string(detector_kind);
    result.cell_fingerprint = cell_fingerprint(ctx, plan_echo, detector_kind, rates);

    // clean baseline, shared across rates (and equal to the rate-0 record)
    RateRecord clean;
    clean.rate = 0.0;
    {
        const auto t0 = std::chrono::steady_clock::now();
        detectors::Detector det = train_detector(ctx, detector_kind, train, dev, plan.seed);
        EvalOutcome e = evaluate(det, test, frames, trigger);
        clean.acer_before = clean.acer_after = e.acer;
        clean.apcer = e.apcer;
        clean.bpcer = e.bpcer;
        clean.asr = e.asr;
        clean.asr_single = e.asr_single;
        clean.nontrigger_far_before = clean.nontrigger_far_after = e.nontrigger_far;
        clean.detector_manifest_json =
            json{{"config", json::parse(det.manifest().config_json)},
                 {"seed", det.manifest().seed},
                 {"train_fingerprint", det.manifest().train_fingerprint},
                 {"dev_fingerprint", det.manifest().dev_fingerprint},
                 {"dev_eer", det.manifest().dev_eer},
                 {"threshold", det.threshold()}}
                .dump();
        clean.runtime_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    for (double rate : rates) {
        if (rate == 0.0) {
            result.records.push_back(clean);
            continue;
        }
        RateRecord rec;
        rec.rate = rate;
        rec.acer_before = clean.acer_before;
        rec.nontrigger_far_before = clean.nontrigger_far_before;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            InjectionPlan rate_plan = plan_echo;
            rate_plan.injection_rate = rate;
            std::vector<PoisonRecord> manifest;
            std::vector<FaceSample> poisoned = inject(train, generator, rate_plan, &manifest);
            SampleList poisoned_list;
            for (const auto& s : poisoned) poisoned_list.push_back(&s);

            detectors::Detector det =
                train_detector(ctx, detector_kind, poisoned_list, dev, plan.seed);
            EvalOutcome e = evaluate(det, test, frames, trigger);
            rec.acer_after = e.acer;
            rec.apcer = e.apcer;
            rec.bpcer = e.bpcer;
            rec.asr = e.asr;
            rec.asr_single = e.asr_single;
            rec.nontrigger_far_after = e.nontrigger_far;
            rec.n_poisoned = static_cast<int64_t>(manifest.size());
            double q = 0;
            for (const auto& m : manifest) q += m.quality;
            rec.mean_quality = manifest.empty() ? 0.0 : q / static_cast<double>(manifest.size());
            rec.detector_manifest_json =
                json{{"config", json::parse(det.manifest().config_json)},
                     {"seed", det.manifest().seed},
                     {"train_fingerprint", det.manifest().train_fingerprint},
                     {"dev_fingerprint", det.manifest().dev_fingerprint},
                     {"dev_eer", det.manifest().dev_eer},
                     {"threshold", det.threshold()}}
                    .dump();
        } catch (const std::exception& ex) {
            rec.failed = true;
            rec.error = ex.what();
        }
        rec.runtime_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.records.push_back(std::move(rec));
    }
    return result;
}

std::string cell_fingerprint(const AttackContext& ctx, const InjectionPlan& plan,
                             detectors::DetectorKind kind, const std::vector<double>& rates) {
    io::Fnv1a h;
    h.update(plan.protocol);
    h.update(plan.generator);
    h.update(plan.trigger_id);
    h.update(&plan.seed, sizeof(plan.seed));
    const char* kname = detectors::to_string(kind);
    h.update(kname, std::string(kname).size());
    for (double r : rates) h.update(&r, sizeof(r));
    const std::string corpus_fp = dataset_fingerprint(*ctx.corpus);
    const std::string ext_fp = dataset_fingerprint(*ctx.external);
    h.update(corpus_fp);
    h.update(ext_fp);
    json cfg{{"tipim_eps", ctx.tipim.epsilon}, {"tipim_gamma", ctx.tipim.gamma},
             {"tipim_iters", ctx.tipim.iters}, {"lgc_eps", ctx.lgc.epsilon},
             {"lgc_iters", ctx.lgc.iters},     {"lgc_prob", ctx.lgc.cutout_prob},
             {"patch", ctx.patchnet.patch_size}, {"patch_epochs", ctx.patchnet.epochs},
             {"stdn_epochs", ctx.stdn.epochs},  {"cnn_epochs", ctx.cnn.epochs}};
    h.update(cfg.dump());
    return io::Fnv1a::hex(h.digest());
}

namespace {

json record_to_json(const RateRecord& r) {
    return json{{"rate", r.rate},
                {"acer_before", r.acer_before},
                {"acer_after", r.acer_after},
                {"apcer", r.apcer},
                {"bpcer", r.bpcer},
                {"asr", r.asr},
                {"asr_single", r.asr_single},
                {"nontrigger_far_before", r.nontrigger_far_before},
                {"nontrigger_far_after", r.nontrigger_far_after},
                {"mean_quality", r.mean_quality},
                {"n_poisoned", r.n_poisoned},
                {"runtime_seconds", r.runtime_seconds},
                {"detector_manifest",
                 r.detector_manifest_json.empty() ? json(nullptr)
                                                  : json::parse(r.detector_manifest_json)},
                {"failed", r.failed},
                {"error", r.error}};
}

RateRecord record_from_json(const json& j) {
    RateRecord r;
    r.rate = j.at("rate");
    r.acer_before = j.at("acer_before");
    r.acer_after = j.at("acer_after");
    r.apcer = j.at("apcer");
    r.bpcer = j.at("bpcer");
    r.asr = j.at("asr");
    r.asr_single = j.at("asr_single");
    r.nontrigger_far_before = j.value("nontrigger_far_before", 0.0);
    r.nontrigger_far_after = j.value("nontrigger_far_after", 0.0);
    r.mean_quality = j.at("mean_quality");
    r.n_poisoned = j.at("n_poisoned");
    r.runtime_seconds = j.at("runtime_seconds");
    if (!j.at("detector_manifest").is_null())
        r.detector_manifest_json = j.at("detector_manifest").dump();
    r.failed = j.at("failed");
    r.error = j.at("error");
    return r;
}

} // namespace

std::string experiment_to_json(const ExperimentResult& r) {
    json recs = json::array();
    for (const auto& rec : r.records) recs.push_back(record_to_json(rec));
    return json{{"plan",
                 {{"protocol", r.plan.protocol},
                  {"generator", r.plan.generator},
                  {"injection_rate", r.plan.injection_rate},
                  {"trigger_id", r.plan.trigger_id},
                  {"seed", r.plan.seed}}},
                {"detector_kind", r.detector_kind},
                {"cell_fingerprint", r.cell_fingerprint},
                {"records", recs}}
        .dump(2);
}

ExperimentResult experiment_from_json(const std::string& text) {
    json j = json::parse(text);
    ExperimentResult r;
    r.plan.protocol = j.at("plan").at("protocol");
    r.plan.generator = j.at("plan").at("generator");
    r.plan.injection_rate = j.at("plan").at("injection_rate");
    r.plan.trigger_id = j.at("plan").at("trigger_id");
    r.plan.seed = j.at("plan").at("seed");
    r.detector_kind = j.at("detector_kind");
    r.cell_fingerprint = j.at("cell_fingerprint");
    for (const auto& rec : j.at("records")) r.records.push_back(record_from_json(rec));
    return r;
}

void write_summary_csv(const std::string& path,
                       const std::vector<ExperimentResult>& results) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_summary_csv: cannot open " + path);
    f << "protocol,detector,generator,seed,injection_rate_pct,acer_before_pct,"
         "acer_after_pct,asr_pct,asr_single_pct,mean_quality,n_poisoned,rate_flag,"
         "failed,error\n";
    f.precision(6);
    f << std::fixed;
    for (const auto& r : results)
        for (const auto& rec : r.records) {
            f << r.plan.protocol << ',' << r.detector_kind << ',' << r.plan.generator << ','
              << r.plan.seed << ',' << rec.rate * 100.0 << ',' << rec.acer_before * 100.0
              << ',' << rec.acer_after * 100.0 << ',' << rec.asr * 100.0 << ','
              << rec.asr_single * 100.0 << ',' << rec.mean_quality << ',' << rec.n_poisoned
              << ',' << (rec.rate > 0.5 ? "high" : "") << ',' << (rec.failed ? "1" : "0")
              << ',' << rec.error << '\n';
        }
}

std::vector<ExperimentResult> sweep(const AttackContext& ctx, const SweepGrid& grid) {
    std::vector<ExperimentResult> results;
    const bool persist = !grid.store_dir.empty();
    if (persist) fs::create_directories(fs::path(grid.store_dir) / "cells");

    for (const auto& protocol : grid.protocols)
        for (const auto kind : grid.detector_kinds)
            for (const auto& generator : grid.generators)
                for (const uint64_t seed : grid.seeds) {
                    InjectionPlan plan;
                    plan.protocol = protocol;
                    plan.generator = generator;
                    plan.trigger_id = grid.trigger_id.empty()
                                          ? default_trigger_id(*ctx.external)
                                          : grid.trigger_id;
                    plan.seed = seed;

                    const std::string fp = cell_fingerprint(ctx, plan, kind, grid.rates);
                    const fs::path cell_path =
                        persist ? fs::path(grid.store_dir) / "cells" / (fp + ".json")
                                : fs::path();
                    if (persist && fs::exists(cell_path)) {
                        std::ifstream in(cell_path);
                        std::string text((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
                        results.push_back(experiment_from_json(text));
                        continue;
                    }

                    ExperimentResult r;
                    try {
                        r = run_attack(ctx, plan, kind, grid.rates);
                    } catch (const std::exception& e) {
                        r.plan = plan;
                        r.detector_kind = detectors::to_string(kind);
                        r.cell_fingerprint = fp;
                        RateRecord rec;
                        rec.failed = true;
                        rec.error = e.what();
                        r.records.push_back(rec);
                    }
                    if (persist) {
                        // atomic per-cell commit
                        const fs::path tmp = cell_path.string() + ".tmp";
                        {
                            std::ofstream out(tmp, std::ios::trunc);
                            out << experiment_to_json(r) << "\n";
                        }
                        fs::rename(tmp, cell_path);
                    }
                    results.push_back(std::move(r));
                }
    return results;
}

} // namespace fas::harness
