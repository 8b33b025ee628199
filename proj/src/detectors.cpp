#include "fas/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fas/io/hash.hpp"
#include "fas/metrics.hpp"
#include "json.hpp"

namespace fas::detectors {

using nlohmann::json;
using synthface::FaceSample;
using synthface::Instrument;
using synthface::Label;

const char* to_string(DetectorKind k) {
    switch (k) {
        case DetectorKind::patchnet_lite: return "patchnet_lite";
        case DetectorKind::stdn_lite: return "stdn_lite";
        case DetectorKind::cnn_baseline: return "cnn_baseline";
    }
    return "cnn_baseline";
}

DetectorKind detector_kind_from_string(const std::string& s) {
    if (s == "patchnet_lite") return DetectorKind::patchnet_lite;
    if (s == "stdn_lite") return DetectorKind::stdn_lite;
    if (s == "cnn_baseline") return DetectorKind::cnn_baseline;
    throw std::invalid_argument("unknown detector kind: " + s);
}

std::string fingerprint_samples(const SampleList& samples) {
    std::vector<const FaceSample*> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const FaceSample* a, const FaceSample* b) {
                  return a->sample_id < b->sample_id;
              });
    io::Fnv1a h;
    for (const auto* s : sorted) {
        h.update(s->sample_id);
        h.update(to_string(s->label), std::strlen(to_string(s->label)));
        h.update(to_string(s->instrument), std::strlen(to_string(s->instrument)));
        h.update(s->image.data(), static_cast<size_t>(s->image.numel()) * sizeof(double));
    }
    return io::Fnv1a::hex(h.digest());
}

double eer_threshold(const std::vector<std::pair<double, bool>>& scores, double* eer_out) {
    if (scores.empty()) throw std::invalid_argument("eer_threshold: empty score set");
    int64_t n_live = 0, n_spoof = 0;
    for (const auto& [s, is_live] : scores) (is_live ? n_live : n_spoof)++;
    if (n_live == 0 || n_spoof == 0)
        throw std::invalid_argument("eer_threshold: need both live and spoof scores");

    std::vector<double> uniq;
    for (const auto& [s, il] : scores) uniq.push_back(s);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    // candidate thresholds: midpoints between adjacent scores plus both corners
    std::vector<double> cands;
    cands.push_back(uniq.front());
    for (size_t i = 0; i + 1 < uniq.size(); ++i)
        cands.push_back(0.5 * (uniq[i] + uniq[i + 1]));
    cands.push_back(uniq.back() + 1.0); // reject-everything corner

    double best_gap = 1e18, best_eer = 1.0;
    std::vector<double> at_gap; // thresholds achieving the minimal gap
    for (double t : cands) {
        int64_t fa = 0, fr = 0;
        for (const auto& [s, is_live] : scores) {
            if (is_live && s < t) ++fr;
            if (!is_live && s >= t) ++fa;
        }
        const double far = static_cast<double>(fa) / static_cast<double>(n_spoof);
        const double frr = static_cast<double>(fr) / static_cast<double>(n_live);
        const double gap = std::abs(far - frr);
        if (gap < best_gap - 1e-15) {
            best_gap = gap;
            best_eer = (far + frr) / 2.0;
            at_gap.clear();
        }
        if (gap <= best_gap + 1e-15) at_gap.push_back(t);
    }
    if (eer_out) *eer_out = best_eer;
    // center of the optimal plateau transfers better than its edge
    return at_gap[at_gap.size() / 2];
}

namespace {

Tensor stack_samples(const SampleList& samples, size_t start, size_t end) {
    const int64_t n = static_cast<int64_t>(end - start);
    const Tensor& first = samples[start]->image;
    Tensor out({n, 3, first.dim(1), first.dim(2)});
    for (size_t i = start; i < end; ++i)
        std::copy_n(samples[i]->image.data(), first.numel(),
                    out.data() + static_cast<int64_t>(i - start) * first.numel());
    return out;
}

uint64_t sample_seed(const std::string& sample_id, uint64_t salt) {
    io::Fnv1a h;
    h.update(sample_id);
    return h.digest() ^ salt;
}

void check_both_labels(const SampleList& train, const char* who) {
    bool has_live = false, has_spoof = false;
    for (const auto* s : train)
        (s->label == Label::live ? has_live : has_spoof) = true;
    if (!has_live || !has_spoof)
        throw std::invalid_argument(std::string(who) +
                                    ": single-class training set rejected");
}

double bilinear(const Tensor& img, int64_t c, double y, double x) {
    const int64_t h = img.dim(1), w = img.dim(2);
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const int64_t y0 = static_cast<int64_t>(std::floor(y));
    const int64_t x0 = static_cast<int64_t>(std::floor(x));
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const int64_t x1 = std::min(x0 + 1, w - 1);
    const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
    const double v00 = img[(c * h + y0) * w + x0], v01 = img[(c * h + y0) * w + x1];
    const double v10 = img[(c * h + y1) * w + x0], v11 = img[(c * h + y1) * w + x1];
    return v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx + v10 * fy * (1 - fx) +
           v11 * fy * fx;
}

} // namespace

std::vector<Tensor> extract_patches(const Tensor& image, const PatchNetLiteConfig& cfg,
                                    uint64_t seed) {
    const int64_t h = image.dim(1), w = image.dim(2), p = cfg.patch_size;
    if (p <= 0 || p > std::min(h, w))
        throw std::invalid_argument("extract_patches: patch size " + std::to_string(p) +
                                    " exceeds image size");
    core::Rng rng(seed);
    std::vector<Tensor> patches;
    const double half = static_cast<double>(p - 1) / 2.0;
    // crops stay centered on the face region (outer eighth excluded when possible)
    const int64_t ymargin = std::min(h / 8, std::max<int64_t>(0, (h - p) / 2));
    const int64_t xmargin = std::min(w / 8, std::max<int64_t>(0, (w - p) / 2));
    for (int64_t i = 0; i < cfg.patches_per_image; ++i) {
        const int64_t top = ymargin + rng.uniform_int(h - p - 2 * ymargin + 1);
        const int64_t left = xmargin + rng.uniform_int(w - p - 2 * xmargin + 1);
        const int64_t quarter = rng.uniform_int(4);
        const double jitter =
            cfg.max_rotation > 0 ? rng.uniform(-cfg.max_rotation, cfg.max_rotation) : 0.0;
        const double angle = static_cast<double>(quarter) * 1.5707963267948966 + jitter;
        const double ca = std::cos(angle), sa = std::sin(angle);
        const double cy = static_cast<double>(top) + half;
        const double cx = static_cast<double>(left) + half;
        Tensor patch({3, p, p});
        for (int64_t py = 0; py < p; ++py)
            for (int64_t px = 0; px < p; ++px) {
                const double dy = static_cast<double>(py) - half;
                const double dx = static_cast<double>(px) - half;
                const double sy = cy + sa * dx + ca * dy;
                const double sx = cx + ca * dx - sa * dy;
                for (int64_t c = 0; c < 3; ++c)
                    patch[(c * p + py) * p + px] = bilinear(image, c, sy, sx);
            }
        patches.push_back(std::move(patch));
    }
    return patches;
}

// ---------------------------------------------------------------------------
// PatchNet-lite

struct PatchNetModel {
    PatchNetLiteConfig cfg;
    std::shared_ptr<nn::ParamSet> params;
    nn::Conv2d c1, c2, c3, c4;
    nn::Dense fc;
    ad::Var head_w;
    // class space: instrument x sensor pairs seen in training
    std::vector<std::pair<Instrument, int64_t>> classes;
    std::vector<bool> class_is_live;

    PatchNetModel(const PatchNetLiteConfig& cfg_, int64_t n_classes, uint64_t seed)
        : cfg(cfg_) {
        params = std::make_shared<nn::ParamSet>();
        core::Rng rng(seed);
        const int64_t c = cfg.channels;
        c1 = nn::Conv2d(*params, "c1", 3, c, 3, 1, 1, rng);
        c2 = nn::Conv2d(*params, "c2", c, 2 * c, 3, 2, 1, rng);
        c3 = nn::Conv2d(*params, "c3", 2 * c, 2 * c, 3, 1, 1, rng);
        c4 = nn::Conv2d(*params, "c4", 2 * c, 4 * c, 3, 2, 1, rng);
        fc = nn::Dense(*params, "fc", 4 * c, cfg.embed_dim, rng);
        head_w = params->add("head.w", nn::kaiming_dense(n_classes, cfg.embed_dim, rng));
    }

    ad::Var embed(const ad::Var& x) const {
        ad::Var h = ad::leaky_relu(c1(ad::add_scalar(x, -0.5)));
        h = ad::leaky_relu(c2(h));
        h = ad::leaky_relu(c3(h));
        h = ad::leaky_relu(c4(h));
        return fc(ad::global_avg_pool(h));
    }

    // mean over patches of the summed live-class softmax probability
    double score(const FaceSample& sample) const {
        auto patches = extract_patches(sample.image, cfg, sample_seed(sample.sample_id, 0xe7a1));
        Tensor batch({static_cast<int64_t>(patches.size()), 3, cfg.patch_size, cfg.patch_size});
        for (size_t i = 0; i < patches.size(); ++i)
            std::copy_n(patches[i].data(), patches[i].numel(),
                        batch.data() + static_cast<int64_t>(i) * patches[i].numel());
        ad::Var emb = ad::l2_normalize_rows(embed(ad::constant(batch)));
        ad::Var wn = ad::l2_normalize_rows(head_w);
        Tensor logits = ad::mul_scalar(ad::matmul_nt(emb, wn), cfg.s).val();
        const int64_t n = logits.dim(0), k = logits.dim(1);
        double total = 0;
        for (int64_t i = 0; i < n; ++i) {
            double mx = logits.at(i, 0);
            for (int64_t j = 1; j < k; ++j) mx = std::max(mx, logits.at(i, j));
            double denom = 0, live = 0;
            for (int64_t j = 0; j < k; ++j) {
                const double e = std::exp(logits.at(i, j) - mx);
                denom += e;
                if (class_is_live[static_cast<size_t>(j)]) live += e;
            }
            total += live / denom;
        }
        return total / static_cast<double>(n);
    }
};

// ---------------------------------------------------------------------------
// STDN-lite

struct StdnModel {
    StdnLiteConfig cfg;
    std::shared_ptr<nn::ParamSet> params;
    nn::Conv2d e0, e1, e2, t1, t2;
    nn::Dense cls_feat, cls_energy;

    StdnModel(const StdnLiteConfig& cfg_, uint64_t seed) : cfg(cfg_) {
        params = std::make_shared<nn::ParamSet>();
        core::Rng rng(seed);
        const int64_t c = cfg.channels;
        e0 = nn::Conv2d(*params, "e0", 3, c, 3, 1, 1, rng);
        e1 = nn::Conv2d(*params, "e1", c, c, 3, 2, 1, rng);
        e2 = nn::Conv2d(*params, "e2", c, 2 * c, 3, 2, 1, rng);
        t1 = nn::Conv2d(*params, "t1", 2 * c, c, 3, 1, 1, rng);
        t2 = nn::Conv2d(*params, "t2", c, 3, 3, 1, 1, rng, 0.1);
        cls_feat = nn::Dense(*params, "cls_feat", 2 * c, 1, rng);
        cls_energy = nn::Dense(*params, "cls_energy", 3, 1, rng);
    }

    struct Forward {
        ad::Var feats;  // [n, 2c]
        ad::Var trace;  // [n, 3, h, w]
        ad::Var logit;  // [n, 1]
    };

    ad::Var encode(const ad::Var& x) const {
        ad::Var h = ad::leaky_relu(e0(ad::add_scalar(x, -0.5)));
        h = ad::leaky_relu(e1(h));
        return ad::leaky_relu(e2(h));
    }

    Forward forward(const ad::Var& x) const {
        Forward f;
        ad::Var enc2 = encode(x);
        f.feats = ad::global_avg_pool(enc2);
        ad::Var td = ad::leaky_relu(t1(ad::upsample_nearest2(enc2)));
        f.trace = ad::mul_scalar(ad::tanh_(t2(ad::upsample_nearest2(td))), 0.3);
        ad::Var energy = ad::global_avg_pool(ad::abs_(f.trace));
        f.logit = ad::add(cls_feat(f.feats), cls_energy(energy));
        return f;
    }

    double score(const FaceSample& sample) const {
        Tensor b = sample.image.reshaped({1, 3, sample.image.dim(1), sample.image.dim(2)});
        Forward f = forward(ad::constant(b));
        const double z = f.logit.val()[0];
        return 1.0 / (1.0 + std::exp(-z));
    }
};

// ---------------------------------------------------------------------------
// Plain CNN baseline

struct CnnModel {
    CnnBaselineConfig cfg;
    std::shared_ptr<nn::ParamSet> params;
    nn::Conv2d c1, c2, c3, c4;
    nn::Dense fc;

    CnnModel(const CnnBaselineConfig& cfg_, uint64_t seed) : cfg(cfg_) {
        params = std::make_shared<nn::ParamSet>();
        core::Rng rng(seed);
        const int64_t c = cfg.channels;
        c1 = nn::Conv2d(*params, "c1", 3, c, 3, 1, 1, rng);
        c2 = nn::Conv2d(*params, "c2", c, 2 * c, 3, 2, 1, rng);
        c3 = nn::Conv2d(*params, "c3", 2 * c, 2 * c, 3, 1, 1, rng);
        c4 = nn::Conv2d(*params, "c4", 2 * c, 4 * c, 3, 2, 1, rng);
        fc = nn::Dense(*params, "fc", 4 * c, 1, rng);
    }

    ad::Var logits(const ad::Var& x) const {
        ad::Var h = ad::leaky_relu(c1(ad::add_scalar(x, -0.5)));
        h = ad::leaky_relu(c2(h));
        h = ad::leaky_relu(c3(h));
        h = ad::leaky_relu(c4(h));
        return fc(ad::global_avg_pool(h));
    }

    double score(const FaceSample& sample) const {
        Tensor b = sample.image.reshaped({1, 3, sample.image.dim(1), sample.image.dim(2)});
        const double z = logits(ad::constant(b)).val()[0];
        return 1.0 / (1.0 + std::exp(-z));
    }
};

// ---------------------------------------------------------------------------
// Detector surface

double Detector::live_score(const FaceSample& sample) const {
    if (sample.image.dim(1) != manifest_.input_size ||
        sample.image.dim(2) != manifest_.input_size)
        throw std::invalid_argument(
            "classify: image size " + std::to_string(sample.image.dim(1)) +
            " does not match training size " + std::to_string(manifest_.input_size));
    switch (kind_) {
        case DetectorKind::patchnet_lite: return patchnet_->score(sample);
        case DetectorKind::stdn_lite: return stdn_->score(sample);
        case DetectorKind::cnn_baseline: return cnn_->score(sample);
    }
    return 0.0;
}

Verdict Detector::classify(const FaceSample& sample) const {
    Verdict v;
    v.sample_id = sample.sample_id;
    v.live_score = live_score(sample);
    v.decision = v.live_score >= threshold_ ? Label::live : Label::spoof; // tie -> live
    v.truth_label = sample.label;
    v.truth_instrument = sample.instrument;
    v.truth_subject = sample.subject_id;
    return v;
}

Tensor Detector::spoof_trace(const Tensor& image) const {
    if (kind_ != DetectorKind::stdn_lite)
        throw std::logic_error("spoof_trace: only available for stdn_lite");
    Tensor b = image.reshaped({1, 3, image.dim(1), image.dim(2)});
    auto f = stdn_->forward(ad::constant(b));
    return f.trace.val().reshaped({3, image.dim(1), image.dim(2)});
}

namespace {

json manifest_to_json(const TrainManifest& m) {
    return json{{"config", json::parse(m.config_json)},
                {"seed", m.seed},
                {"train_fingerprint", m.train_fingerprint},
                {"dev_fingerprint", m.dev_fingerprint},
                {"dev_eer", m.dev_eer},
                {"dev_acer", m.dev_acer},
                {"input_size", m.input_size}};
}

TrainManifest manifest_from_json(const json& j) {
    TrainManifest m;
    m.config_json = j.at("config").dump();
    m.seed = j.at("seed");
    m.train_fingerprint = j.at("train_fingerprint");
    m.dev_fingerprint = j.at("dev_fingerprint");
    m.dev_eer = j.at("dev_eer");
    m.dev_acer = j.at("dev_acer");
    m.input_size = j.at("input_size");
    return m;
}

double dev_acer_at_threshold(const Detector& det, const SampleList& dev) {
    std::vector<Verdict> lives, spoofs;
    for (const auto* s : dev) {
        Verdict v = det.classify(*s);
        (s->label == Label::live ? lives : spoofs).push_back(v);
    }
    if (lives.empty() || spoofs.empty()) return 0.0;
    return metrics::acer(metrics::apcer(spoofs), metrics::bpcer(lives));
}

} // namespace

core::Checkpoint Detector::to_checkpoint() const {
    core::Checkpoint ck;
    ck.kind = "detector";
    json meta{{"detector_kind", to_string(kind_)},
              {"threshold", threshold_},
              {"manifest", manifest_to_json(manifest_)}};
    switch (kind_) {
        case DetectorKind::patchnet_lite: {
            const auto& m = *patchnet_;
            json cls = json::array();
            for (size_t i = 0; i < m.classes.size(); ++i)
                cls.push_back({{"instrument", synthface::to_string(m.classes[i].first)},
                               {"sensor", m.classes[i].second},
                               {"live", static_cast<bool>(m.class_is_live[i])}});
            meta["classes"] = cls;
            meta["config"] = json::parse(manifest_.config_json);
            for (const auto& [name, t] : m.params->state()) ck.tensors[name] = t;
            break;
        }
        case DetectorKind::stdn_lite:
            for (const auto& [name, t] : stdn_->params->state()) ck.tensors[name] = t;
            break;
        case DetectorKind::cnn_baseline:
            for (const auto& [name, t] : cnn_->params->state()) ck.tensors[name] = t;
            break;
    }
    ck.meta_json = meta.dump();
    return ck;
}

Detector Detector::from_checkpoint(const core::Checkpoint& ckpt) {
    if (ckpt.kind != "detector")
        throw std::runtime_error("from_checkpoint: wrong kind " + ckpt.kind);
    json meta = json::parse(ckpt.meta_json);
    Detector det;
    det.kind_ = detector_kind_from_string(meta.at("detector_kind"));
    det.threshold_ = meta.at("threshold");
    det.manifest_ = manifest_from_json(meta.at("manifest"));
    const json cfg = json::parse(det.manifest_.config_json);
    std::map<std::string, Tensor> state(ckpt.tensors.begin(), ckpt.tensors.end());
    switch (det.kind_) {
        case DetectorKind::patchnet_lite: {
            PatchNetLiteConfig c;
            c.patch_size = cfg.at("patch_size");
            c.patches_per_image = cfg.at("patches_per_image");
            c.s = cfg.at("s");
            c.m_l = cfg.at("m_l");
            c.m_s = cfg.at("m_s");
            c.epochs = cfg.at("epochs");
            c.learning_rate = cfg.at("learning_rate");
            c.weight_decay = cfg.at("weight_decay");
            c.max_rotation = cfg.at("max_rotation");
            c.channels = cfg.at("channels");
            c.embed_dim = cfg.at("embed_dim");
            c.batch_images = cfg.at("batch_images");
            const auto cls = meta.at("classes");
            det.patchnet_ = std::make_shared<PatchNetModel>(
                c, static_cast<int64_t>(cls.size()), det.manifest_.seed);
            det.patchnet_->classes.clear();
            det.patchnet_->class_is_live.clear();
            for (const auto& e : cls) {
                det.patchnet_->classes.emplace_back(
                    synthface::instrument_from_string(e.at("instrument")),
                    e.at("sensor").get<int64_t>());
                det.patchnet_->class_is_live.push_back(e.at("live").get<bool>());
            }
            det.patchnet_->params->load_state(state);
            det.patchnet_->params->set_trainable(false);
            break;
        }
        case DetectorKind::stdn_lite: {
            StdnLiteConfig c;
            c.alpha1 = cfg.at("alpha1");
            c.alpha2 = cfg.at("alpha2");
            c.alpha3 = cfg.at("alpha3");
            c.alpha4 = cfg.at("alpha4");
            c.alpha5 = cfg.at("alpha5");
            c.epochs = cfg.at("epochs");
            c.learning_rate = cfg.at("learning_rate");
            c.lr_decay = cfg.at("lr_decay");
            c.lr_decay_steps = cfg.at("lr_decay_steps");
            c.channels = cfg.at("channels");
            c.batch = cfg.at("batch");
            det.stdn_ = std::make_shared<StdnModel>(c, det.manifest_.seed);
            det.stdn_->params->load_state(state);
            det.stdn_->params->set_trainable(false);
            break;
        }
        case DetectorKind::cnn_baseline: {
            CnnBaselineConfig c;
            c.channels = cfg.at("channels");
            c.epochs = cfg.at("epochs");
            c.learning_rate = cfg.at("learning_rate");
            c.batch = cfg.at("batch");
            det.cnn_ = std::make_shared<CnnModel>(c, det.manifest_.seed);
            det.cnn_->params->load_state(state);
            det.cnn_->params->set_trainable(false);
            break;
        }
    }
    return det;
}

// ---------------------------------------------------------------------------
// Trainers

Detector train_patchnet_lite(const SampleList& train, const SampleList& dev,
                             const PatchNetLiteConfig& cfg, uint64_t seed) {
    if (train.empty() || dev.empty())
        throw std::invalid_argument("train_patchnet_lite: empty split");
    check_both_labels(train, "train_patchnet_lite");
    const int64_t img_size = train[0]->image.dim(1);
    if (cfg.patch_size > img_size)
        throw std::invalid_argument("train_patchnet_lite: patch size exceeds image size");

    // class space: instrument x sensor pairs present in training
    std::vector<std::pair<Instrument, int64_t>> classes;
    auto class_index = [&](const FaceSample& s) -> int64_t {
        const std::pair<Instrument, int64_t> key{s.instrument, s.sensor_id};
        for (size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == key) return static_cast<int64_t>(i);
        classes.push_back(key);
        return static_cast<int64_t>(classes.size() - 1);
    };
    std::vector<int64_t> targets;
    for (const auto* s : train) targets.push_back(class_index(*s));

    PatchNetModel model(cfg, static_cast<int64_t>(classes.size()), seed);
    model.classes = classes;
    model.class_is_live.clear();
    for (const auto& [inst, sensor] : classes)
        model.class_is_live.push_back(inst == Instrument::none);

    nn::Adam opt(cfg.learning_rate, cfg.weight_decay);
    core::Rng rng(seed ^ 0x9a7c4ull);
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.batch_images)) {
            const size_t end =
                std::min(order.size(), start + static_cast<size_t>(cfg.batch_images));
            std::vector<Tensor> patch_list;
            std::vector<int64_t> patch_targets;
            std::vector<double> patch_margins;
            for (size_t i = start; i < end; ++i) {
                const FaceSample& s = *train[order[i]];
                const uint64_t pseed =
                    sample_seed(s.sample_id,
                                seed * 1000003ull + static_cast<uint64_t>(epoch) * 131ull);
                for (auto& p : extract_patches(s.image, cfg, pseed)) {
                    patch_list.push_back(std::move(p));
                    patch_targets.push_back(targets[order[i]]);
                    patch_margins.push_back(s.label == Label::live ? cfg.m_l : cfg.m_s);
                }
            }
            Tensor batch({static_cast<int64_t>(patch_list.size()), 3, cfg.patch_size,
                          cfg.patch_size});
            for (size_t i = 0; i < patch_list.size(); ++i)
                std::copy_n(patch_list[i].data(), patch_list[i].numel(),
                            batch.data() + static_cast<int64_t>(i) * patch_list[i].numel());
            ad::Var emb = model.embed(ad::constant(batch));
            ad::Var loss =
                nn::angular_margin_ce(emb, model.head_w, patch_targets, patch_margins, cfg.s);
            model.params->zero_grads();
            ad::backward(loss);
            opt.step(*model.params);
        }
    }

    model.params->set_trainable(false);
    Detector det;
    det.kind_ = DetectorKind::patchnet_lite;
    det.patchnet_ = std::make_shared<PatchNetModel>(std::move(model));
    det.manifest_.seed = seed;
    det.manifest_.input_size = img_size;
    det.manifest_.train_fingerprint = fingerprint_samples(train);
    det.manifest_.dev_fingerprint = fingerprint_samples(dev);
    json cfg_json{{"patch_size", cfg.patch_size},
                  {"patches_per_image", cfg.patches_per_image},
                  {"s", cfg.s},
                  {"m_l", cfg.m_l},
                  {"m_s", cfg.m_s},
                  {"epochs", cfg.epochs},
                  {"learning_rate", cfg.learning_rate},
                  {"weight_decay", cfg.weight_decay},
                  {"max_rotation", cfg.max_rotation},
                  {"channels", cfg.channels},
                  {"embed_dim", cfg.embed_dim},
                  {"batch_images", cfg.batch_images}};
    det.manifest_.config_json = cfg_json.dump();

    std::vector<std::pair<double, bool>> dev_scores;
    for (const auto* s : dev)
        dev_scores.emplace_back(det.patchnet_->score(*s), s->label == Label::live);
    det.threshold_ = eer_threshold(dev_scores, &det.manifest_.dev_eer);
    det.manifest_.dev_acer = dev_acer_at_threshold(det, dev);
    return det;
}

Detector train_stdn_lite(const SampleList& train, const SampleList& dev,
                         const StdnLiteConfig& cfg, uint64_t seed) {
    if (train.empty() || dev.empty())
        throw std::invalid_argument("train_stdn_lite: empty split");
    check_both_labels(train, "train_stdn_lite");
    const int64_t img_size = train[0]->image.dim(1);

    StdnModel model(cfg, seed);
    nn::Adam opt(cfg.learning_rate);
    core::Rng rng(seed ^ 0x57d2ull);
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    int64_t n_live_total = 0;
    for (const auto* s : train)
        if (s->label == Label::live) ++n_live_total;
    const double w_live =
        static_cast<double>(train.size()) / (2.0 * static_cast<double>(n_live_total));
    const double w_spoof =
        static_cast<double>(train.size()) /
        (2.0 * static_cast<double>(train.size() - n_live_total));

    Tensor live_centroid({1, 2 * cfg.channels});
    bool centroid_ready = false;
    int64_t global_step = 0;

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
            const int64_t bn = static_cast<int64_t>(end - start);
            SampleList batch_samples;
            for (size_t i = start; i < end; ++i) batch_samples.push_back(train[order[i]]);
            Tensor x = stack_samples(batch_samples, 0, batch_samples.size());

            std::vector<int64_t> live_rows, spoof_rows;
            for (int64_t i = 0; i < bn; ++i)
                (batch_samples[static_cast<size_t>(i)]->label == Label::live ? live_rows
                                                                             : spoof_rows)
                    .push_back(i);

            ad::Var xv = ad::constant(x);
            StdnModel::Forward f = model.forward(xv);
            ad::Var enc_recon = model.encode(ad::sub(xv, f.trace));
            ad::Var recon_feats = ad::global_avg_pool(enc_recon);

            // L1: class-balanced classification
            Tensor y({bn, 1}), wc({bn, 1});
            for (int64_t i = 0; i < bn; ++i) {
                const bool live = batch_samples[static_cast<size_t>(i)]->label == Label::live;
                y.at(i, 0) = live ? 1.0 : 0.0;
                wc.at(i, 0) = live ? w_live : w_spoof;
            }
            ad::Var l1 = ad::mean_all(
                ad::mul(ad::sub(ad::softplus(f.logit), ad::mul(ad::constant(y), f.logit)),
                        ad::constant(wc)));

            // L2: live-trace suppression
            const int64_t hw3 = 3 * img_size * img_size;
            Tensor live_mask(f.trace.val().shape(), 0.0);
            for (int64_t i : live_rows)
                for (int64_t t = 0; t < hw3; ++t) live_mask[i * hw3 + t] = 1.0;
            ad::Var l2 = ad::mul_scalar(
                ad::sum_all(ad::mul(ad::square(f.trace), ad::constant(live_mask))),
                1.0 / std::max<double>(1.0, static_cast<double>(live_rows.size() * hw3)));

            // update live centroid (detached)
            if (!live_rows.empty()) {
                Tensor batch_mean({1, 2 * cfg.channels});
                for (int64_t i : live_rows)
                    for (int64_t j = 0; j < 2 * cfg.channels; ++j)
                        batch_mean[j] += f.feats.val().at(i, j);
                for (int64_t j = 0; j < 2 * cfg.channels; ++j)
                    batch_mean[j] /= static_cast<double>(live_rows.size());
                if (!centroid_ready) {
                    live_centroid = batch_mean;
                    centroid_ready = true;
                } else {
                    for (int64_t j = 0; j < 2 * cfg.channels; ++j)
                        live_centroid[j] = 0.9 * live_centroid[j] + 0.1 * batch_mean[j];
                }
            }

            // L3: spoof reconstruction pulled toward the live feature centroid
            ad::Var l3;
            if (!spoof_rows.empty() && centroid_ready) {
                Tensor mu({bn, 2 * cfg.channels});
                Tensor spoof_mask({bn, 2 * cfg.channels}, 0.0);
                for (int64_t i = 0; i < bn; ++i)
                    for (int64_t j = 0; j < 2 * cfg.channels; ++j)
                        mu.at(i, j) = live_centroid[j];
                for (int64_t i : spoof_rows)
                    for (int64_t j = 0; j < 2 * cfg.channels; ++j) spoof_mask.at(i, j) = 1.0;
                l3 = ad::mul_scalar(
                    ad::sum_all(ad::mul(ad::square(ad::sub(recon_feats, ad::constant(mu))),
                                        ad::constant(spoof_mask))),
                    1.0 / std::max<double>(1.0, static_cast<double>(spoof_rows.size() *
                                                                    2 * cfg.channels)));
            } else {
                l3 = ad::constant(Tensor({1}, 0.0));
            }

            // L4: trace sparsity
            ad::Var l4 = ad::mean_all(ad::abs_(f.trace));
            // L5: feature consistency between x and x - t(x)
            ad::Var l5 = ad::mean_all(ad::square(ad::sub(f.feats, recon_feats)));

            ad::Var total = ad::add(
                ad::add(ad::add(ad::mul_scalar(l1, cfg.alpha1), ad::mul_scalar(l2, cfg.alpha2)),
                        ad::add(ad::mul_scalar(l3, cfg.alpha3), ad::mul_scalar(l4, cfg.alpha4))),
                ad::mul_scalar(l5, cfg.alpha5));

            opt.set_lr(nn::step_decay_lr(cfg.learning_rate, global_step, cfg.lr_decay_steps,
                                         1.0 - cfg.lr_decay));
            model.params->zero_grads();
            ad::backward(total);
            opt.step(*model.params);
            ++global_step;
        }
    }

    model.params->set_trainable(false);
    Detector det;
    det.kind_ = DetectorKind::stdn_lite;
    det.stdn_ = std::make_shared<StdnModel>(std::move(model));
    det.manifest_.seed = seed;
    det.manifest_.input_size = img_size;
    det.manifest_.train_fingerprint = fingerprint_samples(train);
    det.manifest_.dev_fingerprint = fingerprint_samples(dev);
    json cfg_json{{"alpha1", cfg.alpha1}, {"alpha2", cfg.alpha2}, {"alpha3", cfg.alpha3},
                  {"alpha4", cfg.alpha4}, {"alpha5", cfg.alpha5}, {"epochs", cfg.epochs},
                  {"learning_rate", cfg.learning_rate}, {"lr_decay", cfg.lr_decay},
                  {"lr_decay_steps", cfg.lr_decay_steps}, {"channels", cfg.channels},
                  {"batch", cfg.batch}};
    det.manifest_.config_json = cfg_json.dump();

    std::vector<std::pair<double, bool>> dev_scores;
    for (const auto* s : dev)
        dev_scores.emplace_back(det.stdn_->score(*s), s->label == Label::live);
    det.threshold_ = eer_threshold(dev_scores, &det.manifest_.dev_eer);
    det.manifest_.dev_acer = dev_acer_at_threshold(det, dev);
    return det;
}

Detector train_cnn_baseline(const SampleList& train, const SampleList& dev,
                            const CnnBaselineConfig& cfg, uint64_t seed) {
    if (train.empty() || dev.empty())
        throw std::invalid_argument("train_cnn_baseline: empty split");
    check_both_labels(train, "train_cnn_baseline");
    const int64_t img_size = train[0]->image.dim(1);

    CnnModel model(cfg, seed);
    nn::Adam opt(cfg.learning_rate);
    core::Rng rng(seed ^ 0xc4a11ull);
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    // class-balanced loss weights
    int64_t n_live = 0;
    for (const auto* s : train)
        if (s->label == Label::live) ++n_live;
    const double w_live =
        static_cast<double>(train.size()) / (2.0 * static_cast<double>(n_live));
    const double w_spoof = static_cast<double>(train.size()) /
                           (2.0 * static_cast<double>(train.size() - n_live));

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
            const int64_t bn = static_cast<int64_t>(end - start);
            SampleList batch_samples;
            for (size_t i = start; i < end; ++i) batch_samples.push_back(train[order[i]]);
            Tensor x = stack_samples(batch_samples, 0, batch_samples.size());
            Tensor y({bn, 1}), wc({bn, 1});
            for (int64_t i = 0; i < bn; ++i) {
                const bool live = batch_samples[static_cast<size_t>(i)]->label == Label::live;
                y.at(i, 0) = live ? 1.0 : 0.0;
                wc.at(i, 0) = live ? w_live : w_spoof;
            }
            ad::Var z = model.logits(ad::constant(x));
            ad::Var loss = ad::mean_all(ad::mul(
                ad::sub(ad::softplus(z), ad::mul(ad::constant(y), z)), ad::constant(wc)));
            model.params->zero_grads();
            ad::backward(loss);
            opt.step(*model.params);
        }
    }

    model.params->set_trainable(false);
    Detector det;
    det.kind_ = DetectorKind::cnn_baseline;
    det.cnn_ = std::make_shared<CnnModel>(std::move(model));
    det.manifest_.seed = seed;
    det.manifest_.input_size = img_size;
    det.manifest_.train_fingerprint = fingerprint_samples(train);
    det.manifest_.dev_fingerprint = fingerprint_samples(dev);
    json cfg_json{{"channels", cfg.channels},
                  {"epochs", cfg.epochs},
                  {"learning_rate", cfg.learning_rate},
                  {"batch", cfg.batch}};
    det.manifest_.config_json = cfg_json.dump();

    std::vector<std::pair<double, bool>> dev_scores;
    for (const auto* s : dev)
        dev_scores.emplace_back(det.cnn_->score(*s), s->label == Label::live);
    det.threshold_ = eer_threshold(dev_scores, &det.manifest_.dev_eer);
    det.manifest_.dev_acer = dev_acer_at_threshold(det, dev);
    return det;
}

} // namespace fas::detectors
