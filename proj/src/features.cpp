#include "fas/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"

namespace fas::features {

using nlohmann::json;
using synthface::FaceSample;
using synthface::Label;

FeatureExtractor::FeatureExtractor(const ExtractorConfig& cfg) : cfg_(cfg) {
    params_ = std::make_shared<nn::ParamSet>();
    core::Rng rng(cfg.seed);
    const int64_t c = cfg.channels;
    c1_ = nn::Conv2d(*params_, "c1", 3, c, 3, 1, 1, rng);
    c2_ = nn::Conv2d(*params_, "c2", c, 2 * c, 3, 2, 1, rng);
    c3_ = nn::Conv2d(*params_, "c3", 2 * c, 2 * c, 3, 1, 1, rng);
    c4_ = nn::Conv2d(*params_, "c4", 2 * c, 4 * c, 3, 2, 1, rng);
    fc_ = nn::Dense(*params_, "fc", 4 * c, cfg.embed_dim, rng);
}

ad::Var FeatureExtractor::embed_graph(const ad::Var& images) const {
    ad::Var h = ad::leaky_relu(c1_(ad::add_scalar(images, -0.5)));
    h = ad::leaky_relu(c2_(h));
    h = ad::leaky_relu(c3_(h));
    h = ad::leaky_relu(c4_(h));
    h = ad::global_avg_pool(h);
    h = fc_(h);
    return ad::l2_normalize_rows(h);
}

Tensor FeatureExtractor::extract_batch(const Tensor& images) const {
    if (images.rank() != 4 || images.dim(1) != 3)
        throw std::invalid_argument("extract_batch: expected [n,3,H,W]");
    ad::Var x = ad::constant(images);
    return embed_graph(x).val();
}

Tensor FeatureExtractor::extract(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("extract: expected [3,H,W]");
    Tensor batch = image.reshaped({1, 3, image.dim(1), image.dim(2)});
    Tensor out = extract_batch(batch);
    return out.reshaped({cfg_.embed_dim});
}

core::Checkpoint FeatureExtractor::to_checkpoint() const {
    core::Checkpoint ck;
    ck.kind = "feature_extractor";
    json meta{{"embed_dim", cfg_.embed_dim}, {"channels", cfg_.channels},
              {"margin", cfg_.margin},       {"scale", cfg_.scale},
              {"learning_rate", cfg_.learning_rate}, {"epochs", cfg_.epochs},
              {"batch", cfg_.batch},         {"seed", cfg_.seed},
              {"validation_margin", validation_margin_}, {"trained", trained_}};
    ck.meta_json = meta.dump();
    for (const auto& [name, t] : params_->state()) ck.tensors[name] = t;
    if (head_w_.valid()) ck.tensors["head.w"] = head_w_.val();
    return ck;
}

FeatureExtractor FeatureExtractor::from_checkpoint(const core::Checkpoint& ckpt) {
    if (ckpt.kind != "feature_extractor")
        throw std::runtime_error("from_checkpoint: wrong kind " + ckpt.kind);
    json meta = json::parse(ckpt.meta_json);
    ExtractorConfig cfg;
    cfg.embed_dim = meta.at("embed_dim");
    cfg.channels = meta.at("channels");
    cfg.margin = meta.at("margin");
    cfg.scale = meta.at("scale");
    cfg.learning_rate = meta.at("learning_rate");
    cfg.epochs = meta.at("epochs");
    cfg.batch = meta.at("batch");
    cfg.seed = meta.at("seed");
    FeatureExtractor fe(cfg);
    std::map<std::string, Tensor> state;
    for (const auto& [name, t] : ckpt.tensors)
        if (name != "head.w") state[name] = t;
    fe.params_->load_state(state);
    fe.validation_margin_ = meta.value("validation_margin", 0.0);
    fe.trained_ = meta.value("trained", false);
    fe.params_->set_trainable(false);
    return fe;
}

double cosine(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw std::invalid_argument("cosine: length mismatch");
    double dot = 0, na = 0, nb = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb) + 1e-30);
}

namespace {

Tensor stack_images(const std::vector<const Tensor*>& imgs) {
    const int64_t n = static_cast<int64_t>(imgs.size());
    const int64_t h = imgs[0]->dim(1), w = imgs[0]->dim(2);
    Tensor out({n, 3, h, w});
    for (int64_t i = 0; i < n; ++i)
        std::copy_n(imgs[static_cast<size_t>(i)]->data(), 3 * h * w,
                    out.data() + i * 3 * h * w);
    return out;
}

} // namespace

FeatureExtractor train_identity_extractor(const std::vector<FaceSample>& corpus,
                                          const ExtractorConfig& cfg) {
    // collect live images per subject
    std::map<int64_t, std::vector<const Tensor*>> by_subject;
    for (const auto& s : corpus)
        if (s.label == Label::live) by_subject[s.subject_id].push_back(&s.image);
    if (by_subject.size() < 2)
        throw std::invalid_argument("train_identity_extractor: need >= 2 subjects");
    for (const auto& [subj, imgs] : by_subject)
        if (imgs.size() < 2)
            throw std::invalid_argument(
                "train_identity_extractor: subject " + std::to_string(subj) +
                " has a single image (no validation pairs)");

    std::vector<int64_t> class_of_subject;
    std::map<int64_t, int64_t> cls_index;
    for (const auto& [subj, imgs] : by_subject) {
        cls_index[subj] = static_cast<int64_t>(class_of_subject.size());
        class_of_subject.push_back(subj);
    }
    const int64_t n_cls = static_cast<int64_t>(class_of_subject.size());

    // hold out one image per subject for the validation pair set
    std::vector<std::pair<const Tensor*, int64_t>> train_items;
    std::vector<std::pair<const Tensor*, int64_t>> val_items;
    for (const auto& [subj, imgs] : by_subject) {
        for (size_t i = 0; i + 1 < imgs.size(); ++i)
            train_items.emplace_back(imgs[i], cls_index[subj]);
        val_items.emplace_back(imgs.back(), cls_index[subj]);
    }

    FeatureExtractor fe(cfg);
    core::Rng rng(cfg.seed ^ 0xfeedull);
    fe.head_w_ = fe.params_->add("head.w", nn::kaiming_dense(n_cls, cfg.embed_dim, rng));

    nn::Adam opt(cfg.learning_rate);
    std::vector<size_t> order(train_items.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        int64_t epoch_batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
            std::vector<const Tensor*> imgs;
            std::vector<int64_t> targets;
            for (size_t i = start; i < end; ++i) {
                imgs.push_back(train_items[order[i]].first);
                targets.push_back(train_items[order[i]].second);
            }
            std::vector<double> margins(imgs.size(), cfg.margin);
            ad::Var x = ad::constant(stack_images(imgs));
            ad::Var emb = fe.embed_graph(x);
            ad::Var loss = nn::angular_margin_ce(emb, fe.head_w_, targets, margins, cfg.scale);
            fe.params_->zero_grads();
            ad::backward(loss);
            opt.step(*fe.params_);
            epoch_loss += loss.val()[0];
            ++epoch_batches;
        }
        fe.training_curve_.push_back(epoch_loss / static_cast<double>(epoch_batches));
    }

    // validation margin: mean same-subject cosine minus mean cross-subject
    // cosine over held-out embeddings paired with training embeddings
    std::vector<Tensor> val_emb;
    std::vector<int64_t> val_cls;
    for (const auto& [img, cls] : val_items) {
        val_emb.push_back(fe.extract(*img));
        val_cls.push_back(cls);
    }
    double same_sum = 0, cross_sum = 0;
    int64_t same_n = 0, cross_n = 0;
    std::vector<Tensor> train_emb;
    std::vector<int64_t> train_cls;
    for (size_t i = 0; i < train_items.size(); ++i) {
        train_emb.push_back(fe.extract(*train_items[i].first));
        train_cls.push_back(train_items[i].second);
    }
    for (size_t i = 0; i < val_emb.size(); ++i)
        for (size_t j = 0; j < train_emb.size(); ++j) {
            const double c = cosine(val_emb[i], train_emb[j]);
            if (val_cls[i] == train_cls[j]) {
                same_sum += c;
                ++same_n;
            } else {
                cross_sum += c;
                ++cross_n;
            }
        }
    fe.validation_margin_ = same_sum / std::max<int64_t>(1, same_n) -
                            cross_sum / std::max<int64_t>(1, cross_n);
    fe.trained_ = true;
    fe.params_->set_trainable(false);
    return fe;
}

PerceptualNet::PerceptualNet(uint64_t seed) : seed_(seed) {
    params_ = std::make_shared<nn::ParamSet>();
    core::Rng rng(seed);
    p1_ = nn::Conv2d(*params_, "p1", 3, 8, 3, 1, 1, rng);
    p2_ = nn::Conv2d(*params_, "p2", 8, 12, 3, 1, 1, rng);
    p3_ = nn::Conv2d(*params_, "p3", 12, 12, 3, 1, 1, rng);
    auto weights = [&rng](int64_t c) {
        Tensor w({c});
        for (int64_t i = 0; i < c; ++i) w[i] = rng.uniform(0.5, 1.5);
        return w;
    };
    w1_ = weights(8);
    w2_ = weights(12);
    w3_ = weights(12);
    params_->set_trainable(false);
}

std::vector<ad::Var> PerceptualNet::layer_features(const ad::Var& x) const {
    std::vector<ad::Var> feats;
    ad::Var h1 = ad::leaky_relu(p1_(ad::add_scalar(x, -0.5)));
    feats.push_back(h1);
    ad::Var h2 = ad::leaky_relu(p2_(ad::avg_pool(h1, 2)));
    feats.push_back(h2);
    ad::Var h3 = ad::leaky_relu(p3_(ad::avg_pool(h2, 2)));
    feats.push_back(h3);
    return feats;
}

std::vector<Tensor> PerceptualNet::pyramid(const Tensor& images) const {
    Tensor batch = images.rank() == 3
                       ? images.reshaped({1, 3, images.dim(1), images.dim(2)})
                       : images;
    auto feats = layer_features(ad::constant(batch));
    std::vector<Tensor> out;
    for (auto& f : feats) out.push_back(f.val());
    return out;
}

ad::Var PerceptualNet::feature_distance_graph(const ad::Var& images,
                                              const std::vector<Tensor>& ref_raw) const {
    auto feats = layer_features(images);
    ad::Var total;
    for (int l = 0; l < kLayers; ++l) {
        ad::Var d = ad::mean_all(ad::square(ad::sub(feats[static_cast<size_t>(l)],
                                                    ad::constant(ref_raw[static_cast<size_t>(l)]))));
        total = total.valid() ? ad::add(total, d) : d;
    }
    return ad::mul_scalar(total, 1.0 / static_cast<double>(kLayers));
}

ad::Var PerceptualNet::perceptual_distance_graph(const ad::Var& images,
                                                 const std::vector<Tensor>& ref_raw) const {
    auto feats = layer_features(images);
    const Tensor* weights[kLayers] = {&w1_, &w2_, &w3_};
    ad::Var total;
    for (int l = 0; l < kLayers; ++l) {
        ad::Var fn = ad::channel_l2_normalize(feats[static_cast<size_t>(l)]);
        ad::Var rn = ad::channel_l2_normalize(ad::constant(ref_raw[static_cast<size_t>(l)]));
        ad::Var d = ad::mean_all(
            ad::scale_channels(ad::square(ad::sub(fn, rn)), *weights[l]));
        total = total.valid() ? ad::add(total, d) : d;
    }
    return total;
}

double PerceptualNet::feature_distance(const Tensor& a, const Tensor& b) const {
    if (!a.same_shape(b))
        throw std::invalid_argument("feature_distance: shape mismatch");
    Tensor ab = a.rank() == 3 ? a.reshaped({1, 3, a.dim(1), a.dim(2)}) : a;
    return feature_distance_graph(ad::constant(ab), pyramid(b)).val()[0];
}

double PerceptualNet::perceptual_distance(const Tensor& a, const Tensor& b) const {
    if (!a.same_shape(b))
        throw std::invalid_argument("perceptual_distance: shape mismatch");
    if (!a.all_finite() || !b.all_finite())
        throw std::invalid_argument("perceptual_distance: non-finite input");
    Tensor ab = a.rank() == 3 ? a.reshaped({1, 3, a.dim(1), a.dim(2)}) : a;
    return perceptual_distance_graph(ad::constant(ab), pyramid(b)).val()[0];
}

} // namespace fas::features
