#include "fas/embedder.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace fas::embedder {

using nlohmann::json;
using synthface::FaceSample;
using synthface::Label;

namespace {

Tensor broadcast_features(const Tensor& features, int64_t h, int64_t w) {
    const int64_t n = features.dim(0), d = features.dim(1);
    Tensor map({n, d, h, w});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) {
            const double v = features.at(i, j);
            double* p = map.data() + (i * d + j) * h * w;
            for (int64_t t = 0; t < h * w; ++t) p[t] = v;
        }
    return map;
}

Tensor cover_logits(const Tensor& covers) {
    Tensor out(covers.shape());
    for (int64_t i = 0; i < covers.numel(); ++i) {
        const double v = std::clamp(covers[i], 1e-4, 1.0 - 1e-4);
        out[i] = std::log(v / (1.0 - v));
    }
    return out;
}

ad::Var resblock(const nn::Conv2d& a, const nn::Conv2d& b, const ad::Var& x) {
    ad::Var h = ad::leaky_relu(a(x));
    h = b(h);
    return ad::leaky_relu(ad::add(h, x));
}

} // namespace

HidingNetwork::HidingNetwork(const EmbedderConfig& cfg, int64_t feature_dim)
    : cfg_(cfg), feature_dim_(feature_dim) {
    params_ = std::make_shared<nn::ParamSet>();
    core::Rng rng(cfg.seed);
    const int64_t c = cfg.channels;
    in_conv_ = nn::Conv2d(*params_, "in", 3 + feature_dim, c, 3, 1, 1, rng);
    e1a_ = nn::Conv2d(*params_, "e1a", c, c, 3, 1, 1, rng);
    e1b_ = nn::Conv2d(*params_, "e1b", c, c, 3, 1, 1, rng);
    down1_ = nn::Conv2d(*params_, "d1", c, 2 * c, 3, 2, 1, rng);
    e2a_ = nn::Conv2d(*params_, "e2a", 2 * c, 2 * c, 3, 1, 1, rng);
    e2b_ = nn::Conv2d(*params_, "e2b", 2 * c, 2 * c, 3, 1, 1, rng);
    down2_ = nn::Conv2d(*params_, "d2", 2 * c, 4 * c, 3, 2, 1, rng);
    ba_ = nn::Conv2d(*params_, "ba", 4 * c, 4 * c, 3, 1, 1, rng);
    bb_ = nn::Conv2d(*params_, "bb", 4 * c, 4 * c, 3, 1, 1, rng);
    up2_ = nn::Conv2d(*params_, "u2", 4 * c, 2 * c, 3, 1, 1, rng);
    fuse2_ = nn::Conv2d(*params_, "f2", 4 * c, 2 * c, 3, 1, 1, rng);
    up1_ = nn::Conv2d(*params_, "u1", 2 * c, c, 3, 1, 1, rng);
    fuse1_ = nn::Conv2d(*params_, "f1", 2 * c, c, 3, 1, 1, rng);
    // small init keeps the initial output near the cover
    out_conv_ = nn::Conv2d(*params_, "out", c, 3, 3, 1, 1, rng, 0.05);
}

ad::Var HidingNetwork::run_graph(const ad::Var& covers, const Tensor& features) const {
    const Tensor& cv = covers.val();
    if (cv.dim(1) != 3) throw std::invalid_argument("HidingNetwork: expected [n,3,H,W]");
    if (cv.dim(2) % 4 || cv.dim(3) % 4)
        throw std::invalid_argument("HidingNetwork: H and W must be divisible by 4");
    if (features.dim(0) != cv.dim(0) || features.dim(1) != feature_dim_)
        throw std::invalid_argument("HidingNetwork: feature shape mismatch");

    ad::Var fmap = ad::constant(broadcast_features(features, cv.dim(2), cv.dim(3)));
    ad::Var x = ad::concat_channels(ad::add_scalar(covers, -0.5), fmap);
    ad::Var h = ad::leaky_relu(in_conv_(x));
    ad::Var s1 = resblock(e1a_, e1b_, h);
    ad::Var h2 = ad::leaky_relu(down1_(s1));
    ad::Var s2 = resblock(e2a_, e2b_, h2);
    ad::Var h3 = ad::leaky_relu(down2_(s2));
    ad::Var b = resblock(ba_, bb_, h3);
    ad::Var u2 = ad::leaky_relu(up2_(ad::upsample_nearest2(b)));
    u2 = ad::leaky_relu(fuse2_(ad::concat_channels(u2, s2)));
    ad::Var u1 = ad::leaky_relu(up1_(ad::upsample_nearest2(u2)));
    u1 = ad::leaky_relu(fuse1_(ad::concat_channels(u1, s1)));
    ad::Var delta = out_conv_(u1);
    return ad::sigmoid(ad::add(delta, ad::constant(cover_logits(cv))));
}

Tensor HidingNetwork::run(const Tensor& covers, const Tensor& features) const {
    return run_graph(ad::constant(covers), features).val();
}

core::Checkpoint HidingNetwork::to_checkpoint() const {
    core::Checkpoint ck;
    ck.kind = "hiding_network";
    json hist = json::array();
    for (const auto& e : history_)
        hist.push_back({{"total", e.train_mean.total}, {"val_total", e.val_total},
                        {"val_sim_trigger", e.val_sim_trigger},
                        {"val_sim_cover", e.val_sim_cover},
                        {"val_quality", e.val_quality}, {"lr", e.lr}});
    json meta{{"channels", cfg_.channels},
              {"far_margin", cfg_.far_margin},
              {"rec_form", cfg_.rec_form == RecLossForm::squared ? "squared" : "absolute"},
              {"learning_rate", cfg_.learning_rate},
              {"epochs", cfg_.epochs},
              {"batch", cfg_.batch},
              {"val_fraction", cfg_.val_fraction},
              {"plateau_factor", cfg_.plateau_factor},
              {"plateau_patience", cfg_.plateau_patience},
              {"plateau_min_delta", cfg_.plateau_min_delta},
              {"quality_ceiling", cfg_.quality_ceiling},
              {"seed", cfg_.seed},
              {"perceptual_seed", cfg_.perceptual_seed},
              {"feature_dim", feature_dim_},
              {"trained", trained_},
              {"history", hist}};
    ck.meta_json = meta.dump();
    for (const auto& [name, t] : params_->state()) ck.tensors[name] = t;
    return ck;
}

HidingNetwork HidingNetwork::from_checkpoint(const core::Checkpoint& ckpt) {
    if (ckpt.kind != "hiding_network")
        throw std::runtime_error("from_checkpoint: wrong kind " + ckpt.kind);
    json meta = json::parse(ckpt.meta_json);
    EmbedderConfig cfg;
    cfg.channels = meta.at("channels");
    cfg.far_margin = meta.at("far_margin");
    cfg.rec_form = meta.at("rec_form") == "squared" ? RecLossForm::squared
                                                    : RecLossForm::absolute;
    cfg.learning_rate = meta.at("learning_rate");
    cfg.epochs = meta.at("epochs");
    cfg.batch = meta.at("batch");
    cfg.val_fraction = meta.at("val_fraction");
    cfg.plateau_factor = meta.at("plateau_factor");
    cfg.plateau_patience = meta.at("plateau_patience");
    cfg.plateau_min_delta = meta.at("plateau_min_delta");
    cfg.quality_ceiling = meta.at("quality_ceiling");
    cfg.seed = meta.at("seed");
    cfg.perceptual_seed = meta.at("perceptual_seed");
    HidingNetwork hn(cfg, meta.at("feature_dim"));
    hn.params_->load_state(
        std::map<std::string, Tensor>(ckpt.tensors.begin(), ckpt.tensors.end()));
    hn.trained_ = meta.value("trained", false);
    hn.params_->set_trainable(false);
    hn.perceptual_ = std::make_shared<features::PerceptualNet>(cfg.perceptual_seed);
    for (const auto& e : meta.value("history", json::array())) {
        EpochStats st;
        st.train_mean.total = e.value("total", 0.0);
        st.val_total = e.value("val_total", 0.0);
        st.val_sim_trigger = e.value("val_sim_trigger", 0.0);
        st.val_sim_cover = e.value("val_sim_cover", 0.0);
        st.val_quality = e.value("val_quality", 0.0);
        st.lr = e.value("lr", 0.0);
        hn.history_.push_back(st);
    }
    return hn;
}

namespace {

void check_finite(const Tensor& t, const char* what) {
    if (!t.all_finite())
        throw std::invalid_argument(std::string("embedder_loss: non-finite ") + what);
}

double rec_value(const Tensor& poison, const Tensor& cover, RecLossForm form) {
    double acc = 0;
    for (int64_t i = 0; i < poison.numel(); ++i) {
        const double d = poison[i] - cover[i];
        acc += form == RecLossForm::squared ? d * d : std::abs(d);
    }
    return acc / static_cast<double>(poison.numel());
}

} // namespace

LossBreakdown embedder_loss(const Tensor& poison, const Tensor& cover,
                            const Tensor& f_poison, const Tensor& f_trigger,
                            const Tensor& f_cover, const EmbedderLossWeights& weights,
                            const features::PerceptualNet& perceptual, double far_margin,
                            RecLossForm rec_form) {
    if (!poison.same_shape(cover))
        throw std::invalid_argument("embedder_loss: poison/cover shape mismatch");
    check_finite(poison, "poison");
    check_finite(cover, "cover");
    check_finite(f_poison, "f_poison");
    check_finite(f_trigger, "f_trigger");
    check_finite(f_cover, "f_cover");

    LossBreakdown lb;
    lb.rec = rec_value(poison, cover, rec_form);
    lb.perc = perceptual.feature_distance(poison, cover);
    lb.lpips = perceptual.perceptual_distance(poison, cover);
    lb.near = 1.0 - features::cosine(f_poison, f_trigger);
    lb.far = std::max(0.0, features::cosine(f_poison, f_cover) - far_margin);
    lb.total = weights.lambda_rec * lb.rec + weights.lambda_perc * lb.perc +
               weights.lambda_lpips * lb.lpips + weights.lambda_near * lb.near +
               weights.lambda_far * lb.far;
    return lb;
}

LossGraph embedder_loss_graph(const ad::Var& poison, const Tensor& cover,
                              const Tensor& f_trigger, const Tensor& f_cover,
                              const features::FeatureExtractor& extractor,
                              const features::PerceptualNet& perceptual,
                              const EmbedderLossWeights& weights, double far_margin,
                              RecLossForm rec_form) {
    const Tensor& pv = poison.val();
    const int64_t n = pv.dim(0);
    Tensor cover_b = cover.rank() == 3
                         ? cover.reshaped({1, 3, cover.dim(1), cover.dim(2)})
                         : cover;
    Tensor ft = f_trigger.rank() == 1 ? f_trigger.reshaped({1, f_trigger.numel()}) : f_trigger;
    Tensor fc = f_cover.rank() == 1 ? f_cover.reshaped({1, f_cover.numel()}) : f_cover;
    if (cover_b.dim(0) != n || ft.dim(0) != n || fc.dim(0) != n)
        throw std::invalid_argument("embedder_loss_graph: batch mismatch");

    LossGraph g;
    ad::Var diff = ad::sub(poison, ad::constant(cover_b));
    g.rec = rec_form == RecLossForm::squared ? ad::mean_all(ad::square(diff))
                                             : ad::mean_all(ad::abs_(diff));
    auto ref = perceptual.pyramid(cover_b);
    g.perc = perceptual.feature_distance_graph(poison, ref);
    g.lpips = perceptual.perceptual_distance_graph(poison, ref);
    ad::Var f_p = extractor.embed_graph(poison);
    g.near = ad::mean_all(ad::rsub_scalar(1.0, ad::rowwise_dot(f_p, ad::constant(ft))));
    g.far = ad::mean_all(
        ad::relu(ad::add_scalar(ad::rowwise_dot(f_p, ad::constant(fc)), -far_margin)));
    g.total = ad::add(
        ad::add(ad::add(ad::mul_scalar(g.rec, weights.lambda_rec),
                        ad::mul_scalar(g.perc, weights.lambda_perc)),
                ad::add(ad::mul_scalar(g.lpips, weights.lambda_lpips),
                        ad::mul_scalar(g.near, weights.lambda_near))),
        ad::mul_scalar(g.far, weights.lambda_far));
    return g;
}

HidingNetwork train_hiding_network(const std::vector<FaceSample>& cover_pool,
                                   const std::vector<FaceSample>& embed_pool,
                                   const features::FeatureExtractor& extractor,
                                   const EmbedderLossWeights& weights,
                                   const EmbedderConfig& config) {
    if (!extractor.trained())
        throw std::invalid_argument("train_hiding_network: extractor must be trained");
    if (cover_pool.empty() || embed_pool.empty())
        throw std::invalid_argument("train_hiding_network: empty pools");
    for (const auto& c : cover_pool)
        if (c.label != Label::live)
            throw std::invalid_argument("train_hiding_network: cover pool must be live images");

    const int64_t d = extractor.config().embed_dim;
    HidingNetwork hn(config, d);
    hn.perceptual_ = std::make_shared<features::PerceptualNet>(config.perceptual_seed);
    const features::PerceptualNet& pn = *hn.perceptual_;

    // Pair each cover with a seeded embed image of a different subject; the
    // extractor is frozen, so all pair features are computed once.
    core::Rng rng(config.seed ^ 0x9a1e5ull);
    struct Pair {
        const Tensor* cover;
        Tensor f_embed, f_cover;
    };
    std::vector<Pair> pairs;
    for (const auto& cover : cover_pool) {
        const FaceSample* pick = nullptr;
        for (int tries = 0; tries < 64 && !pick; ++tries) {
            const auto& cand = embed_pool[static_cast<size_t>(
                rng.uniform_int(static_cast<int64_t>(embed_pool.size())))];
            if (cand.subject_id != cover.subject_id) pick = &cand;
        }
        if (!pick)
            throw std::invalid_argument(
                "train_hiding_network: embed pool has no subject different from cover " +
                cover.sample_id);
        Pair p;
        p.cover = &cover.image;
        p.f_embed = extractor.extract(pick->image);
        p.f_cover = extractor.extract(cover.image);
        pairs.push_back(std::move(p));
    }
    rng.shuffle(pairs);
    const size_t n_val = std::max<size_t>(1, static_cast<size_t>(std::llround(
                                                 config.val_fraction *
                                                 static_cast<double>(pairs.size()))));
    if (pairs.size() <= n_val)
        throw std::invalid_argument("train_hiding_network: too few pairs for a validation split");
    std::vector<Pair> val(pairs.end() - static_cast<std::ptrdiff_t>(n_val), pairs.end());
    pairs.resize(pairs.size() - n_val);

    const int64_t h = pairs[0].cover->dim(1), w = pairs[0].cover->dim(2);
    auto make_batch = [&](const std::vector<Pair>& src, size_t start, size_t end,
                          Tensor& covers, Tensor& f_t, Tensor& f_c) {
        const int64_t bn = static_cast<int64_t>(end - start);
        covers = Tensor({bn, 3, h, w});
        f_t = Tensor({bn, d});
        f_c = Tensor({bn, d});
        for (size_t i = start; i < end; ++i) {
            const int64_t bi = static_cast<int64_t>(i - start);
            std::copy_n(src[i].cover->data(), 3 * h * w, covers.data() + bi * 3 * h * w);
            std::copy_n(src[i].f_embed.data(), d, f_t.data() + bi * d);
            std::copy_n(src[i].f_cover.data(), d, f_c.data() + bi * d);
        }
    };

    nn::Adam opt(config.learning_rate);
    nn::PlateauSchedule sched(config.plateau_factor,
                              static_cast<int>(config.plateau_patience),
                              config.plateau_min_delta);
    std::vector<size_t> order(pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<Pair> batch_src(pairs.size());

    int consecutive_nonfinite = 0;
    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t i = 0; i < order.size(); ++i) batch_src[i] = pairs[order[i]];

        LossBreakdown epoch_mean;
        int64_t n_batches = 0;
        for (size_t start = 0; start < batch_src.size();
             start += static_cast<size_t>(config.batch)) {
            const size_t end =
                std::min(batch_src.size(), start + static_cast<size_t>(config.batch));
            Tensor covers, f_t, f_c;
            make_batch(batch_src, start, end, covers, f_t, f_c);
            ad::Var cov = ad::constant(covers);
            ad::Var poison = hn.run_graph(cov, f_t);
            LossGraph lg = embedder_loss_graph(poison, covers, f_t, f_c, extractor, pn,
                                               weights, config.far_margin, config.rec_form);
            hn.params_->zero_grads();
            ad::backward(lg.total);
            opt.step(*hn.params_);
            epoch_mean.rec += lg.rec.val()[0];
            epoch_mean.perc += lg.perc.val()[0];
            epoch_mean.lpips += lg.lpips.val()[0];
            epoch_mean.near += lg.near.val()[0];
            epoch_mean.far += lg.far.val()[0];
            epoch_mean.total += lg.total.val()[0];
            ++n_batches;
        }
        epoch_mean.rec /= n_batches;
        epoch_mean.perc /= n_batches;
        epoch_mean.lpips /= n_batches;
        epoch_mean.near /= n_batches;
        epoch_mean.far /= n_batches;
        epoch_mean.total /= n_batches;

        // validation pass (no updates)
        double val_total = 0, val_sim_t = 0, val_sim_c = 0, val_quality = 0;
        {
            Tensor covers, f_t, f_c;
            make_batch(val, 0, val.size(), covers, f_t, f_c);
            Tensor poisons = hn.run(covers, f_t);
            ad::Var pvar = ad::constant(poisons);
            LossGraph lg = embedder_loss_graph(pvar, covers, f_t, f_c, extractor, pn,
                                               weights, config.far_margin, config.rec_form);
            val_total = lg.total.val()[0];
            Tensor f_p = extractor.extract_batch(poisons);
            const int64_t vn = f_p.dim(0);
            for (int64_t i = 0; i < vn; ++i) {
                double st = 0, sc = 0;
                for (int64_t j = 0; j < d; ++j) {
                    st += f_p.at(i, j) * f_t.at(i, j);
                    sc += f_p.at(i, j) * f_c.at(i, j);
                }
                val_sim_t += st;
                val_sim_c += sc;
                Tensor pimg({3, h, w}), cimg({3, h, w});
                std::copy_n(poisons.data() + i * 3 * h * w, 3 * h * w, pimg.data());
                std::copy_n(covers.data() + i * 3 * h * w, 3 * h * w, cimg.data());
                val_quality += pn.perceptual_distance(pimg, cimg);
            }
            val_sim_t /= static_cast<double>(vn);
            val_sim_c /= static_cast<double>(vn);
            val_quality /= static_cast<double>(vn);
        }

        if (!std::isfinite(epoch_mean.total) || !std::isfinite(val_total)) {
            if (++consecutive_nonfinite >= 2)
                throw std::runtime_error(
                    "train_hiding_network: total loss non-finite for two consecutive epochs "
                    "(epoch " + std::to_string(epoch) + ", train total " +
                    std::to_string(epoch_mean.total) + ", val total " +
                    std::to_string(val_total) + ")");
        } else {
            consecutive_nonfinite = 0;
        }

        opt.set_lr(config.learning_rate * sched.observe(val_total));

        EpochStats st;
        st.train_mean = epoch_mean;
        st.val_total = val_total;
        st.val_sim_trigger = val_sim_t;
        st.val_sim_cover = val_sim_c;
        st.val_quality = val_quality;
        st.lr = opt.lr();
        hn.history_.push_back(st);
    }

    hn.trained_ = true;
    hn.params_->set_trainable(false);
    return hn;
}

PoisonedImage embed_with_features(const HidingNetwork& hn, const FaceSample& cover,
                                  const Tensor& f_trigger, const std::string& trigger_id,
                                  const features::FeatureExtractor& extractor) {
    if (cover.label != Label::live)
        throw std::invalid_argument("embed: cover must be a live sample (got spoof " +
                                    cover.sample_id + ")");
    if (!hn.trained()) throw std::invalid_argument("embed: hiding network is not trained");
    const int64_t h = cover.image.dim(1), w = cover.image.dim(2);
    const int64_t d = hn.feature_dim();
    Tensor covers = cover.image.reshaped({1, 3, h, w});
    Tensor f_t = f_trigger.reshaped({1, d});
    Tensor poison_b = hn.run(covers, f_t);
    Tensor poison = poison_b.reshaped({3, h, w});

    PoisonedImage p;
    p.cover_id = cover.sample_id;
    p.trigger_id = trigger_id;
    p.method = "proposed";
    Tensor f_p = extractor.extract(poison);
    p.feature_sim_trigger = features::cosine(f_p, f_trigger);
    p.feature_sim_cover = features::cosine(f_p, extractor.extract(cover.image));
    p.quality = hn.perceptual().perceptual_distance(poison, cover.image);
    p.image = std::move(poison);
    return p;
}

PoisonedImage embed(const HidingNetwork& hn, const FaceSample& cover,
                    const FaceSample& trigger, const features::FeatureExtractor& extractor) {
    if (trigger.label != Label::spoof)
        throw std::invalid_argument("embed: trigger must be a spoof sample (got live " +
                                    trigger.sample_id + ")");
    return embed_with_features(hn, cover, extractor.extract(trigger.image),
                               trigger.sample_id, extractor);
}

} // namespace fas::embedder
