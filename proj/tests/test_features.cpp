#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "fas/features.hpp"

using namespace fas;
using namespace fas::features;
using core::Rng;
using core::Tensor;
using synthface::FaceSample;

namespace {

// 10 subjects x 8 live images, the verification-margin setup
std::vector<FaceSample> identity_pool(int64_t subjects, int64_t sessions, int64_t sensors,
                                      uint64_t seed) {
    synthface::DatasetConfig cfg;
    cfg.subjects = subjects;
    cfg.sessions = sessions;
    cfg.sensors = sensors;
    cfg.image_size = 32;
    cfg.seed = seed;
    synthface::Dataset ds = synthface::build_dataset(cfg);
    std::vector<FaceSample> lives;
    for (auto& s : ds.samples)
        if (s.label == synthface::Label::live) lives.push_back(std::move(s));
    return lives;
}

const FeatureExtractor& trained_extractor() {
    static const FeatureExtractor fe = [] {
        ExtractorConfig cfg;
        cfg.seed = 7;
        return train_identity_extractor(identity_pool(10, 4, 2, 77), cfg);
    }();
    return fe;
}

Tensor random_image(int64_t n, Rng& rng) {
    Tensor t({3, n, n});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(0.05, 0.95);
    return t;
}

} // namespace

TEST_CASE("trained extractor separates identities with margin above 0.1") {
    const FeatureExtractor& fe = trained_extractor();
    CHECK(fe.trained());
    CHECK(fe.validation_margin() > 0.1);
}

TEST_CASE("embeddings are unit norm and deterministic") {
    const FeatureExtractor& fe = trained_extractor();
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor img = random_image(32, rng);
        Tensor f1 = fe.extract(img);
        Tensor f2 = fe.extract(img);
        double norm = 0;
        for (int64_t i = 0; i < f1.numel(); ++i) norm += f1[i] * f1[i];
        CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
        for (int64_t i = 0; i < f1.numel(); ++i) CHECK(f1[i] == f2[i]);
        CHECK(cosine(f1, f1) == doctest::Approx(1.0));
    }
    CHECK_THROWS_AS(fe.extract(Tensor({1, 8, 8})), std::invalid_argument);
}

TEST_CASE("retraining with the same seed reproduces the validation margin") {
    ExtractorConfig cfg;
    cfg.seed = 7;
    cfg.epochs = 4;
    auto pool = identity_pool(6, 2, 2, 31);
    FeatureExtractor a = train_identity_extractor(pool, cfg);
    FeatureExtractor b = train_identity_extractor(pool, cfg);
    CHECK(a.validation_margin() == b.validation_margin());
}

TEST_CASE("training rejects subjects with a single image") {
    auto pool = identity_pool(6, 2, 2, 31);
    // strip subject 0 down to one image
    std::vector<FaceSample> broken;
    bool kept_one = false;
    for (auto& s : pool) {
        if (s.subject_id == pool[0].subject_id) {
            if (kept_one) continue;
            kept_one = true;
        }
        broken.push_back(s);
    }
    CHECK_THROWS_AS(train_identity_extractor(broken, ExtractorConfig{}),
                    std::invalid_argument);
}

TEST_CASE("extractor gradient matches finite differences on an 8x8 image") {
    const FeatureExtractor& fe = trained_extractor();
    Rng rng(9);
    Tensor img = random_image(8, rng);
    Tensor target = fe.extract(random_image(8, rng));
    Tensor target_row = target.reshaped({1, target.numel()});

    auto objective = [&](const Tensor& x) {
        namespace ad = core::ad;
        ad::Var xv = ad::Var::leaf(x.reshaped({1, 3, 8, 8}));
        ad::Var f = fe.embed_graph(xv);
        ad::Var cos = ad::mean_all(ad::rowwise_dot(f, ad::constant(target_row)));
        return std::pair{cos, xv};
    };

    auto [cos_var, leaf] = objective(img);
    core::ad::backward(cos_var);
    Tensor grad = leaf.grad();

    const double h = 1e-5;
    int64_t checked = 0;
    for (int64_t i = 0; i < img.numel(); i += 11) {
        Tensor xp = img, xm = img;
        xp[i] += h;
        xm[i] -= h;
        const double fp = objective(xp).first.val()[0];
        const double fm = objective(xm).first.val()[0];
        const double fd = (fp - fm) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-10});
        CHECK(std::abs(grad[i] - fd) / denom < 1e-3);
        ++checked;
    }
    CHECK(checked > 10);
}

TEST_CASE("checkpoint round-trip preserves the extractor exactly") {
    namespace fs = std::filesystem;
    const FeatureExtractor& fe = trained_extractor();
    const fs::path path = fs::temp_directory_path() / "fas_extractor_test.ckpt";
    core::save_checkpoint(path.string(), fe.to_checkpoint());
    FeatureExtractor loaded = FeatureExtractor::from_checkpoint(
        core::load_checkpoint(path.string()));
    CHECK(loaded.trained());
    CHECK(loaded.validation_margin() == fe.validation_margin());
    Rng rng(13);
    Tensor img = random_image(32, rng);
    Tensor f1 = fe.extract(img);
    Tensor f2 = loaded.extract(img);
    for (int64_t i = 0; i < f1.numel(); ++i) CHECK(f1[i] == f2[i]);

    // corruption is detected
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(200);
        char c;
        f.seekg(200);
        f.get(c);
        f.seekp(200);
        f.put(static_cast<char>(c ^ 0x40));
    }
    CHECK_THROWS_WITH_AS(core::load_checkpoint(path.string()),
                         doctest::Contains("fingerprint mismatch"), std::runtime_error);
    fs::remove(path);
}

TEST_CASE("perceptual distance is a premetric") {
    PerceptualNet pn(0x9e77);
    Rng rng(17);
    Tensor x = random_image(16, rng);
    Tensor y = random_image(16, rng);

    CHECK(pn.perceptual_distance(x, x) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(pn.feature_distance(x, x) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(pn.perceptual_distance(x, y) == doctest::Approx(pn.perceptual_distance(y, x)));
    CHECK(pn.perceptual_distance(x, y) > 0.0);
    CHECK_THROWS_AS(pn.perceptual_distance(x, random_image(8, rng)), std::invalid_argument);

    // deterministic given the seed
    PerceptualNet pn2(0x9e77);
    CHECK(pn.perceptual_distance(x, y) == pn2.perceptual_distance(x, y));
    PerceptualNet pn3(123);
    CHECK(pn.perceptual_distance(x, y) != pn3.perceptual_distance(x, y));
}

TEST_CASE("perceptual distance grows with noise amplitude") {
    PerceptualNet pn;
    int wins = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(100 + seed);
        Tensor x = random_image(16, rng);
        Tensor small = x, large = x;
        for (int64_t i = 0; i < x.numel(); ++i) {
            const double u = rng.uniform(-1.0, 1.0);
            small[i] = std::clamp(small[i] + 0.01 * u, 0.0, 1.0);
            large[i] = std::clamp(large[i] + 0.10 * u, 0.0, 1.0);
        }
        if (pn.perceptual_distance(x, large) > pn.perceptual_distance(x, small)) ++wins;
    }
    CHECK(wins == 10);
}
