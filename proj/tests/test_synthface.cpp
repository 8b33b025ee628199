#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <set>

#include "fas/core/rng.hpp"
#include "fas/synthface.hpp"

using namespace fas;
using namespace fas::synthface;

namespace {

bool images_equal(const core::Tensor& a, const core::Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

double mean_abs_diff(const core::Tensor& a, const core::Tensor& b) {
    double acc = 0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.numel());
}

// Brute-force 2-D DFT magnitude peak (excluding DC), on the green channel of
// the spoof-minus-live difference.
std::pair<int64_t, int64_t> dominant_bin(const core::Tensor& diff, int64_t n,
                                         int64_t min_radius) {
    double best = -1;
    std::pair<int64_t, int64_t> arg{0, 0};
    for (int64_t ky = 0; ky < n / 2; ++ky)
        for (int64_t kx = 0; kx < n / 2; ++kx) {
            if (ky * ky + kx * kx <= min_radius * min_radius) continue;
            double re = 0, im = 0;
            for (int64_t y = 0; y < n; ++y)
                for (int64_t x = 0; x < n; ++x) {
                    const double ph = -2.0 * M_PI *
                                      (static_cast<double>(ky * y) / n +
                                       static_cast<double>(kx * x) / n);
                    const double v = diff[(1 * n + y) * n + x];
                    re += v * std::cos(ph);
                    im += v * std::sin(ph);
                }
            const double mag = re * re + im * im;
            if (mag > best) {
                best = mag;
                arg = {ky, kx};
            }
        }
    return arg;
}

// logistic regression on blockwise gradient-energy features (the overlay
// signature), plain gradient descent
double linear_probe_accuracy(const std::vector<const FaceSample*>& train,
                             const std::vector<const FaceSample*>& test) {
    const int64_t n = train[0]->image.dim(1);
    const int64_t block = n / 4;
    auto featurize = [&](const FaceSample& s) {
        std::vector<double> f;
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t by = 0; by < 4; ++by)
                for (int64_t bx = 0; bx < 4; ++bx) {
                    double e = 0;
                    int64_t cnt = 0;
                    for (int64_t y = by * block; y < (by + 1) * block - 1; ++y)
                        for (int64_t x = bx * block; x < (bx + 1) * block - 1; ++x) {
                            e += std::abs(s.image[(c * n + y) * n + x + 1] -
                                          s.image[(c * n + y) * n + x]);
                            e += std::abs(s.image[(c * n + y + 1) * n + x] -
                                          s.image[(c * n + y) * n + x]);
                            cnt += 2;
                        }
                    f.push_back(e / static_cast<double>(cnt) * 8.0);
                }
        f.push_back(1.0);
        return f;
    };
    const size_t d = featurize(*train[0]).size();
    std::vector<double> w(d, 0.0);
    for (int iter = 0; iter < 1500; ++iter) {
        std::vector<double> grad(d, 0.0);
        for (const auto* s : train) {
            const auto f = featurize(*s);
            double z = 0;
            for (size_t i = 0; i < d; ++i) z += w[i] * f[i];
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double y = s->label == Label::live ? 1.0 : 0.0;
            for (size_t i = 0; i < d; ++i) grad[i] += (p - y) * f[i];
        }
        for (size_t i = 0; i < d; ++i)
            w[i] -= 2.0 / static_cast<double>(train.size()) * grad[i];
    }
    int64_t correct = 0;
    for (const auto* s : test) {
        const auto f = featurize(*s);
        double z = 0;
        for (size_t i = 0; i < d; ++i) z += w[i] * f[i];
        const bool live = z >= 0;
        if (live == (s->label == Label::live)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

} // namespace

TEST_CASE("make_identity is deterministic and injective over seeds") {
    const IdentityParams a = make_identity(0);
    const IdentityParams b = make_identity(0);
    CHECK(a.subject_id == b.subject_id);
    CHECK(a.geometry.as_vector() == b.geometry.as_vector());
    CHECK(a.texture_seed == b.texture_seed);
    CHECK(a.skin_tone[0] == b.skin_tone[0]);

    std::set<int64_t> ids;
    for (uint64_t s = 0; s < 10; ++s) ids.insert(make_identity(s).subject_id);
    CHECK(ids.size() == 10);
}

TEST_CASE("identity geometry stays within the declared bounds") {
    const GeometryBounds& b = geometry_bounds();
    for (uint64_t seed : {7ull, 0ull, 123456789ull, 0xffffffffffull}) {
        const auto geo = make_identity(seed).geometry.as_vector();
        REQUIRE(geo.size() == 9);
        for (size_t i = 0; i < geo.size(); ++i) {
            CHECK(geo[i] >= b.lo[i]);
            CHECK(geo[i] <= b.hi[i]);
        }
    }
}

TEST_CASE("render_live determinism and session variation") {
    const IdentityParams id = make_identity(3);
    FaceSample a = render_live(id, 1, 0, 32);
    FaceSample b = render_live(id, 1, 0, 32);
    CHECK(images_equal(a.image, b.image));
    CHECK(a.label == Label::live);
    CHECK(a.instrument == Instrument::none);
    CHECK(a.image.min() >= 0.0);
    CHECK(a.image.max() <= 1.0);

    FaceSample c = render_live(id, 2, 0, 32);
    CHECK(mean_abs_diff(a.image, c.image) > 0.0);
}

TEST_CASE("landmarks sit on rendered feature centers") {
    // oracle: darkness-weighted centroid of pixels near each expected eye
    for (uint64_t seed : {1ull, 5ull, 9ull}) {
        const IdentityParams id = make_identity(seed);
        const int64_t n = 64;
        FaceSample s = render_live(id, 0, 0, n);
        LandmarkSet lm = landmarks(id, n);
        for (const double* eye : {lm.left_eye, lm.right_eye}) {
            const int64_t ex = static_cast<int64_t>(eye[0]);
            const int64_t ey = static_cast<int64_t>(eye[1]);
            double wsum = 0, cx = 0, cy = 0;
            for (int64_t y = std::max<int64_t>(0, ey - 5); y < std::min(n, ey + 6); ++y)
                for (int64_t x = std::max<int64_t>(0, ex - 5); x < std::min(n, ex + 6); ++x) {
                    const double lum = (s.image[(0 * n + y) * n + x] +
                                        s.image[(1 * n + y) * n + x] +
                                        s.image[(2 * n + y) * n + x]) /
                                       3.0;
                    const double darkness = std::max(0.0, 0.5 - lum);
                    wsum += darkness;
                    cx += darkness * (static_cast<double>(x) + 0.5);
                    cy += darkness * (static_cast<double>(y) + 0.5);
                }
            REQUIRE(wsum > 0.0);
            CHECK(std::abs(cx / wsum - eye[0]) <= 2.0);
            CHECK(std::abs(cy / wsum - eye[1]) <= 2.0);
        }
        // mouth: dark-red region around the mouth row
        const double mx = (lm.mouth_left[0] + lm.mouth_right[0]) / 2;
        const double my = lm.mouth_left[1];
        double wsum = 0, cy2 = 0;
        for (int64_t y = static_cast<int64_t>(my) - 4; y <= static_cast<int64_t>(my) + 4; ++y)
            for (int64_t x = static_cast<int64_t>(mx) - 4; x <= static_cast<int64_t>(mx) + 4;
                 ++x) {
                const double red = s.image[(0 * n + y) * n + x];
                const double green = s.image[(1 * n + y) * n + x];
                const double lipness = std::max(0.0, red - green - 0.1);
                wsum += lipness;
                cy2 += lipness * (static_cast<double>(y) + 0.5);
            }
        REQUIRE(wsum > 0.0);
        CHECK(std::abs(cy2 / wsum - my) <= 2.0);
    }
}

TEST_CASE("render_spoof adds a face-concentrated instrument signature") {
    const IdentityParams id = make_identity(11);
    const int64_t n = 32;
    FaceSample live = render_live(id, 0, 1, n);
    FaceSample spoof = render_spoof(id, Instrument::print_a, 0, 1, n);
    CHECK(spoof.label == Label::spoof);

    core::Tensor diff({3, n, n});
    for (int64_t i = 0; i < diff.numel(); ++i)
        diff[i] = spoof.image[i] - live.image[i];

    // difference concentrated in the face region
    const Geometry& g = id.geometry;
    double in_face = 0, out_face = 0;
    int64_t in_n = 0, out_n = 0;
    for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x) {
            const double u = (x + 0.5) / n, v = (y + 0.5) / n;
            const double du = (u - 0.5) / g.face_rx, dv = (v - 0.52) / g.face_ry;
            const double rr = du * du + dv * dv;
            const double mag = std::abs(diff[(1 * n + y) * n + x]);
            if (rr < 0.9) {
                in_face += mag;
                ++in_n;
            } else if (rr > 1.5) {
                out_face += mag;
                ++out_n;
            }
        }
    CHECK(in_face / in_n > 10.0 * (out_face / std::max<int64_t>(1, out_n) + 1e-9));

    // determinism
    FaceSample spoof2 = render_spoof(id, Instrument::print_a, 0, 1, n);
    CHECK(images_equal(spoof.image, spoof2.image));

    CHECK_THROWS_AS(render_spoof(id, Instrument::none, 0, 0, n), std::invalid_argument);
}

TEST_CASE("print and display instruments have different dominant frequencies") {
    const IdentityParams id = make_identity(4);
    const int64_t n = 32;
    FaceSample live = render_live(id, 0, 0, n);
    FaceSample pr = render_spoof(id, Instrument::print_a, 0, 0, n);
    FaceSample di = render_spoof(id, Instrument::display_a, 0, 0, n);

    core::Tensor dp({3, n, n}), dd({3, n, n});
    for (int64_t i = 0; i < dp.numel(); ++i) {
        dp[i] = pr.image[i] - live.image[i];
        dd[i] = di.image[i] - live.image[i];
    }
    const auto bin_print = dominant_bin(dp, n, 0);
    const auto bin_display = dominant_bin(dd, n, 0);
    CHECK(bin_print != bin_display);
    // above the low-frequency band (shading, specular) the textures peak at
    // clearly different radii: the display grid sits near Nyquist
    const auto tex_print = dominant_bin(dp, n, 4);
    const auto tex_display = dominant_bin(dd, n, 4);
    CHECK(tex_print != tex_display);
    const int64_t r2_print = tex_print.first * tex_print.first +
                             tex_print.second * tex_print.second;
    const int64_t r2_display = tex_display.first * tex_display.first +
                               tex_display.second * tex_display.second;
    CHECK(r2_display > r2_print);
}

TEST_CASE("build_dataset structure, counts, and split rules") {
    DatasetConfig cfg;
    cfg.subjects = 20;
    cfg.sessions = 2;
    cfg.sensors = 2;
    cfg.image_size = 32;
    cfg.seed = 5;
    Dataset ds = build_dataset(cfg);

    CHECK(ds.samples.size() == 20u * 2 * 2 * 5);
    REQUIRE(ds.splits.size() == 3);

    for (const auto& sp : ds.splits) {
        std::set<std::string> seen;
        for (const auto& list : {sp.train, sp.dev, sp.test})
            for (const auto& id : list) {
                CHECK(seen.insert(id).second); // pairwise disjoint
                (void)id;
            }
        // subject-disjoint
        std::set<int64_t> tr, de, te;
        for (const auto& id : sp.train) tr.insert(ds.by_id(id).subject_id);
        for (const auto& id : sp.dev) de.insert(ds.by_id(id).subject_id);
        for (const auto& id : sp.test) te.insert(ds.by_id(id).subject_id);
        for (int64_t s : tr) {
            CHECK(!de.count(s));
            CHECK(!te.count(s));
        }
        for (int64_t s : de) CHECK(!te.count(s));
    }

    // P1 partitions the whole corpus
    const auto& p1 = ds.split("P1");
    CHECK(p1.train.size() + p1.dev.size() + p1.test.size() == ds.samples.size());

    // P3: no display instruments in train, no print in test spoofs
    const auto& p3 = ds.split("P3");
    for (const auto& id : p3.train) CHECK(!is_display(ds.by_id(id).instrument));
    for (const auto& id : p3.test) CHECK(!is_print(ds.by_id(id).instrument));
    bool p3_train_has_spoof = false;
    for (const auto& id : p3.train)
        if (ds.by_id(id).label == Label::spoof) p3_train_has_spoof = true;
    CHECK(p3_train_has_spoof);

    CHECK_THROWS_AS(build_dataset(DatasetConfig{.subjects = 3}), std::invalid_argument);
}

TEST_CASE("datasets are byte-identical across rebuilds and survive save/load") {
    DatasetConfig cfg;
    cfg.subjects = 5;
    cfg.sessions = 1;
    cfg.sensors = 1;
    cfg.image_size = 24;
    cfg.seed = 42;
    Dataset a = build_dataset(cfg);
    Dataset b = build_dataset(cfg);
    REQUIRE(a.samples.size() == b.samples.size());
    for (size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].sample_id == b.samples[i].sample_id);
        CHECK(images_equal(a.samples[i].image, b.samples[i].image));
    }

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "fas_test_dataset";
    fs::remove_all(dir);
    save_dataset(a, dir.string());
    Dataset c = load_dataset(dir.string());
    REQUIRE(c.samples.size() == a.samples.size());
    CHECK(c.splits.size() == a.splits.size());
    for (const auto& s : a.samples) {
        const FaceSample& loaded = c.by_id(s.sample_id);
        CHECK(loaded.label == s.label);
        CHECK(loaded.instrument == s.instrument);
        CHECK(loaded.subject_id == s.subject_id);
        // 8-bit quantization: loaded pixels within half a level
        double max_err = 0;
        for (int64_t i = 0; i < s.image.numel(); ++i)
            max_err = std::max(max_err, std::abs(loaded.image[i] - s.image[i]));
        CHECK(max_err <= 0.5 / 255.0 + 1e-12);
    }
    fs::remove_all(dir);
}

TEST_CASE("a linear probe separates live from spoof") {
    DatasetConfig cfg;
    cfg.subjects = 8;
    cfg.sessions = 2;
    cfg.sensors = 1;
    cfg.image_size = 32;
    cfg.seed = 21;
    Dataset ds = build_dataset(cfg);

    std::vector<const FaceSample*> train, test;
    for (const auto& s : ds.samples)
        (s.subject_id < 6 ? train : test).push_back(&s);
    REQUIRE(!test.empty());
    const double acc = linear_probe_accuracy(train, test);
    CHECK(acc > 0.9);
}

TEST_CASE("sibling frames share geometry but differ in illumination") {
    const IdentityParams id = make_identity(2);
    FaceSample f0 = render_spoof(id, Instrument::display_a, 0, 0, 32, 0);
    FaceSample f1 = render_spoof(id, Instrument::display_a, 0, 0, 32, 1);
    CHECK(!images_equal(f0.image, f1.image));
    CHECK(mean_abs_diff(f0.image, f1.image) < 0.05); // mild jitter only
}
