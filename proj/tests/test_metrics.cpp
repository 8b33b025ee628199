#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "fas/core/rng.hpp"
#include "fas/metrics.hpp"

using namespace fas;
using detectors::Verdict;
using synthface::Instrument;
using synthface::Label;

namespace {

Verdict make_verdict(Label truth, Instrument inst, Label decision, double score = 0.5) {
    Verdict v;
    v.sample_id = "x";
    v.live_score = score;
    v.decision = decision;
    v.truth_label = truth;
    v.truth_instrument = inst;
    return v;
}

// Independent counting oracle: plain loops, no shared code with the library.
struct Oracle {
    static double apcer(const std::vector<Verdict>& vs) {
        double worst = 0;
        for (int inst = 1; inst <= 4; ++inst) {
            long long total = 0, accepted = 0;
            for (const auto& v : vs)
                if (static_cast<int>(v.truth_instrument) == inst) {
                    ++total;
                    if (v.decision == Label::live) ++accepted;
                }
            if (total > 0)
                worst = std::max(worst, static_cast<double>(accepted) /
                                            static_cast<double>(total));
        }
        return worst;
    }
    static double bpcer(const std::vector<Verdict>& vs) {
        long long total = 0, rejected = 0;
        for (const auto& v : vs) {
            ++total;
            if (v.decision == Label::spoof) ++rejected;
        }
        return static_cast<double>(rejected) / static_cast<double>(total);
    }
    static double asr(const std::vector<Verdict>& vs) {
        long long total = 0, live = 0;
        for (const auto& v : vs) {
            ++total;
            if (v.decision == Label::live) ++live;
        }
        return static_cast<double>(live) / static_cast<double>(total);
    }
};

} // namespace

TEST_CASE("apcer takes the worst instrument group") {
    std::vector<Verdict> vs;
    // group print_a: 1 of 5 accepted (0.2); group display_a: 2 of 5 accepted (0.4)
    for (int i = 0; i < 5; ++i)
        vs.push_back(make_verdict(Label::spoof, Instrument::print_a,
                                  i < 1 ? Label::live : Label::spoof));
    for (int i = 0; i < 5; ++i)
        vs.push_back(make_verdict(Label::spoof, Instrument::display_a,
                                  i < 2 ? Label::live : Label::spoof));
    CHECK(metrics::apcer(vs) == doctest::Approx(0.4));

    std::vector<Verdict> all_rejected(10, make_verdict(Label::spoof, Instrument::print_b,
                                                       Label::spoof));
    CHECK(metrics::apcer(all_rejected) == 0.0);

    std::vector<Verdict> one_group;
    for (int i = 0; i < 10; ++i)
        one_group.push_back(make_verdict(Label::spoof, Instrument::display_b,
                                         i < 3 ? Label::live : Label::spoof));
    CHECK(metrics::apcer(one_group) == doctest::Approx(0.3));

    CHECK_THROWS_AS(metrics::apcer({}), std::invalid_argument);
    std::vector<Verdict> with_live{make_verdict(Label::live, Instrument::none, Label::live)};
    CHECK_THROWS_AS(metrics::apcer(with_live), std::invalid_argument);
}

TEST_CASE("bpcer counts rejected live presentations") {
    std::vector<Verdict> vs;
    for (int i = 0; i < 10; ++i)
        vs.push_back(make_verdict(Label::live, Instrument::none,
                                  i < 1 ? Label::spoof : Label::live));
    CHECK(metrics::bpcer(vs) == doctest::Approx(0.1));

    std::vector<Verdict> all_ok(5, make_verdict(Label::live, Instrument::none, Label::live));
    CHECK(metrics::bpcer(all_ok) == 0.0);
    std::vector<Verdict> all_bad(5, make_verdict(Label::live, Instrument::none, Label::spoof));
    CHECK(metrics::bpcer(all_bad) == 1.0);
    CHECK_THROWS_AS(metrics::bpcer({}), std::invalid_argument);
}

TEST_CASE("acer is the arithmetic mean") {
    CHECK(metrics::acer(0.10, 0.20) == doctest::Approx(0.15));
    CHECK(metrics::acer(0.0, 0.0) == 0.0);
    CHECK(metrics::acer(1.0, 1.0) == 1.0);
    CHECK_THROWS_AS(metrics::acer(-0.1, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(metrics::acer(0.5, 1.1), std::invalid_argument);
}

TEST_CASE("asr counts trigger inputs decided live") {
    std::vector<Verdict> vs;
    for (int i = 0; i < 4; ++i)
        vs.push_back(make_verdict(Label::spoof, Instrument::display_a,
                                  i < 3 ? Label::live : Label::spoof));
    CHECK(metrics::asr(vs) == doctest::Approx(0.75));
    std::vector<Verdict> with_live{make_verdict(Label::live, Instrument::none, Label::live)};
    CHECK_THROWS_AS(metrics::asr(with_live), std::invalid_argument);
    CHECK_THROWS_AS(metrics::asr({}), std::invalid_argument);
}

TEST_CASE("metrics match the brute-force oracle on 1000 randomized verdict sets") {
    core::Rng rng(20240809);
    const Instrument insts[] = {Instrument::print_a, Instrument::print_b,
                                Instrument::display_a, Instrument::display_b};
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<Verdict> spoofs, lives, trigger;
        const int64_t n_groups = 1 + rng.uniform_int(4);
        for (int64_t g = 0; g < n_groups; ++g) {
            const Instrument inst = insts[rng.uniform_int(4)];
            const int64_t count = 1 + rng.uniform_int(30);
            for (int64_t i = 0; i < count; ++i)
                spoofs.push_back(make_verdict(Label::spoof, inst,
                                              rng.bernoulli(rng.uniform())
                                                  ? Label::live
                                                  : Label::spoof));
        }
        const int64_t n_live = 1 + rng.uniform_int(50);
        for (int64_t i = 0; i < n_live; ++i)
            lives.push_back(make_verdict(Label::live, Instrument::none,
                                         rng.bernoulli(0.8) ? Label::live : Label::spoof));
        const int64_t n_trig = 1 + rng.uniform_int(20);
        for (int64_t i = 0; i < n_trig; ++i)
            trigger.push_back(make_verdict(Label::spoof, Instrument::display_a,
                                           rng.bernoulli(0.5) ? Label::live : Label::spoof));

        const double a = metrics::apcer(spoofs);
        const double b = metrics::bpcer(lives);
        REQUIRE(std::abs(a - Oracle::apcer(spoofs)) <= 1e-12);
        REQUIRE(std::abs(b - Oracle::bpcer(lives)) <= 1e-12);
        REQUIRE(std::abs(metrics::acer(a, b) - (Oracle::apcer(spoofs) + Oracle::bpcer(lives)) / 2.0) <= 1e-12);
        REQUIRE(std::abs(metrics::asr(trigger) - Oracle::asr(trigger)) <= 1e-12);

        // permutation invariance
        std::vector<Verdict> shuffled = spoofs;
        rng.shuffle(shuffled);
        REQUIRE(metrics::apcer(shuffled) == a);
    }
}

TEST_CASE("acer identity holds bit-exactly in reports") {
    core::Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Verdict> verdicts;
        for (int i = 0; i < 20; ++i)
            verdicts.push_back(make_verdict(Label::live, Instrument::none,
                                            rng.bernoulli(0.9) ? Label::live : Label::spoof));
        for (int i = 0; i < 20; ++i)
            verdicts.push_back(make_verdict(Label::spoof,
                                            rng.bernoulli(0.5) ? Instrument::print_a
                                                               : Instrument::display_b,
                                            rng.bernoulli(0.2) ? Label::live : Label::spoof));
        metrics::MetricsReport rep = metrics::compute_report(verdicts, {});
        REQUIRE(rep.acer == (rep.apcer + rep.bpcer) / 2.0);
        REQUIRE(rep.apcer >= 0.0);
        REQUIRE(rep.apcer <= 1.0);
        double worst = 0;
        for (const auto& [inst, far] : rep.instrument_far) worst = std::max(worst, far);
        REQUIRE(rep.apcer == worst);
    }
}

TEST_CASE("quality_vs_asr joins manifests with results") {
    std::vector<metrics::PoisonQualityRecord> manifests{
        {"proposed", 0.01}, {"proposed", 0.03}, {"tipim", 0.2}, {"tipim", 0.4}, {"tipim", 0.3}};
    std::vector<metrics::AsrRecord> results{
        {"proposed", 0.5, 0.95}, {"tipim", 0.5, 0.9}, {"proposed", 0.25, 0.4}};

    metrics::QualityReport rep = metrics::quality_vs_asr(manifests, results, 0.5);
    REQUIRE(rep.points.size() == 2);
    for (const auto& p : rep.points) {
        if (p.method == "proposed") {
            CHECK(p.mean_quality == doctest::Approx(0.02));
            CHECK(p.median_quality == doctest::Approx(0.02));
            CHECK(p.asr == doctest::Approx(0.95)); // copied, not recomputed
        } else {
            CHECK(p.method == "tipim");
            CHECK(p.mean_quality == doctest::Approx(0.3));
            CHECK(p.median_quality == doctest::Approx(0.3));
            CHECK(p.asr == doctest::Approx(0.9));
        }
    }

    SUBCASE("single generator, single rate") {
        metrics::QualityReport one = metrics::quality_vs_asr({{"lgc", 0.5}},
                                                             {{"lgc", 0.5, 0.7}}, 0.5);
        REQUIRE(one.points.size() == 1);
        CHECK(one.points[0].method == "lgc");
    }

    SUBCASE("key mismatch rejected") {
        CHECK_THROWS_AS(metrics::quality_vs_asr({{"proposed", 0.1}}, {{"tipim", 0.5, 0.5}}, 0.5),
                        std::invalid_argument);
        CHECK_THROWS_AS(metrics::quality_vs_asr({{"proposed", 0.1}}, {{"proposed", 0.25, 0.5}},
                                                0.5),
                        std::invalid_argument);
    }
}
