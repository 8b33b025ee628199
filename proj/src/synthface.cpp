#include "fas/synthface.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "fas/io/image_io.hpp"
#include "json.hpp"

namespace fas::synthface {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;

double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Identity skin texture: two seeded oriented sinusoids inside the face oval.
// This is the per-subject signature the feature extractor keys on.
struct SkinTexture {
    double f1, f2, th1, th2, ph1, ph2, amp;
    double gain[3];

    explicit SkinTexture(uint64_t seed) {
        Rng r(seed);
        f1 = r.uniform(2.5, 5.5);
        f2 = r.uniform(3.0, 7.0);
        th1 = r.uniform(0.0, kPi);
        th2 = r.uniform(0.0, kPi);
        ph1 = r.uniform(0.0, 2.0 * kPi);
        ph2 = r.uniform(0.0, 2.0 * kPi);
        amp = r.uniform(0.05, 0.09);
        for (auto& g : gain) g = r.uniform(0.6, 1.0);
    }

    double value(double u, double v, int c) const {
        const double a = std::sin(2.0 * kPi * f1 * (u * std::cos(th1) + v * std::sin(th1)) + ph1);
        const double b = std::sin(2.0 * kPi * f2 * (u * std::cos(th2) + v * std::sin(th2)) + ph2);
        return amp * gain[c] * 0.5 * (a + b);
    }
};

struct SessionLight {
    double gain, angle, strength, bg_shift;

    explicit SessionLight(int64_t session_id, int64_t frame) {
        Rng r(0x5e5510ull + static_cast<uint64_t>(session_id) * 7919);
        gain = r.uniform(0.85, 1.10);
        angle = r.uniform(0.0, 2.0 * kPi);
        strength = r.uniform(0.08, 0.16);
        bg_shift = r.uniform(-0.08, 0.08);
        if (frame > 0) {
            // sibling frames of a capture: small illumination jitter only
            Rng fr(0xf7a3e5ull + static_cast<uint64_t>(session_id) * 131 +
                   static_cast<uint64_t>(frame));
            gain *= 1.0 + fr.uniform(-0.03, 0.03);
            strength *= 1.0 + fr.uniform(-0.1, 0.1);
        }
    }
};

struct SensorProfile {
    double wb[3]; // white balance gains
    double vignette;
    uint64_t noise_seed;
    double noise_amp;

    explicit SensorProfile(int64_t sensor_id) {
        Rng r(0xca33aull + static_cast<uint64_t>(sensor_id) * 104729);
        wb[0] = r.uniform(0.94, 1.06);
        wb[1] = r.uniform(0.96, 1.04);
        wb[2] = r.uniform(0.94, 1.06);
        vignette = r.uniform(0.05, 0.18);
        noise_seed = r.next_u64();
        noise_amp = r.uniform(0.004, 0.012);
    }
};

// Deterministic per-pixel pseudo-noise (hash of coordinates and seed).
double pixel_noise(uint64_t seed, int64_t x, int64_t y, int64_t c) {
    uint64_t h = seed ^ (static_cast<uint64_t>(x + 1) * 0x9e3779b97f4a7c15ull) ^
                 (static_cast<uint64_t>(y + 1) * 0xc2b2ae3d27d4eb4full) ^
                 (static_cast<uint64_t>(c + 1) * 0x165667b19e3779f9ull);
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

// Print: rotated halftone dots (cycles per image) + color flattening.
// Display: near-pixel-pitch grid (period in pixels) + specular band + tint.
struct OverlayParams {
    double dot_cycles = 0.0, dot_amp = 0.0, flatten = 0.0, contrast = 0.0;
    double grid_period = 0.0, grid_amp = 0.0, band_amp = 0.0, band_angle = 0.0;
    double tint[3] = {0, 0, 0};
    double phase = 0.0;

    OverlayParams(Instrument inst, int64_t sensor_id) {
        Rng r(0x5b00full + static_cast<uint64_t>(inst) * 65537 +
              static_cast<uint64_t>(sensor_id) * 31337);
        phase = r.uniform(0.0, 2.0 * kPi);
        switch (inst) {
            case Instrument::print_a:
                dot_cycles = 5.0;
                dot_amp = 0.085;
                flatten = 0.30;
                contrast = 0.15;
                tint[0] = 0.015;
                break;
            case Instrument::print_b:
                dot_cycles = 8.0;
                dot_amp = 0.075;
                flatten = 0.20;
                contrast = 0.08;
                tint[1] = 0.01;
                break;
            case Instrument::display_a:
                grid_period = 3.0;
                grid_amp = 0.075;
                band_amp = 0.12;
                band_angle = 0.5;
                tint[2] = 0.02;
                break;
            case Instrument::display_b:
                grid_period = 4.0;
                grid_amp = 0.07;
                band_amp = 0.09;
                band_angle = 2.2;
                tint[0] = 0.012;
                tint[2] = 0.008;
                break;
            default:
                break;
        }
    }
};

std::string make_sample_id(int64_t subject, int64_t session, int64_t sensor,
                           Instrument inst, int64_t frame) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "s%04lld_e%lld_c%lld_%s_f%lld",
                  static_cast<long long>(subject), static_cast<long long>(session),
                  static_cast<long long>(sensor), to_string(inst),
                  static_cast<long long>(frame));
    return buf;
}

FaceSample render(const IdentityParams& id, Instrument inst, int64_t session_id,
                  int64_t sensor_id, int64_t image_size, int64_t frame) {
    const int64_t n = image_size;
    const Geometry& g = id.geometry;
    const SkinTexture tex(id.texture_seed);
    const SessionLight light(session_id, frame);
    const SensorProfile sensor(sensor_id);
    const OverlayParams ov(inst, sensor_id);

    Rng bg_rng(0xb9c0ull + static_cast<uint64_t>(session_id) * 677 +
               static_cast<uint64_t>(sensor_id) * 31);
    const double bg_base = 0.22 + 0.10 * bg_rng.uniform() + light.bg_shift;
    const double bg_tiltx = bg_rng.uniform(-0.08, 0.08);
    const double bg_tilty = bg_rng.uniform(-0.08, 0.08);
    const double bg_freq = bg_rng.uniform(1.0, 2.5);

    const double cx = 0.5, cy = 0.52;
    const double eye_lx = 0.5 - g.eye_dx, eye_rx = 0.5 + g.eye_dx;

    Tensor img({3, n, n});
    const double inv = 1.0 / static_cast<double>(n);
    for (int64_t y = 0; y < n; ++y) {
        for (int64_t x = 0; x < n; ++x) {
            const double u = (static_cast<double>(x) + 0.5) * inv;
            const double v = (static_cast<double>(y) + 0.5) * inv;

            // background
            double px[3];
            const double bgp = bg_base + bg_tiltx * (u - 0.5) + bg_tilty * (v - 0.5) +
                               0.03 * std::sin(2.0 * kPi * bg_freq * (u + 0.7 * v));
            px[0] = bgp * 1.02;
            px[1] = bgp;
            px[2] = bgp * 1.05;

            // face oval
            const double du = (u - cx) / g.face_rx, dv = (v - cy) / g.face_ry;
            const double rr = du * du + dv * dv;
            const double face_alpha = 1.0 - smoothstep(0.92, 1.05, rr);
            if (face_alpha > 0.0) {
                const double shade =
                    (1.0 - 0.22 * rr) *
                    (1.0 + light.strength * ((u - cx) * std::cos(light.angle) +
                                             (v - cy) * std::sin(light.angle)) /
                               std::max(g.face_rx, g.face_ry));
                double f[3];
                for (int c = 0; c < 3; ++c)
                    f[c] = id.skin_tone[c] * shade + tex.value(u, v, c);

                // eyes: dark iris disks
                for (const double ex : {eye_lx, eye_rx}) {
                    const double er = std::hypot(u - ex, v - g.eye_y);
                    const double a = 1.0 - smoothstep(g.eye_r * 0.85, g.eye_r * 1.15, er);
                    if (a > 0.0) {
                        const double iris[3] = {0.09, 0.07, 0.06};
                        for (int c = 0; c < 3; ++c) f[c] = f[c] * (1.0 - a) + iris[c] * a;
                    }
                }
                // nose shadow
                {
                    const double nr = std::hypot((u - 0.5) / g.nose_w,
                                                 (v - g.nose_y) / (g.nose_w * 0.7));
                    const double a = (1.0 - smoothstep(0.6, 1.1, nr)) * 0.35;
                    for (int c = 0; c < 3; ++c) f[c] *= 1.0 - a;
                }
                // mouth
                {
                    const double mr = std::hypot((u - 0.5) / (g.mouth_w * 0.5),
                                                 (v - g.mouth_y) / 0.028);
                    const double a = 1.0 - smoothstep(0.75, 1.15, mr);
                    if (a > 0.0) {
                        const double lip[3] = {0.45, 0.17, 0.18};
                        for (int c = 0; c < 3; ++c) f[c] = f[c] * (1.0 - a) + lip[c] * a;
                    }
                }
                for (int c = 0; c < 3; ++c)
                    px[c] = px[c] * (1.0 - face_alpha) + f[c] * face_alpha;
            }

            // spoof instrument overlay, windowed to the face region
            if (inst != Instrument::none) {
                const double win = 1.0 - smoothstep(1.05, 1.35, rr);
                if (win > 0.0) {
                    double add[3] = {0, 0, 0};
                    if (ov.dot_amp > 0.0) {
                        // halftone: product of two rotated sinusoids
                        const double a1 = std::sin(2.0 * kPi * ov.dot_cycles *
                                                       (u * 0.7071 + v * 0.7071) +
                                                   ov.phase);
                        const double a2 = std::sin(2.0 * kPi * ov.dot_cycles *
                                                       (u * 0.7071 - v * 0.7071) -
                                                   ov.phase);
                        const double dots = ov.dot_amp * a1 * a2;
                        for (int c = 0; c < 3; ++c) add[c] += dots;
                        // flattening toward luma and mid-gray
                        const double luma = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
                        for (int c = 0; c < 3; ++c) {
                            const double flat =
                                px[c] * (1.0 - ov.flatten) + luma * ov.flatten;
                            const double con = flat * (1.0 - ov.contrast) + 0.5 * ov.contrast;
                            add[c] += con - px[c];
                        }
                    }
                    if (ov.grid_amp > 0.0) {
                        const double gx = std::sin(2.0 * kPi * static_cast<double>(x) /
                                                   ov.grid_period);
                        const double gy = std::sin(2.0 * kPi * static_cast<double>(y) /
                                                   ov.grid_period + ov.phase);
                        const double grid = ov.grid_amp * 0.5 * (gx + gy);
                        const double band_pos = u * std::cos(ov.band_angle) +
                                                v * std::sin(ov.band_angle);
                        const double band =
                            ov.band_amp *
                            std::exp(-std::pow((band_pos - 0.55) / 0.12, 2.0));
                        for (int c = 0; c < 3; ++c) add[c] += grid + band;
                    }
                    for (int c = 0; c < 3; ++c) px[c] += win * (add[c] + ov.tint[c]);
                }
            }

            // sensor: white balance, vignette, fixed-pattern noise
            const double vig =
                1.0 - sensor.vignette * ((u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5)) * 2.0;
            for (int c = 0; c < 3; ++c) {
                double val = px[c] * sensor.wb[c] * vig * light.gain;
                val += sensor.noise_amp * pixel_noise(sensor.noise_seed, x, y, c);
                if (frame > 0)
                    val += 0.004 * pixel_noise(sensor.noise_seed ^
                                                   (0xf00dull + static_cast<uint64_t>(frame)),
                                               x, y, c);
                img[(c * n + y) * n + x] = clamp01(val);
            }
        }
    }

    FaceSample s;
    s.image = std::move(img);
    s.label = inst == Instrument::none ? Label::live : Label::spoof;
    s.instrument = inst;
    s.subject_id = id.subject_id;
    s.session_id = session_id;
    s.sensor_id = sensor_id;
    s.sample_id = make_sample_id(id.subject_id, session_id, sensor_id, inst, frame);
    return s;
}

} // namespace

const char* to_string(Label l) { return l == Label::live ? "live" : "spoof"; }

const char* to_string(Instrument i) {
    switch (i) {
        case Instrument::none: return "none";
        case Instrument::print_a: return "print_a";
        case Instrument::print_b: return "print_b";
        case Instrument::display_a: return "display_a";
        case Instrument::display_b: return "display_b";
    }
    return "none";
}

Instrument instrument_from_string(const std::string& s) {
    if (s == "none") return Instrument::none;
    if (s == "print_a") return Instrument::print_a;
    if (s == "print_b") return Instrument::print_b;
    if (s == "display_a") return Instrument::display_a;
    if (s == "display_b") return Instrument::display_b;
    throw std::invalid_argument("unknown instrument: " + s);
}

Label label_from_string(const std::string& s) {
    if (s == "live") return Label::live;
    if (s == "spoof") return Label::spoof;
    throw std::invalid_argument("unknown label: " + s);
}

const GeometryBounds& geometry_bounds() {
    static const GeometryBounds b{
        {0.28, 0.36, 0.10, 0.40, 0.030, 0.55, 0.030, 0.66, 0.10},
        {0.38, 0.46, 0.16, 0.46, 0.048, 0.61, 0.055, 0.74, 0.16}};
    return b;
}

IdentityParams make_identity(uint64_t seed) {
    IdentityParams id;
    id.subject_id = static_cast<int64_t>(seed);
    Rng r(0x1de47ull ^ (seed * 0x9e3779b97f4a7c15ull));
    const GeometryBounds& b = geometry_bounds();
    double geo[9];
    for (int i = 0; i < 9; ++i) geo[i] = r.uniform(b.lo[i], b.hi[i]);
    id.geometry = {geo[0], geo[1], geo[2], geo[3], geo[4], geo[5], geo[6], geo[7], geo[8]};
    for (auto& t : id.skin_tone) t = r.uniform(0.45, 0.85);
    id.texture_seed = r.next_u64();
    return id;
}

IdentityParams dataset_identity(const DatasetConfig& config, int64_t subject_id) {
    IdentityParams id =
        make_identity(config.seed * 1000003ull + static_cast<uint64_t>(subject_id));
    id.subject_id = subject_id; // seed-derived identity, corpus-level numbering
    return id;
}

LandmarkSet landmarks(const IdentityParams& id, int64_t image_size) {
    const Geometry& g = id.geometry;
    const double n = static_cast<double>(image_size);
    LandmarkSet lm;
    lm.left_eye[0] = (0.5 - g.eye_dx) * n;
    lm.left_eye[1] = g.eye_y * n;
    lm.right_eye[0] = (0.5 + g.eye_dx) * n;
    lm.right_eye[1] = g.eye_y * n;
    lm.nose_tip[0] = 0.5 * n;
    lm.nose_tip[1] = g.nose_y * n;
    lm.mouth_left[0] = (0.5 - g.mouth_w * 0.5) * n;
    lm.mouth_left[1] = g.mouth_y * n;
    lm.mouth_right[0] = (0.5 + g.mouth_w * 0.5) * n;
    lm.mouth_right[1] = g.mouth_y * n;
    return lm;
}

FaceSample render_live(const IdentityParams& id, int64_t session_id, int64_t sensor_id,
                       int64_t image_size, int64_t frame) {
    return render(id, Instrument::none, session_id, sensor_id, image_size, frame);
}

FaceSample render_spoof(const IdentityParams& id, Instrument instrument,
                        int64_t session_id, int64_t sensor_id, int64_t image_size,
                        int64_t frame) {
    if (instrument == Instrument::none)
        throw std::invalid_argument("render_spoof: instrument must not be none");
    return render(id, instrument, session_id, sensor_id, image_size, frame);
}

const FaceSample& Dataset::by_id(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) throw std::out_of_range("no such sample: " + id);
    return samples[it->second];
}

FaceSample& Dataset::by_id_mut(const std::string& id) {
    auto it = index.find(id);
    if (it == index.end()) throw std::out_of_range("no such sample: " + id);
    return samples[it->second];
}

void Dataset::rebuild_index() {
    index.clear();
    for (size_t i = 0; i < samples.size(); ++i) index[samples[i].sample_id] = i;
}

const ProtocolSplit& Dataset::split(const std::string& name) const {
    for (const auto& s : splits)
        if (s.name == name) return s;
    throw std::out_of_range("no such split: " + name);
}

Dataset build_dataset(const DatasetConfig& config) {
    if (config.subjects < 4)
        throw std::invalid_argument("build_dataset: need at least 4 subjects for disjoint splits");
    if (config.sessions < 1 || config.sensors < 1 || config.frames < 1)
        throw std::invalid_argument("build_dataset: sessions/sensors/frames must be >= 1");

    Dataset ds;
    ds.config = config;

    static const Instrument kAll[] = {Instrument::none, Instrument::print_a,
                                      Instrument::print_b, Instrument::display_a,
                                      Instrument::display_b};

    for (int64_t s = 0; s < config.subjects; ++s) {
        const IdentityParams id = dataset_identity(config, config.subject_offset + s);
        for (int64_t e = 0; e < config.sessions; ++e)
            for (int64_t c = 0; c < config.sensors; ++c)
                for (Instrument inst : kAll)
                    for (int64_t f = 0; f < config.frames; ++f)
                        ds.samples.push_back(render(id, inst, e, c, config.image_size, f));
    }
    ds.rebuild_index();

    // Subject partition (seeded): ~60% train, ~15% dev, rest test.
    std::vector<int64_t> subject_ids;
    for (int64_t s = 0; s < config.subjects; ++s)
        subject_ids.push_back(config.subject_offset + s);
    Rng split_rng(config.seed ^ 0x59117ull);
    split_rng.shuffle(subject_ids);
    int64_t n_train = std::max<int64_t>(2, static_cast<int64_t>(std::llround(
                                               0.60 * static_cast<double>(config.subjects))));
    int64_t n_dev = std::max<int64_t>(1, static_cast<int64_t>(std::llround(
                                             0.15 * static_cast<double>(config.subjects))));
    while (n_train + n_dev > config.subjects - 1) {
        if (n_train > 2) --n_train;
        else --n_dev;
    }
    std::vector<int64_t> train_subj(subject_ids.begin(), subject_ids.begin() + n_train);
    std::vector<int64_t> dev_subj(subject_ids.begin() + n_train,
                                  subject_ids.begin() + n_train + n_dev);
    std::vector<int64_t> test_subj(subject_ids.begin() + n_train + n_dev, subject_ids.end());

    auto group_of = [&](int64_t subj) -> int {
        for (int64_t t : train_subj)
            if (t == subj) return 0;
        for (int64_t t : dev_subj)
            if (t == subj) return 1;
        return 2;
    };

    auto build_split = [&](const std::string& name, const std::string& held_out,
                           auto train_keep, auto dev_keep, auto test_keep) {
        ProtocolSplit sp;
        sp.name = name;
        sp.held_out_description = held_out;
        for (const auto& s : ds.samples) {
            switch (group_of(s.subject_id)) {
                case 0:
                    if (train_keep(s)) sp.train.push_back(s.sample_id);
                    break;
                case 1:
                    if (dev_keep(s)) sp.dev.push_back(s.sample_id);
                    break;
                default:
                    if (test_keep(s)) sp.test.push_back(s.sample_id);
                    break;
            }
        }
        ds.splits.push_back(std::move(sp));
    };

    auto all = [](const FaceSample&) { return true; };
    auto a_variants = [](const FaceSample& s) {
        return s.instrument == Instrument::none || s.instrument == Instrument::print_a ||
               s.instrument == Instrument::display_a;
    };
    auto b_variants = [](const FaceSample& s) {
        return s.instrument == Instrument::none || s.instrument == Instrument::print_b ||
               s.instrument == Instrument::display_b;
    };
    auto print_only = [](const FaceSample& s) {
        return s.instrument == Instrument::none || is_print(s.instrument);
    };
    auto display_only = [](const FaceSample& s) {
        return s.instrument == Instrument::none || is_display(s.instrument);
    };

    build_split("P1", "unseen subjects; all instruments and sessions on both sides", all,
                all, all);
    build_split("P2", "b-variant of each instrument family unseen during training",
                a_variants, a_variants, b_variants);
    build_split("P3", "display family unseen during training (train: print only)",
                print_only, print_only, display_only);

    return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "splits");

    {
        json cfg{{"subjects", ds.config.subjects},   {"sessions", ds.config.sessions},
                 {"sensors", ds.config.sensors},     {"frames", ds.config.frames},
                 {"image_size", ds.config.image_size}, {"seed", ds.config.seed},
                 {"subject_offset", ds.config.subject_offset}};
        std::ofstream f(fs::path(dir) / "config.json", std::ios::trunc);
        f << cfg.dump(2) << "\n";
    }

    std::ofstream mf(fs::path(dir) / "manifest.jsonl", std::ios::trunc);
    for (const auto& s : ds.samples) {
        const std::string rel = "images/" + s.sample_id + ".ppm";
        io::write_ppm((fs::path(dir) / rel).string(), s.image);
        json rec{{"sample_id", s.sample_id}, {"label", to_string(s.label)},
                 {"instrument", to_string(s.instrument)}, {"subject", s.subject_id},
                 {"session", s.session_id}, {"sensor", s.sensor_id}, {"file", rel}};
        mf << rec.dump() << "\n";
    }

    for (const auto& sp : ds.splits) {
        json j{{"name", sp.name},
               {"held_out", sp.held_out_description},
               {"train", sp.train},
               {"dev", sp.dev},
               {"test", sp.test}};
        std::ofstream f(fs::path(dir) / "splits" / (sp.name + ".json"), std::ios::trunc);
        f << j.dump(2) << "\n";
    }
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    {
        std::ifstream f(fs::path(dir) / "config.json");
        if (!f) throw std::runtime_error("load_dataset: missing config.json in " + dir);
        json cfg = json::parse(f);
        ds.config.subjects = cfg.at("subjects");
        ds.config.sessions = cfg.at("sessions");
        ds.config.sensors = cfg.at("sensors");
        ds.config.frames = cfg.value("frames", 1);
        ds.config.image_size = cfg.at("image_size");
        ds.config.seed = cfg.at("seed");
        ds.config.subject_offset = cfg.value("subject_offset", 0);
    }
    {
        std::ifstream f(fs::path(dir) / "manifest.jsonl");
        if (!f) throw std::runtime_error("load_dataset: missing manifest.jsonl in " + dir);
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line);
            FaceSample s;
            s.sample_id = rec.at("sample_id");
            s.label = label_from_string(rec.at("label"));
            s.instrument = instrument_from_string(rec.at("instrument"));
            s.subject_id = rec.at("subject");
            s.session_id = rec.at("session");
            s.sensor_id = rec.at("sensor");
            s.image = io::read_ppm((fs::path(dir) / rec.at("file").get<std::string>()).string());
            if (s.label == Label::live && s.instrument != Instrument::none)
                throw std::runtime_error("load_dataset: label/instrument mismatch for " +
                                         s.sample_id);
            ds.samples.push_back(std::move(s));
        }
    }
    ds.rebuild_index();
    for (const auto& entry : fs::directory_iterator(fs::path(dir) / "splits")) {
        std::ifstream f(entry.path());
        json j = json::parse(f);
        ProtocolSplit sp;
        sp.name = j.at("name");
        sp.held_out_description = j.at("held_out");
        sp.train = j.at("train").get<std::vector<std::string>>();
        sp.dev = j.at("dev").get<std::vector<std::string>>();
        sp.test = j.at("test").get<std::vector<std::string>>();
        ds.splits.push_back(std::move(sp));
    }
    std::sort(ds.splits.begin(), ds.splits.end(),
              [](const ProtocolSplit& a, const ProtocolSplit& b) { return a.name < b.name; });
    return ds;
}

} // namespace fas::synthface
