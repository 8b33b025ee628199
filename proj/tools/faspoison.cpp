// faspoison: dataset building, model training, and backdoor-poisoning attack
// sweeps with reproducible run manifests.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fas/harness.hpp"
#include "fas/io/hash.hpp"
#include "fas/io/series.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fas;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitConfig = 2;
constexpr int kExitMissingPrereq = 3;
constexpr int kExitCellFailure = 4;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PrereqError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Flat, schema-validated config namespace

enum class KeyType { integer, real, string, boolean };

struct KeySpec {
    KeyType type;
    json default_value; // null => required
    const char* help;
};

using Schema = std::map<std::string, KeySpec>;

json load_config(const std::string& path, const Schema& schema) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    json cfg;
    try {
        cfg = json::parse(f);
    } catch (const std::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    if (!cfg.is_object()) throw ConfigError("config root must be a JSON object: " + path);
    for (const auto& [key, value] : cfg.items()) {
        auto it = schema.find(key);
        if (it == schema.end()) throw ConfigError("unknown config key: \"" + key + "\"");
        const KeySpec& spec = it->second;
        const bool ok = (spec.type == KeyType::integer && value.is_number_integer()) ||
                        (spec.type == KeyType::real && value.is_number()) ||
                        (spec.type == KeyType::string && value.is_string()) ||
                        (spec.type == KeyType::boolean && value.is_boolean());
        if (!ok) throw ConfigError("config key \"" + key + "\" has the wrong type");
    }
    for (const auto& [key, spec] : schema) {
        if (cfg.contains(key)) continue;
        if (spec.default_value.is_null())
            throw ConfigError("missing required config key: \"" + key + "\"");
        cfg[key] = spec.default_value;
    }
    return cfg;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!isspace(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<double> split_csv_reals(const std::string& s) {
    std::vector<double> out;
    for (const auto& tok : split_csv(s)) out.push_back(std::stod(tok));
    return out;
}

std::vector<uint64_t> split_csv_u64(const std::string& s) {
    std::vector<uint64_t> out;
    for (const auto& tok : split_csv(s)) out.push_back(std::stoull(tok));
    return out;
}

// ---------------------------------------------------------------------------
// Run manifests

struct RunManifest {
    std::string command;
    json config;
    uint64_t master_seed = 0;
    json input_fingerprints = json::object();
    json output_fingerprints = json::object();
    double runtime_seconds = 0;
    std::string outcome = "ok";

    void write(const fs::path& out_dir) const {
        json j{{"command", command},
               {"config", config},
               {"master_seed", master_seed},
               {"tool_version", kVersion},
               {"inputs", input_fingerprints},
               {"outputs", output_fingerprints},
               {"runtime_seconds", runtime_seconds},
               {"outcome", outcome}};
        std::ofstream f(out_dir / "run_manifest.json", std::ios::trunc);
        f << j.dump(2) << "\n";
    }
};

std::string out_root() {
    const char* env = std::getenv("FASPOISON_OUT");
    return env && *env ? env : ".";
}

fs::path resolve_out(const std::string& out_flag, const std::string& fallback_name) {
    fs::path p = out_flag.empty() ? fs::path(out_root()) / fallback_name : fs::path(out_flag);
    fs::create_directories(p);
    return p;
}

std::string file_fp(const fs::path& p) { return io::fingerprint_file(p.string()); }

core::Checkpoint load_ckpt_or_die(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw PrereqError(std::string("missing prerequisite checkpoint (") + what +
                          "): " + path);
    try {
        return core::load_checkpoint(path);
    } catch (const std::exception& e) {
        throw PrereqError(std::string("cannot load ") + what + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Subcommand configs

Schema dataset_schema() {
    return {
        {"subjects", {KeyType::integer, 20, "number of identities"}},
        {"sessions", {KeyType::integer, 2, "capture sessions per subject"}},
        {"sensors", {KeyType::integer, 2, "capture sensors per subject"}},
        {"frames", {KeyType::integer, 1, "sibling frames per combination"}},
        {"image_size", {KeyType::integer, 64, "square image side in pixels"}},
        {"seed", {KeyType::integer, 1, "master seed"}},
        {"subject_offset", {KeyType::integer, 0, "first subject id"}},
    };
}

synthface::DatasetConfig dataset_config_from(const json& cfg) {
    synthface::DatasetConfig dc;
    dc.subjects = cfg.at("subjects");
    dc.sessions = cfg.at("sessions");
    dc.sensors = cfg.at("sensors");
    dc.frames = cfg.at("frames");
    dc.image_size = cfg.at("image_size");
    dc.seed = cfg.at("seed").get<uint64_t>();
    dc.subject_offset = cfg.at("subject_offset");
    return dc;
}

Schema extractor_schema() {
    return {
        {"corpus_dir", {KeyType::string, nullptr, "dataset directory (live images are used)"}},
        {"embed_dim", {KeyType::integer, 64, "embedding dimension"}},
        {"channels", {KeyType::integer, 12, "base conv width"}},
        {"margin", {KeyType::real, 0.2, "angular margin"}},
        {"scale", {KeyType::real, 16.0, "logit scale"}},
        {"learning_rate", {KeyType::real, 1e-3, "Adam learning rate"}},
        {"epochs", {KeyType::integer, 25, "training epochs"}},
        {"batch", {KeyType::integer, 16, "batch size"}},
        {"seed", {KeyType::integer, 7, "training seed"}},
    };
}

Schema embedder_schema() {
    return {
        {"corpus_dir", {KeyType::string, nullptr, "dataset directory for cover/embed pools"}},
        {"extractor_ckpt", {KeyType::string, nullptr, "trained feature extractor checkpoint"}},
        {"lambda_rec", {KeyType::real, 1.00, "pixel reconstruction weight (paper 1.00)"}},
        {"lambda_perc", {KeyType::real, 1.00, "perceptual feature weight (paper 1.00)"}},
        {"lambda_lpips", {KeyType::real, 1.00, "perceptual-proxy weight (paper 1.00)"}},
        {"lambda_near", {KeyType::real, 0.25, "trigger-feature pull weight (paper 0.25)"}},
        {"lambda_far", {KeyType::real, 0.25, "cover-feature push weight (paper 0.25)"}},
        {"far_margin", {KeyType::real, 0.3, "hinge margin of the far term"}},
        {"rec_form", {KeyType::string, "squared", "squared | absolute"}},
        {"learning_rate", {KeyType::real, 1e-3, "Adam learning rate (full-scale recipe: 1e-5)"}},
        {"epochs", {KeyType::integer, 30, "training epochs (full-scale recipe: 150)"}},
        {"batch", {KeyType::integer, 8, "batch size"}},
        {"val_fraction", {KeyType::real, 0.10, "validation pair fraction"}},
        {"plateau_factor", {KeyType::real, 0.8, "LR multiplier on plateau (decrease by 20%)"}},
        {"plateau_patience", {KeyType::integer, 5, "non-improving epochs before decay"}},
        {"plateau_min_delta", {KeyType::real, 1e-4, "improvement threshold"}},
        {"quality_ceiling", {KeyType::real, 0.5, "validation mean quality target"}},
        {"seed", {KeyType::integer, 11, "training seed"}},
        {"perceptual_seed", {KeyType::integer, 0x9e77, "perceptual pyramid seed"}},
    };
}

embedder::EmbedderConfig embedder_config_from(const json& cfg) {
    embedder::EmbedderConfig ec;
    ec.far_margin = cfg.at("far_margin");
    const std::string rf = cfg.at("rec_form");
    if (rf != "squared" && rf != "absolute")
        throw ConfigError("config key \"rec_form\" must be squared or absolute");
    ec.rec_form =
        rf == "squared" ? embedder::RecLossForm::squared : embedder::RecLossForm::absolute;
    ec.learning_rate = cfg.at("learning_rate");
    ec.epochs = cfg.at("epochs");
    ec.batch = cfg.at("batch");
    ec.val_fraction = cfg.at("val_fraction");
    ec.plateau_factor = cfg.at("plateau_factor");
    ec.plateau_patience = cfg.at("plateau_patience");
    ec.plateau_min_delta = cfg.at("plateau_min_delta");
    ec.quality_ceiling = cfg.at("quality_ceiling");
    ec.seed = cfg.at("seed").get<uint64_t>();
    ec.perceptual_seed = cfg.at("perceptual_seed").get<uint64_t>();
    return ec;
}

embedder::EmbedderLossWeights weights_from(const json& cfg) {
    embedder::EmbedderLossWeights w;
    w.lambda_rec = cfg.at("lambda_rec");
    w.lambda_perc = cfg.at("lambda_perc");
    w.lambda_lpips = cfg.at("lambda_lpips");
    w.lambda_near = cfg.at("lambda_near");
    w.lambda_far = cfg.at("lambda_far");
    return w;
}

void add_detector_keys(Schema& s) {
    s["patch_size"] = {KeyType::integer, 32, "PatchNet patch side (paper 160)"};
    s["patches_per_image"] = {KeyType::integer, 4, "patches per image"};
    s["patch_s"] = {KeyType::real, 30.0, "PatchNet logit scale (paper 30.0)"};
    s["patch_m_l"] = {KeyType::real, 0.4, "live-class margin (paper 0.4)"};
    s["patch_m_s"] = {KeyType::real, 0.1, "spoof-class margin (paper 0.1)"};
    s["patch_epochs"] = {KeyType::integer, 15, "PatchNet epochs (paper 30)"};
    s["patch_lr"] = {KeyType::real, 2e-4, "PatchNet learning rate (paper 2e-4)"};
    s["patch_weight_decay"] = {KeyType::real, 5e-4, "PatchNet weight decay (paper 5e-4)"};
    s["patch_max_rotation"] = {KeyType::real, 0.15, "extra patch rotation jitter (radians)"};
    s["patch_channels"] = {KeyType::integer, 12, "PatchNet conv width"};
    s["patch_embed_dim"] = {KeyType::integer, 32, "PatchNet embedding dim"};
    s["patch_batch_images"] = {KeyType::integer, 4, "images per PatchNet batch"};
    s["alpha1"] = {KeyType::real, 1.0, "STDN classification weight (paper 1)"};
    s["alpha2"] = {KeyType::real, 100.0, "STDN live-trace suppression (paper 100)"};
    s["alpha3"] = {KeyType::real, 0.003, "STDN reconstruction weight (paper 0.003)"};
    s["alpha4"] = {KeyType::real, 1.0, "STDN trace sparsity (paper 1)"};
    s["alpha5"] = {KeyType::real, 5.0, "STDN feature consistency (paper 5)"};
    s["stdn_epochs"] = {KeyType::integer, 30, "STDN epochs (paper 30)"};
    s["stdn_lr"] = {KeyType::real, 5e-5, "STDN learning rate (paper 5e-5)"};
    s["stdn_lr_decay"] = {KeyType::real, 0.10, "fraction removed per decay step (paper 10%)"};
    s["stdn_lr_decay_steps"] = {KeyType::integer, 20000, "steps per decay (paper 20000)"};
    s["stdn_channels"] = {KeyType::integer, 12, "STDN conv width"};
    s["stdn_batch"] = {KeyType::integer, 16, "STDN batch size"};
    s["cnn_channels"] = {KeyType::integer, 12, "baseline CNN conv width"};
    s["cnn_epochs"] = {KeyType::integer, 12, "baseline CNN epochs"};
    s["cnn_lr"] = {KeyType::real, 1e-3, "baseline CNN learning rate"};
    s["cnn_batch"] = {KeyType::integer, 16, "baseline CNN batch size"};
}

void fill_detector_configs(const json& cfg, harness::AttackContext& ctx) {
    ctx.patchnet.patch_size = cfg.at("patch_size");
    ctx.patchnet.patches_per_image = cfg.at("patches_per_image");
    ctx.patchnet.s = cfg.at("patch_s");
    ctx.patchnet.m_l = cfg.at("patch_m_l");
    ctx.patchnet.m_s = cfg.at("patch_m_s");
    ctx.patchnet.epochs = cfg.at("patch_epochs");
    ctx.patchnet.learning_rate = cfg.at("patch_lr");
    ctx.patchnet.weight_decay = cfg.at("patch_weight_decay");
    ctx.patchnet.max_rotation = cfg.at("patch_max_rotation");
    ctx.patchnet.channels = cfg.at("patch_channels");
    ctx.patchnet.embed_dim = cfg.at("patch_embed_dim");
    ctx.patchnet.batch_images = cfg.at("patch_batch_images");
    ctx.stdn.alpha1 = cfg.at("alpha1");
    ctx.stdn.alpha2 = cfg.at("alpha2");
    ctx.stdn.alpha3 = cfg.at("alpha3");
    ctx.stdn.alpha4 = cfg.at("alpha4");
    ctx.stdn.alpha5 = cfg.at("alpha5");
    ctx.stdn.epochs = cfg.at("stdn_epochs");
    ctx.stdn.learning_rate = cfg.at("stdn_lr");
    ctx.stdn.lr_decay = cfg.at("stdn_lr_decay");
    ctx.stdn.lr_decay_steps = cfg.at("stdn_lr_decay_steps");
    ctx.stdn.channels = cfg.at("stdn_channels");
    ctx.stdn.batch = cfg.at("stdn_batch");
    ctx.cnn.channels = cfg.at("cnn_channels");
    ctx.cnn.epochs = cfg.at("cnn_epochs");
    ctx.cnn.learning_rate = cfg.at("cnn_lr");
    ctx.cnn.batch = cfg.at("cnn_batch");
}

Schema detector_schema() {
    Schema s{
        {"corpus_dir", {KeyType::string, nullptr, "dataset directory"}},
        {"protocol", {KeyType::string, "P1", "protocol split to train on"}},
        {"detector", {KeyType::string, "patchnet_lite",
                      "patchnet_lite | stdn_lite | cnn_baseline"}},
        {"seed", {KeyType::integer, 1, "training seed"}},
    };
    add_detector_keys(s);
    return s;
}

Schema attack_schema() {
    Schema s{
        {"corpus_dir", {KeyType::string, nullptr, "evaluation dataset directory"}},
        {"external_dir", {KeyType::string, nullptr, "external trigger corpus directory"}},
        {"extractor_ckpt", {KeyType::string, nullptr, "feature extractor checkpoint"}},
        {"embedder_ckpt",
         {KeyType::string, "", "hiding network checkpoint (required for proposed)"}},
        {"protocols", {KeyType::string, "P3", "comma-separated protocol names"}},
        {"detectors", {KeyType::string, "patchnet_lite", "comma-separated detector kinds"}},
        {"generators", {KeyType::string, "proposed", "comma-separated generator kinds"}},
        {"rates", {KeyType::string, "0,0.25,0.5", "comma-separated injection rates"}},
        {"seeds", {KeyType::string, "1", "comma-separated seeds"}},
        {"trigger_id", {KeyType::string, "", "trigger sample id (empty = default pick)"}},
        {"reference_rate", {KeyType::real, 0.5, "rate for the quality-vs-ASR chart"}},
        {"tipim_epsilon", {KeyType::real, 12.0, "TIP-IM L-inf budget, 0-255 (paper 12.0)"}},
        {"tipim_gamma", {KeyType::real, 0.0, "TIP-IM naturalness weight (paper 0)"}},
        {"tipim_iters", {KeyType::integer, 50, "TIP-IM iterations"}},
        {"tipim_step", {KeyType::real, 0.0, "TIP-IM step, 0-255 (0 = 2*eps/iters)"}},
        {"lgc_epsilon", {KeyType::real, 4.0, "LGC L-inf budget, 0-255 (paper 4.0)"}},
        {"lgc_cutout_radius", {KeyType::integer, 0, "cutout radius px (0 = size/8)"}},
        {"lgc_iters", {KeyType::integer, 50, "LGC iterations"}},
        {"lgc_cutout_prob", {KeyType::real, 0.5, "per-landmark cutout probability"}},
        {"lgc_seed", {KeyType::integer, 13, "LGC cutout sampling seed"}},
    };
    add_detector_keys(s);
    return s;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_dataset(const std::string& config_path, const std::string& out_flag,
                int64_t seed_override) {
    const auto t0 = std::chrono::steady_clock::now();
    json cfg = load_config(config_path, dataset_schema());
    if (seed_override >= 0) cfg["seed"] = seed_override;
    synthface::DatasetConfig dc = dataset_config_from(cfg);
    const fs::path out = resolve_out(out_flag, "corpus");

    synthface::Dataset ds = synthface::build_dataset(dc);
    synthface::save_dataset(ds, out.string());

    RunManifest m;
    m.command = "dataset";
    m.config = cfg;
    m.master_seed = dc.seed;
    m.output_fingerprints["manifest.jsonl"] = file_fp(out / "manifest.jsonl");
    m.output_fingerprints["config.json"] = file_fp(out / "config.json");
    for (const auto& sp : ds.splits)
        m.output_fingerprints["splits/" + sp.name + ".json"] =
            file_fp(out / "splits" / (sp.name + ".json"));
    {
        io::Fnv1a h;
        for (const auto& s : ds.samples)
            h.update(s.image.data(), static_cast<size_t>(s.image.numel()) * sizeof(double));
        m.output_fingerprints["images"] = io::Fnv1a::hex(h.digest());
    }
    m.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.write(out);
    std::cout << "dataset: " << ds.samples.size() << " samples, " << ds.splits.size()
              << " splits -> " << out.string() << "\n";
    return 0;
}

int cmd_train_extractor(const json& cfg, const fs::path& out, RunManifest& m) {
    synthface::Dataset ds = synthface::load_dataset(cfg.at("corpus_dir"));
    features::ExtractorConfig ec;
    ec.embed_dim = cfg.at("embed_dim");
    ec.channels = cfg.at("channels");
    ec.margin = cfg.at("margin");
    ec.scale = cfg.at("scale");
    ec.learning_rate = cfg.at("learning_rate");
    ec.epochs = cfg.at("epochs");
    ec.batch = cfg.at("batch");
    ec.seed = cfg.at("seed").get<uint64_t>();
    m.master_seed = ec.seed;
    m.input_fingerprints["corpus"] = file_fp(fs::path(cfg.at("corpus_dir").get<std::string>()) /
                                             "manifest.jsonl");

    features::FeatureExtractor fe = features::train_identity_extractor(ds.samples, ec);
    core::save_checkpoint((out / "extractor.ckpt").string(), fe.to_checkpoint());
    {
        json side{{"kind", "feature_extractor"},
                  {"seed", ec.seed},
                  {"validation_margin", fe.validation_margin()},
                  {"config", cfg}};
        std::ofstream f(out / "extractor.meta.json", std::ios::trunc);
        f << side.dump(2) << "\n";
    }
    std::vector<io::Series> curve(1);
    curve[0].name = "train_loss";
    for (size_t i = 0; i < fe.training_curve().size(); ++i) {
        curve[0].x.push_back(static_cast<double>(i));
        curve[0].y.push_back(fe.training_curve()[i]);
    }
    io::write_series_csv((out / "curves.csv").string(), "epoch", "loss", curve);
    m.output_fingerprints["extractor.ckpt"] = file_fp(out / "extractor.ckpt");
    m.output_fingerprints["extractor.meta.json"] = file_fp(out / "extractor.meta.json");
    m.output_fingerprints["curves.csv"] = file_fp(out / "curves.csv");
    std::cout << "extractor: validation margin " << fe.validation_margin() << " -> "
              << (out / "extractor.ckpt").string() << "\n";
    return 0;
}

int cmd_train_embedder(const json& cfg, const fs::path& out, RunManifest& m) {
    synthface::Dataset ds = synthface::load_dataset(cfg.at("corpus_dir"));
    core::Checkpoint eck = load_ckpt_or_die(cfg.at("extractor_ckpt"), "extractor");
    features::FeatureExtractor fe = features::FeatureExtractor::from_checkpoint(eck);
    m.input_fingerprints["extractor.ckpt"] =
        file_fp(cfg.at("extractor_ckpt").get<std::string>());
    m.input_fingerprints["corpus"] = file_fp(fs::path(cfg.at("corpus_dir").get<std::string>()) /
                                             "manifest.jsonl");

    embedder::EmbedderConfig ec = embedder_config_from(cfg);
    m.master_seed = ec.seed;
    std::vector<synthface::FaceSample> covers, embeds;
    for (const auto& s : ds.samples) {
        if (s.label == synthface::Label::live) covers.push_back(s);
        embeds.push_back(s);
    }
    embedder::HidingNetwork hn =
        embedder::train_hiding_network(covers, embeds, fe, weights_from(cfg), ec);

    core::save_checkpoint((out / "embedder.ckpt").string(), hn.to_checkpoint());
    {
        const auto& hist = hn.history();
        json side{{"kind", "hiding_network"},
                  {"seed", ec.seed},
                  {"extractor_fingerprint", m.input_fingerprints["extractor.ckpt"]},
                  {"final_val_total", hist.empty() ? 0.0 : hist.back().val_total},
                  {"final_val_sim_trigger", hist.empty() ? 0.0 : hist.back().val_sim_trigger},
                  {"final_val_sim_cover", hist.empty() ? 0.0 : hist.back().val_sim_cover},
                  {"final_val_quality", hist.empty() ? 0.0 : hist.back().val_quality},
                  {"config", cfg}};
        std::ofstream f(out / "embedder.meta.json", std::ios::trunc);
        f << side.dump(2) << "\n";
    }
    std::vector<io::Series> curves(3);
    curves[0].name = "train_total";
    curves[1].name = "val_total";
    curves[2].name = "val_sim_trigger";
    for (size_t i = 0; i < hn.history().size(); ++i) {
        const auto& e = hn.history()[i];
        curves[0].x.push_back(static_cast<double>(i));
        curves[0].y.push_back(e.train_mean.total);
        curves[1].x.push_back(static_cast<double>(i));
        curves[1].y.push_back(e.val_total);
        curves[2].x.push_back(static_cast<double>(i));
        curves[2].y.push_back(e.val_sim_trigger);
    }
    io::write_series_csv((out / "curves.csv").string(), "epoch", "value", curves);
    m.output_fingerprints["embedder.ckpt"] = file_fp(out / "embedder.ckpt");
    m.output_fingerprints["embedder.meta.json"] = file_fp(out / "embedder.meta.json");
    m.output_fingerprints["curves.csv"] = file_fp(out / "curves.csv");
    std::cout << "embedder: final val total "
              << (hn.history().empty() ? 0.0 : hn.history().back().val_total) << " -> "
              << (out / "embedder.ckpt").string() << "\n";
    return 0;
}

int cmd_train_detector(const json& cfg, const fs::path& out, RunManifest& m) {
    synthface::Dataset ds = synthface::load_dataset(cfg.at("corpus_dir"));
    harness::AttackContext ctx;
    fill_detector_configs(cfg, ctx);
    const uint64_t seed = cfg.at("seed").get<uint64_t>();
    m.master_seed = seed;
    m.input_fingerprints["corpus"] = file_fp(fs::path(cfg.at("corpus_dir").get<std::string>()) /
                                             "manifest.jsonl");

    const auto& split = ds.split(cfg.at("protocol"));
    auto train = harness::split_list(ds, split.train);
    auto dev = harness::split_list(ds, split.dev);
    const auto kind = detectors::detector_kind_from_string(cfg.at("detector"));
    detectors::Detector det = [&] {
        switch (kind) {
            case detectors::DetectorKind::patchnet_lite:
                return detectors::train_patchnet_lite(train, dev, ctx.patchnet, seed);
            case detectors::DetectorKind::stdn_lite:
                return detectors::train_stdn_lite(train, dev, ctx.stdn, seed);
            default:
                return detectors::train_cnn_baseline(train, dev, ctx.cnn, seed);
        }
    }();

    core::save_checkpoint((out / "detector.ckpt").string(), det.to_checkpoint());
    {
        json side{{"kind", "detector"},
                  {"detector", cfg.at("detector")},
                  {"seed", seed},
                  {"threshold", det.threshold()},
                  {"dev_eer", det.manifest().dev_eer},
                  {"dev_acer", det.manifest().dev_acer},
                  {"config", cfg}};
        std::ofstream f(out / "detector.meta.json", std::ios::trunc);
        f << side.dump(2) << "\n";
    }
    std::vector<io::Series> curve(1);
    curve[0].name = "dev";
    curve[0].x = {0.0, 1.0};
    curve[0].y = {det.manifest().dev_eer, det.manifest().dev_acer};
    io::write_series_csv((out / "curves.csv").string(), "metric_index", "value", curve);
    m.output_fingerprints["detector.ckpt"] = file_fp(out / "detector.ckpt");
    m.output_fingerprints["detector.meta.json"] = file_fp(out / "detector.meta.json");
    m.output_fingerprints["curves.csv"] = file_fp(out / "curves.csv");
    std::cout << "detector " << cfg.at("detector").get<std::string>() << ": dev ACER "
              << det.manifest().dev_acer << " threshold " << det.threshold() << " -> "
              << (out / "detector.ckpt").string() << "\n";
    return 0;
}

void emit_attack_reports(const fs::path& out, const std::vector<harness::ExperimentResult>& results,
                         double reference_rate, RunManifest& m) {
    harness::write_summary_csv((out / "summary.csv").string(), results);
    m.output_fingerprints["summary.csv"] = file_fp(out / "summary.csv");

    // rate-vs-ACER and rate-vs-ASR series, averaged over seeds per
    // (protocol, detector, generator)
    struct Key {
        std::string p, d, g;
        bool operator<(const Key& o) const {
            return std::tie(p, d, g) < std::tie(o.p, o.d, o.g);
        }
    };
    std::map<Key, std::map<double, std::pair<double, int>>> acer, asr;
    std::map<std::string, std::map<double, std::pair<double, int>>> gen_quality, gen_asr;
    for (const auto& r : results)
        for (const auto& rec : r.records) {
            if (rec.failed) continue;
            const Key k{r.plan.protocol, r.detector_kind, r.plan.generator};
            auto& a = acer[k][rec.rate];
            a.first += rec.acer_after;
            a.second += 1;
            auto& s = asr[k][rec.rate];
            s.first += rec.asr;
            s.second += 1;
            if (rec.rate > 0) {
                auto& q = gen_quality[r.plan.generator][rec.rate];
                q.first += rec.mean_quality;
                q.second += 1;
            }
            auto& ga = gen_asr[r.plan.generator][rec.rate];
            ga.first += rec.asr;
            ga.second += 1;
        }
    auto to_series = [](const std::map<Key, std::map<double, std::pair<double, int>>>& m2) {
        std::vector<io::Series> out;
        for (const auto& [k, pts] : m2) {
            io::Series s;
            s.name = k.p + "/" + k.d + "/" + k.g;
            for (const auto& [x, acc] : pts) {
                s.x.push_back(x * 100.0);
                s.y.push_back(acc.first / acc.second * 100.0);
            }
            out.push_back(std::move(s));
        }
        return out;
    };
    const auto acer_series = to_series(acer);
    const auto asr_series = to_series(asr);
    io::write_series_csv((out / "acer_vs_rate.csv").string(), "injection_rate_pct",
                         "acer_pct", acer_series);
    io::write_svg_chart((out / "acer_vs_rate.svg").string(), "ACER vs injection rate",
                        "injection rate [%]", "ACER [%]", acer_series);
    io::write_series_csv((out / "asr_vs_rate.csv").string(), "injection_rate_pct", "asr_pct",
                         asr_series);
    io::write_svg_chart((out / "asr_vs_rate.svg").string(), "ASR vs injection rate",
                        "injection rate [%]", "ASR [%]", asr_series);

    // quality-vs-ASR points at the reference rate
    std::vector<metrics::PoisonQualityRecord> qrecs;
    std::vector<metrics::AsrRecord> arecs;
    for (const auto& [gen, pts] : gen_quality) {
        auto it = pts.find(reference_rate);
        auto ia = gen_asr[gen].find(reference_rate);
        if (it == pts.end() || ia == gen_asr[gen].end()) continue;
        qrecs.push_back({gen, it->second.first / it->second.second});
        arecs.push_back({gen, reference_rate, ia->second.first / ia->second.second});
    }
    std::vector<io::Series> qa_series;
    if (!qrecs.empty()) {
        metrics::QualityReport qr = metrics::quality_vs_asr(qrecs, arecs, reference_rate);
        for (const auto& p : qr.points) {
            io::Series s;
            s.name = p.method;
            s.x.push_back(p.mean_quality);
            s.y.push_back(p.asr * 100.0);
            qa_series.push_back(std::move(s));
        }
    }
    io::write_series_csv((out / "quality_vs_asr.csv").string(), "mean_quality", "asr_pct",
                         qa_series);
    io::write_svg_scatter((out / "quality_vs_asr.svg").string(),
                          "Poison quality vs ASR", "mean perceptual distance", "ASR [%]",
                          qa_series);
    for (const char* f : {"acer_vs_rate.csv", "acer_vs_rate.svg", "asr_vs_rate.csv",
                          "asr_vs_rate.svg", "quality_vs_asr.csv", "quality_vs_asr.svg"})
        m.output_fingerprints[f] = file_fp(out / f);
}

int cmd_attack(const std::string& config_path, const std::string& out_flag, bool resume,
               int64_t seed_override) {
    const auto t0 = std::chrono::steady_clock::now();
    json cfg = load_config(config_path, attack_schema());
    const fs::path out = resolve_out(out_flag, "attack");

    synthface::Dataset corpus = synthface::load_dataset(cfg.at("corpus_dir"));
    synthface::Dataset external = synthface::load_dataset(cfg.at("external_dir"));

    core::Checkpoint eck = load_ckpt_or_die(cfg.at("extractor_ckpt"), "extractor");
    features::FeatureExtractor fe = features::FeatureExtractor::from_checkpoint(eck);

    harness::AttackContext ctx;
    ctx.corpus = &corpus;
    ctx.external = &external;
    ctx.extractor = &fe;
    fill_detector_configs(cfg, ctx);
    ctx.tipim.epsilon = cfg.at("tipim_epsilon");
    ctx.tipim.gamma = cfg.at("tipim_gamma");
    ctx.tipim.iters = cfg.at("tipim_iters");
    ctx.tipim.step = cfg.at("tipim_step");
    ctx.lgc.epsilon = cfg.at("lgc_epsilon");
    ctx.lgc.cutout_radius = cfg.at("lgc_cutout_radius");
    ctx.lgc.iters = cfg.at("lgc_iters");
    ctx.lgc.cutout_prob = cfg.at("lgc_cutout_prob");
    ctx.lgc.seed = cfg.at("lgc_seed").get<uint64_t>();

    harness::SweepGrid grid;
    grid.protocols = split_csv(cfg.at("protocols"));
    for (const auto& d : split_csv(cfg.at("detectors")))
        grid.detector_kinds.push_back(detectors::detector_kind_from_string(d));
    grid.generators = split_csv(cfg.at("generators"));
    grid.rates = split_csv_reals(cfg.at("rates"));
    grid.seeds = split_csv_u64(cfg.at("seeds"));
    if (seed_override >= 0) grid.seeds = {static_cast<uint64_t>(seed_override)};
    grid.trigger_id = cfg.at("trigger_id");
    grid.store_dir = (out / "store").string();

    embedder::HidingNetwork hn;
    const std::string hn_path = cfg.at("embedder_ckpt");
    const bool needs_hn = std::find(grid.generators.begin(), grid.generators.end(),
                                    "proposed") != grid.generators.end();
    if (needs_hn) {
        if (hn_path.empty())
            throw PrereqError("generator \"proposed\" requires config key embedder_ckpt");
        hn = embedder::HidingNetwork::from_checkpoint(load_ckpt_or_die(hn_path, "embedder"));
        ctx.hn = &hn;
    } else if (!hn_path.empty() && fs::exists(hn_path)) {
        hn = embedder::HidingNetwork::from_checkpoint(load_ckpt_or_die(hn_path, "embedder"));
        ctx.hn = &hn;
    }

    RunManifest m;
    m.command = "attack";
    m.config = cfg;
    m.master_seed = grid.seeds.empty() ? 0 : grid.seeds.front();
    m.input_fingerprints["corpus"] =
        file_fp(fs::path(cfg.at("corpus_dir").get<std::string>()) / "manifest.jsonl");
    m.input_fingerprints["external"] =
        file_fp(fs::path(cfg.at("external_dir").get<std::string>()) / "manifest.jsonl");
    m.input_fingerprints["extractor.ckpt"] =
        file_fp(cfg.at("extractor_ckpt").get<std::string>());
    if (ctx.hn) m.input_fingerprints["embedder.ckpt"] = file_fp(hn_path);

    if (!resume && fs::exists(fs::path(grid.store_dir) / "cells"))
        fs::remove_all(fs::path(grid.store_dir) / "cells");

    std::vector<harness::ExperimentResult> results = harness::sweep(ctx, grid);
    emit_attack_reports(out, results, cfg.at("reference_rate"), m);

    int64_t failures = 0;
    for (const auto& r : results)
        for (const auto& rec : r.records)
            if (rec.failed) ++failures;

    m.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.outcome = failures ? "cell_failures" : "ok";
    m.write(out);

    int64_t n_records = 0;
    for (const auto& r : results) n_records += static_cast<int64_t>(r.records.size());
    std::cout << "attack: " << results.size() << " cells, " << n_records << " records, "
              << failures << " failures -> " << out.string() << "\n";
    if (failures) {
        for (const auto& r : results)
            for (const auto& rec : r.records)
                if (rec.failed)
                    std::cerr << "  failed: " << r.plan.protocol << "/" << r.detector_kind
                              << "/" << r.plan.generator << "/seed=" << r.plan.seed
                              << " rate=" << rec.rate << ": " << rec.error << "\n";
        return kExitCellFailure;
    }
    return 0;
}

int cmd_report(const std::string& store_flag, const std::string& out_flag) {
    const fs::path store(store_flag);
    if (!fs::exists(store / "cells"))
        throw PrereqError("no result store at " + store.string() + " (missing cells/)");
    std::vector<harness::ExperimentResult> results;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(store / "cells"))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        std::ifstream in(p);
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        results.push_back(harness::experiment_from_json(text));
    }
    const fs::path out = resolve_out(out_flag, "report");
    const auto t0 = std::chrono::steady_clock::now();
    RunManifest m;
    m.command = "report";
    m.config = json{{"store", store.string()}};
    emit_attack_reports(out, results, 0.5, m);
    m.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.write(out);
    std::cout << "report: " << results.size() << " cells -> " << out.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"backdoor-poisoning benchmark for face anti-spoofing detectors"};
    app.require_subcommand(1);

    std::string config_path, out_flag, train_kind, store_flag;
    int64_t seed_override = -1;
    bool resume = false;

    auto* ds = app.add_subcommand("dataset", "generate a synthetic corpus with protocol splits");
    ds->add_option("--config", config_path, "config file (JSON)")->required();
    ds->add_option("--out", out_flag, "output directory");
    ds->add_option("--seed", seed_override, "override the config seed");

    auto* tr = app.add_subcommand("train", "train an extractor, embedder, or detector");
    tr->add_option("kind", train_kind, "extractor | embedder | detector")->required();
    tr->add_option("--config", config_path, "config file (JSON)")->required();
    tr->add_option("--out", out_flag, "output directory");
    tr->add_option("--seed", seed_override, "override the config seed");

    auto* at = app.add_subcommand("attack", "run the poisoning sweep and emit reports");
    at->add_option("--config", config_path, "config file (JSON)")->required();
    at->add_option("--out", out_flag, "output directory");
    at->add_option("--seed", seed_override, "override the config seeds");
    at->add_flag("--resume", resume, "reuse completed cells from the store");

    auto* rp = app.add_subcommand("report", "regenerate summary and charts from a store");
    rp->add_option("store", store_flag, "attack store directory")->required();
    rp->add_option("--out", out_flag, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ds->parsed()) return cmd_dataset(config_path, out_flag, seed_override);
        if (tr->parsed()) {
            const auto t0 = std::chrono::steady_clock::now();
            RunManifest m;
            m.command = "train " + train_kind;
            int rc = 0;
            if (train_kind == "extractor") {
                json cfg = load_config(config_path, extractor_schema());
                if (seed_override >= 0) cfg["seed"] = seed_override;
                m.config = cfg;
                const fs::path out = resolve_out(out_flag, "extractor");
                rc = cmd_train_extractor(cfg, out, m);
                m.runtime_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
                m.write(out);
            } else if (train_kind == "embedder") {
                json cfg = load_config(config_path, embedder_schema());
                if (seed_override >= 0) cfg["seed"] = seed_override;
                m.config = cfg;
                const fs::path out = resolve_out(out_flag, "embedder");
                rc = cmd_train_embedder(cfg, out, m);
                m.runtime_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
                m.write(out);
            } else if (train_kind == "detector") {
                json cfg = load_config(config_path, detector_schema());
                if (seed_override >= 0) cfg["seed"] = seed_override;
                m.config = cfg;
                const fs::path out = resolve_out(out_flag, "detector");
                rc = cmd_train_detector(cfg, out, m);
                m.runtime_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
                m.write(out);
            } else {
                throw ConfigError("unknown train kind: " + train_kind +
                                  " (expected extractor, embedder, or detector)");
            }
            return rc;
        }
        if (at->parsed()) return cmd_attack(config_path, out_flag, resume, seed_override);
        if (rp->parsed()) return cmd_report(store_flag, out_flag);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const PrereqError& e) {
        std::cerr << "prerequisite error: " << e.what() << "\n";
        return kExitMissingPrereq;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
