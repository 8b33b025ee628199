#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fas/core/rng.hpp"
#include "fas/core/tensor.hpp"

namespace fas::synthface {

using fas::core::Rng;
using fas::core::Tensor;

enum class Label { live, spoof };
enum class Instrument { none, print_a, print_b, display_a, display_b };

const char* to_string(Label l);
const char* to_string(Instrument i);
Instrument instrument_from_string(const std::string& s);
Label label_from_string(const std::string& s);

inline bool is_print(Instrument i) {
    return i == Instrument::print_a || i == Instrument::print_b;
}
inline bool is_display(Instrument i) {
    return i == Instrument::display_a || i == Instrument::display_b;
}

// Normalized face geometry (image side = 1). Valid ranges are the generator's
// contract; rendered features stay inside the frame for any values in range.
struct Geometry {
    double face_rx, face_ry; // oval half-axes
    double eye_dx;           // half eye spacing
    double eye_y;            // eye row (from top)
    double eye_r;            // iris radius
    double nose_y;           // nose tip row
    double nose_w;           // nose shadow half-width
    double mouth_y;          // mouth row
    double mouth_w;          // mouth full width

    std::vector<double> as_vector() const {
        return {face_rx, face_ry, eye_dx, eye_y, eye_r, nose_y, nose_w, mouth_y, mouth_w};
    }
};

struct GeometryBounds {
    double lo[9];
    double hi[9];
};
// Declared bounds for Geometry::as_vector() order.
const GeometryBounds& geometry_bounds();

struct IdentityParams {
    int64_t subject_id = 0;
    Geometry geometry{};
    double skin_tone[3] = {0, 0, 0}; // RGB in [0,1]
    uint64_t texture_seed = 0;
};

// Five named 2-D points in pixel coordinates.
struct LandmarkSet {
    double left_eye[2], right_eye[2], nose_tip[2], mouth_left[2], mouth_right[2];

    std::vector<std::pair<double, double>> points() const {
        return {{left_eye[0], left_eye[1]},
                {right_eye[0], right_eye[1]},
                {nose_tip[0], nose_tip[1]},
                {mouth_left[0], mouth_left[1]},
                {mouth_right[0], mouth_right[1]}};
    }
};

struct FaceSample {
    Tensor image; // [3,H,W] in [0,1]
    Label label = Label::live;
    Instrument instrument = Instrument::none;
    int64_t subject_id = 0;
    int64_t session_id = 0;
    int64_t sensor_id = 0;
    std::string sample_id;
};

struct ProtocolSplit {
    std::string name;
    std::vector<std::string> train, dev, test;
    std::string held_out_description;
};

struct DatasetConfig {
    int64_t subjects = 20;
    int64_t sessions = 2;
    int64_t sensors = 2;
    int64_t frames = 1; // sibling renders per (subject, instrument, session, sensor)
    int64_t image_size = 64;
    uint64_t seed = 1;
    int64_t subject_offset = 0; // lets external corpora use disjoint subject ids
};

struct Dataset {
    DatasetConfig config;
    std::vector<FaceSample> samples;
    std::vector<ProtocolSplit> splits;
    std::unordered_map<std::string, size_t> index;

    const FaceSample& by_id(const std::string& id) const;
    FaceSample& by_id_mut(const std::string& id);
    void rebuild_index();
    const ProtocolSplit& split(const std::string& name) const;
};

IdentityParams make_identity(uint64_t seed);

// The identity a dataset uses for a given subject id; lets callers recover
// analytic landmarks for any corpus sample.
IdentityParams dataset_identity(const DatasetConfig& config, int64_t subject_id);

LandmarkSet landmarks(const IdentityParams& id, int64_t image_size);

FaceSample render_live(const IdentityParams& id, int64_t session_id, int64_t sensor_id,
                       int64_t image_size = 64, int64_t frame = 0);

// Throws std::invalid_argument for instrument == none.
FaceSample render_spoof(const IdentityParams& id, Instrument instrument,
                        int64_t session_id, int64_t sensor_id,
                        int64_t image_size = 64, int64_t frame = 0);

// Renders the full corpus (1 live + 4 spoof instruments per combination) and
// builds the P1/P2/P3 protocol splits. Throws for fewer than 4 subjects.
Dataset build_dataset(const DatasetConfig& config);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

} // namespace fas::synthface
