#pragma once

#include <string>

#include "fas/synthface.hpp"

namespace fas::detectors {

// One classification outcome. Ground-truth fields are copied from the sample
// so metric computation needs no dataset lookup.
struct Verdict {
    std::string sample_id;
    double live_score = 0.0; // in [0,1]
    synthface::Label decision = synthface::Label::spoof;
    synthface::Label truth_label = synthface::Label::spoof;
    synthface::Instrument truth_instrument = synthface::Instrument::none;
    int64_t truth_subject = 0;
};

} // namespace fas::detectors
