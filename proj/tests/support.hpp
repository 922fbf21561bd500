#pragma once

#include <random>
#include <vector>

#include "ghostseg/pipeline.hpp"

namespace ghostseg::testing {

/// Random sample with points spread over a few meters and standardized-looking features.
inline Sample random_sample(std::size_t n, std::size_t channels, std::uint64_t seed, double extent = 6.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(-extent, extent);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> amp(1e-4, 1e-2);
    std::uniform_int_distribution<int> lab(0, 5);
    Sample s;
    s.size = n;
    s.channels = channels;
    for (std::size_t i = 0; i < n; ++i) {
        s.positions.push_back(pos(rng));
        s.positions.push_back(pos(rng));
        for (std::size_t k = 0; k < channels; ++k) s.features.push_back(g(rng));
        s.amplitude.push_back(amp(rng));
        s.labels.push_back(static_cast<Label>(lab(rng)));
        s.duplicate.push_back(false);
    }
    s.recording_id = "rec";
    return s;
}

}  // namespace ghostseg::testing
