#pragma once

#include "gapnet/grid.hpp"
#include "gapnet/maskgen.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace fixtures {

using gapnet::Index;

// Small smooth dataset: a drifting wave plus noise, with a roving square gap
// as the original mask and month-constant extra damage on top.
struct TinyData {
    gapnet::GridGeometry geometry;
    gapnet::AnomalyCube observed;
    gapnet::MaskCube extra;
};

inline TinyData tiny_data(Index width = 8, Index height = 8, Index days = 60, std::uint64_t seed = 5) {
    TinyData d;
    d.geometry = gapnet::GridGeometry::regular(width, height, 20.0, 38.0, 0.25, 0.25);
    d.geometry.master(height - 1, 0) = 0;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, 0.05);
    d.observed = gapnet::AnomalyCube(days, width, height);
    for (Index t = 0; t < days; ++t) {
        const Index gr = t % (height - 2), gc = (3 * t) % (width - 2);
        for (Index r = 0; r < height; ++r) {
            for (Index c = 0; c < width; ++c) {
                const double phase = 2 * std::numbers::pi * (static_cast<double>(c + r) / 8.0 + static_cast<double>(t) / 20.0);
                d.observed(t, r, c) = static_cast<float>(0.7 * std::sin(phase) + jitter(rng));
                const bool gap = r >= gr && r < gr + 2 && c >= gc && c < gc + 2;
                d.observed.mask()(t, r, c) = (!gap && d.geometry.master(r, c)) ? 1 : 0;
            }
        }
    }
    gapnet::MaskGenParams p;
    p.removal_fraction = 0.3;
    p.rng_seed = seed;
    p.min_component_share = 0.0;
    p.month_length = 10;
    d.extra = gapnet::generate_masks(d.geometry, d.observed.mask(), p);
    return d;
}

}  // namespace fixtures
