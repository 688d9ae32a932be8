#pragma once

#include "gapnet/grid.hpp"

#include <cstdint>
#include <vector>

namespace gapnet {

class MaskGenError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parameters of the stochastic diffusion that grows additional damage.
///
/// Each month the generator drops `seeds_count` nuclei on observed master
/// cells, then repeatedly turns an observed cell bordering the missing region
/// into a missing one, picking cells with probability proportional to
/// 1 + growth_bias * (number of missing 4-neighbours). Growth stops once the
/// month's total missing fraction reaches its target.
struct MaskGenParams {
    /// Total missing fraction (existing plus new, relative to the master
    /// region) aimed for every month.
    double target_missing_fraction = 0.6;
    /// When > 0, overrides the fixed target: each month removes this share of
    /// the data still observed, i.e. target = 1 - (1 - existing) * (1 - removal).
    double removal_fraction = 0.0;
    Index seeds_count = 3;
    double growth_bias = 2.0;
    Index max_iterations = 10'000'000;
    std::uint64_t rng_seed = 0;
    Index month_length = kDaysPerMonth;
    /// A month is redrawn (with a derived seed) when its largest 4-connected
    /// missing component covers less than this share of all missing cells.
    double min_component_share = 0.7;
    Index max_attempts = 16;
};

/// Masks m' with m' <= existing, constant over each month block.
MaskCube generate_masks(const GridGeometry& geometry, const MaskCube& existing,
                        const MaskGenParams& params);

struct MaskStats {
    std::vector<double> missing_fraction;          // per day, relative to master
    std::vector<double> largest_component_share;   // per day; 0 when nothing is missing
    bool month_constant = true;
};

MaskStats mask_stats(const MaskCube& mask, const GridGeometry& geometry,
                     Index month_length = kDaysPerMonth);

/// Share of the set cells of `missing` held by its largest 4-connected
/// component; 0 for an empty set.
double largest_component_share(const MaskPlane& missing);

/// Total missing fraction after removing `removal` of the still-observed data.
inline double composite_missing_fraction(double existing_missing, double removal) {
    return 1.0 - (1.0 - existing_missing) * (1.0 - removal);
}

}  // namespace gapnet
