#pragma once

#include "gapnet/grid.hpp"
#include "gapnet/inference.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace gapnet {

class ScoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct WeightParams {
    double center = 1.5;
    double scale = 0.4;
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// w(u) = Phi((u - center) / scale).
inline double weight_fn(double u, const WeightParams& p = {}) { return normal_cdf((u - p.center) / p.scale); }

/// Exact integral of w over [a, b].
double weight_integral(double a, double b, const WeightParams& p = {});

/// Threshold-weighted CRPS of an empirical ensemble against one observation,
/// integrated exactly between consecutive breakpoints.
double twcrps(std::vector<double> samples, double u_obs, const WeightParams& p = {});

struct ScoreReport {
    std::vector<Site> sites;
    std::vector<double> per_site;
    double mean = 0.0;

    /// "site_id,day,twcrps" lines followed by "mean_twcrps=<value>".
    std::string format() const;
};

/// Mean twCRPS over sites; observations are indexed like the distribution's sites.
ScoreReport averaged_score(const ExtremeDistribution& dist, const std::vector<double>& observations,
                           const WeightParams& p = {});

/// Historical cylinder extremes at each site's cells over every fully
/// observed window made entirely of training days.
ExtremeDistribution baseline_climatology(const AnomalyCube& observed, const CylinderIndex& cylinders,
                                         const SplitSpec& split, Aggregator aggregator);

}  // namespace gapnet
