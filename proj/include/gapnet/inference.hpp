#pragma once

#include "gapnet/autoencoder.hpp"
#include "gapnet/grid.hpp"
#include "gapnet/resample.hpp"
#include "gapnet/training.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gapnet {

class InferenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Aggregator { max, min, mean };
const char* to_string(Aggregator a);
Aggregator parse_aggregator(const std::string& text);

/// Full-resolution observations plus, when the models run on a reduced
/// footprint, the reduced view they were trained on.
struct InferenceData {
    const AnomalyCube& observed;
    const MaskPlane& master;
    Footprint footprint;
    const ReducedData* reduced = nullptr;  // required unless footprint.identity()
};

/// One stochastic reconstruction: noise is imputed under the original mask,
/// the model runs in eval mode, and the prediction is restored to full
/// resolution. Only `days` are computed (all days when empty); the result's
/// mask marks master cells of computed days.
AnomalyCube sample_reconstruction(Autoencoder<float>& model, const InferenceData& data,
                                  const NoiseParams& noise, std::uint64_t seed,
                                  const std::vector<Index>& days = {});

/// Observed cells from the observations, unobserved master cells from the
/// prediction, zero elsewhere. The result's mask is the master region.
AnomalyCube blend(const AnomalyCube& observed, const MaskPlane& master, const AnomalyCube& prediction);

/// Aggregate of `cube` over the cylinder's cells and days [day, day + window).
double cylinder_extreme(const AnomalyCube& cube, const CylinderSite& site, Index window_days,
                        Aggregator aggregator);

struct ExtremeSample {
    Index model_id = 0;
    Index sample_id = 0;
    double value = 0.0;
};

/// Per-site samples of the cylinder extreme, in (model, sample) order.
struct ExtremeDistribution {
    std::vector<Site> sites;
    std::vector<std::vector<ExtremeSample>> samples;

    std::vector<double> values(std::size_t site) const;
    /// Copy restricted to the listed models and the first `max_samples` samples of each.
    ExtremeDistribution subset(const std::vector<Index>& models, Index max_samples = -1) const;
};

/// Days touched by any cylinder window.
std::vector<Index> cylinder_days(const CylinderIndex& cylinders);

/// K reconstructions per model, blended and reduced to cylinder extremes.
/// Sample k of model m uses seed derive_seed(root_seed, "sample", m, k).
/// Models are spread over `jobs` threads; results do not depend on `jobs`.
ExtremeDistribution ensemble_distribution(std::vector<Autoencoder<float>*> models,
                                          const std::vector<Index>& model_ids,
                                          const InferenceData& data, Index samples_per_model,
                                          const CylinderIndex& cylinders, Aggregator aggregator,
                                          const NoiseParams& noise, std::uint64_t root_seed,
                                          Index jobs = 1);

/// "site_id,day,sample_id,model_id,extreme_value" table.
std::string format_extremes(const ExtremeDistribution& dist);
ExtremeDistribution parse_extremes(const std::string& text);

}  // namespace gapnet
