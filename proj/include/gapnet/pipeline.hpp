#pragma once

#include "gapnet/autoencoder.hpp"
#include "gapnet/config.hpp"
#include "gapnet/grid.hpp"
#include "gapnet/inference.hpp"
#include "gapnet/resample.hpp"
#include "gapnet/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gapnet {

class PipelineError : public std::runtime_error {
public:
    PipelineError(const std::string& stage, const std::string& what)
        : std::runtime_error("stage '" + stage + "': " + what), stage_(stage) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct SynthParams {
    Index days = 730;
    Index width = 32;
    Index height = 64;
    double lat0 = 15.0;
    double lon0 = 38.0;
    double dlat = 0.25;
    double dlon = 0.25;
    Index regime_boundary = 510;
    double missing_before = 0.2;
    double missing_after = 0.6;
    Index sites = 40;
    Index waves = 6;
    double trend_per_year = 0.4;
    double seasonal_amplitude = 0.5;
    double noise_sd = 0.1;
    Index window_days = 7;
    double radius_km = 50.0;
    Index month_length = kDaysPerMonth;
    double target_mean = -0.0365;
    double target_sd = 0.683;
    Aggregator aggregator = Aggregator::max;
};

struct SynthData {
    GridGeometry geometry;
    AnomalyCube truth;     // complete field, mask = master
    AnomalyCube observed;  // truth under the two-regime original masks
    std::vector<Site> sites;
    std::vector<double> observations;  // truth cylinder extremes per site
};

/// Synthetic stand-in dataset: traveling waves, trend, seasonal cycle and
/// white noise over an irregular basin, standardized to the target marginal.
/// Original masks are month-constant with the regime's missing share.
SynthData synthesize(const SynthParams& params, std::uint64_t seed);

SynthParams synth_params(const RunConfig& config);

struct StageContext {
    RunConfig config;
    std::filesystem::path stage_dir;
    std::uint64_t seed = 1;
    Index jobs = 1;
    std::ostream* log = nullptr;
};

/// File locations inside a stage directory.
struct StagePaths {
    std::filesystem::path dataset, truth, geometry, sites, observations;
    std::filesystem::path extra_masks, mask_stats;
    std::filesystem::path models_dir, model_summary, tuning_table;
    std::filesystem::path extremes, saturation, climatology;
    std::filesystem::path score_report, score_summary;
    std::filesystem::path subensemble, report;

    static StagePaths make(const StageContext& ctx);
    std::filesystem::path model_file(Index id) const;
    std::filesystem::path model_log(Index id, Index iteration) const;
};

/// Row of models/summary.csv.
struct ModelRecord {
    Index id = 0;
    std::string label;
    std::string status;
    Index iterations = 0;
    Index selected = 0;
    Regularization hyper;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_hidden_loss = 0.0;
    double ratio = 0.0;

    double selection_score() const;
};

std::string format_model_summary(const std::vector<ModelRecord>& rows);
std::vector<ModelRecord> parse_model_summary(const std::string& text);
/// Index into `rows` of the lowest selection score.
std::size_t best_model(const std::vector<ModelRecord>& rows);

std::string format_sites(const std::vector<Site>& sites);
std::vector<Site> parse_sites(const std::string& text);
std::string format_observations(const std::vector<Site>& sites, const std::vector<double>& values);
std::vector<double> parse_observations(const std::string& text);

/// Mean twCRPS of the first M models of each ordering, M = 1..#models.
struct SubensemblePoint {
    std::string ordering;
    Index members = 0;
    double mean_twcrps = 0.0;
};
std::vector<SubensemblePoint> subensemble_curve(const ExtremeDistribution& dist,
                                                const std::vector<ModelRecord>& models,
                                                const std::vector<double>& observations,
                                                Index random_orderings, std::uint64_t seed);

void run_synth(const StageContext& ctx);
void run_masks(const StageContext& ctx);
void run_train(const StageContext& ctx);
void run_sample(const StageContext& ctx);
void run_score(const StageContext& ctx);
void run_report(const StageContext& ctx);

const std::vector<std::string>& stage_names();
void run_stage(const std::string& name, const StageContext& ctx);

}  // namespace gapnet
