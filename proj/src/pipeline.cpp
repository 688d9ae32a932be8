#include "gapnet/pipeline.hpp"

#include "gapnet/codec.hpp"
#include "gapnet/maskgen.hpp"
#include "gapnet/nn/checkpoint.hpp"
#include "gapnet/scoring.hpp"
#include "gapnet/seed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace gapnet {

// ---------------------------------------------------------------- synthesis

SynthParams synth_params(const RunConfig& c) {
    SynthParams p;
    p.days = c.integer("synth.days");
    p.width = c.integer("synth.width");
    p.height = c.integer("synth.height");
    p.lat0 = c.real("synth.lat0");
    p.lon0 = c.real("synth.lon0");
    p.dlat = c.real("synth.dlat");
    p.dlon = c.real("synth.dlon");
    p.regime_boundary = c.integer("split.regime_boundary");
    p.missing_before = c.real("synth.missing_before");
    p.missing_after = c.real("synth.missing_after");
    p.sites = c.integer("synth.sites");
    p.waves = c.integer("synth.waves");
    p.trend_per_year = c.real("synth.trend_per_year");
    p.seasonal_amplitude = c.real("synth.seasonal_amplitude");
    p.noise_sd = c.real("synth.noise_sd");
    p.window_days = c.integer("data.window_days");
    p.radius_km = c.real("data.radius_km");
    p.month_length = c.integer("data.month_length");
    p.target_mean = c.real("noise.mu");
    p.target_sd = c.real("noise.sigma");
    p.aggregator = parse_aggregator(c.text("sample.aggregator"));
    return p;
}

namespace {

MaskPlane basin_mask(Index width, Index height) {
    MaskPlane m = MaskPlane::Zero(height, width);
    const double w = static_cast<double>(width);
    const double h = static_cast<double>(height);
    for (Index r = 0; r < height; ++r) {
        const double y = static_cast<double>(r) / h;
        const double centre = 0.5 * w + 0.18 * w * std::sin(2.0 * std::numbers::pi * 1.3 * y);
        const double half = 0.36 * w + 0.08 * w * std::cos(2.0 * std::numbers::pi * 2.1 * y);
        for (Index c = 0; c < width; ++c) {
            const double x = static_cast<double>(c) + 0.5;
            // A small island in the lower third.
            const double iy = (static_cast<double>(r) - 0.62 * h) / 2.5;
            const double ix = (x - centre) / 2.0;
            const bool island = iy * iy + ix * ix < 1.0;
            m(r, c) = (std::abs(x - centre) <= half && !island) ? 1 : 0;
        }
    }
    return m;
}

MaskCube regime_masks(const GridGeometry& g, const SynthParams& p, std::uint64_t seed) {
    const MaskCube all(p.days, p.width, p.height, 1);
    MaskGenParams mp;
    mp.seeds_count = 1;
    mp.growth_bias = 2.0;
    mp.month_length = p.month_length;
    mp.min_component_share = 0.0;
    mp.max_attempts = 1;
    mp.target_missing_fraction = p.missing_before;
    mp.rng_seed = derive_seed(seed, "synth-mask", 0);
    const MaskCube before = generate_masks(g, all, mp);
    mp.target_missing_fraction = p.missing_after;
    mp.rng_seed = derive_seed(seed, "synth-mask", 1);
    const MaskCube after = generate_masks(g, all, mp);
    MaskCube out(p.days, p.width, p.height, 0);
    for (Index t = 0; t < p.days; ++t) {
        const Index month_start = month_of(t, p.month_length) * p.month_length;
        out.day(t) = month_start >= p.regime_boundary ? after.day(t) : before.day(t);
    }
    return out;
}

}  // namespace

SynthData synthesize(const SynthParams& p, std::uint64_t seed) {
    if (p.days < p.window_days || p.width < 4 || p.height < 4) throw GridError("synthesize: grid too small");
    SynthData out;
    out.geometry = GridGeometry::regular(p.width, p.height, p.lat0, p.lon0, p.dlat, p.dlon);
    out.geometry.master = basin_mask(p.width, p.height);
    out.geometry.validate();
    const MaskPlane& master = out.geometry.master;

    std::mt19937_64 rng(derive_seed(seed, "synth-field"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    struct Wave {
        double amp, kx, ky, omega, phase;
    };
    std::vector<Wave> waves;
    for (Index j = 0; j < p.waves; ++j) {
        const double lambda = 10.0 + 30.0 * unit(rng);
        const double theta = 2.0 * std::numbers::pi * unit(rng);
        const double period = 15.0 + 75.0 * unit(rng);
        const double k = 2.0 * std::numbers::pi / lambda;
        waves.push_back({0.5 + unit(rng), k * std::cos(theta), k * std::sin(theta),
                         2.0 * std::numbers::pi / period, 2.0 * std::numbers::pi * unit(rng)});
    }
    double wave_var = 0.0;
    for (const auto& w : waves) wave_var += 0.5 * w.amp * w.amp;
    const double wave_scale = wave_var > 0.0 ? 1.0 / std::sqrt(wave_var) : 0.0;

    std::normal_distribution<double> white(0.0, p.noise_sd);
    const Index plane = p.width * p.height;
    Eigen::ArrayXd raw = Eigen::ArrayXd::Zero(p.days * plane);
    for (Index t = 0; t < p.days; ++t) {
        const double td = static_cast<double>(t);
        const double trend = p.trend_per_year * td / static_cast<double>(kDaysPerYear);
        for (Index r = 0; r < p.height; ++r) {
            const double season = p.seasonal_amplitude *
                                  std::sin(2.0 * std::numbers::pi * td / static_cast<double>(kDaysPerYear) +
                                           0.03 * static_cast<double>(r));
            for (Index c = 0; c < p.width; ++c) {
                if (!master(r, c)) continue;
                double v = 0.0;
                for (const auto& w : waves) {
                    v += w.amp * std::sin(w.kx * static_cast<double>(c) + w.ky * static_cast<double>(r) -
                                          w.omega * td + w.phase);
                }
                raw[t * plane + r * p.width + c] = v * wave_scale + season + trend + white(rng);
            }
        }
    }
    // Standardize over master cells.
    const double n = static_cast<double>(p.days * out.geometry.master_count());
    double mean = 0.0;
    for (Index t = 0; t < p.days; ++t) {
        for (Index k = 0; k < plane; ++k) {
            if (master(k / p.width, k % p.width)) mean += raw[t * plane + k];
        }
    }
    mean /= n;
    double var = 0.0;
    for (Index t = 0; t < p.days; ++t) {
        for (Index k = 0; k < plane; ++k) {
            if (master(k / p.width, k % p.width)) var += (raw[t * plane + k] - mean) * (raw[t * plane + k] - mean);
        }
    }
    const double sd = std::sqrt(var / n);
    MaskCube master_cube(p.days, p.width, p.height, 0);
    for (Index t = 0; t < p.days; ++t) master_cube.day(t) = master;
    Eigen::ArrayXf values = Eigen::ArrayXf::Zero(p.days * plane);
    for (Index i = 0; i < values.size(); ++i) {
        if (master_cube.bits()[i]) {
            values[i] = static_cast<float>(p.target_mean + p.target_sd * (raw[i] - mean) / sd);
        }
    }
    out.truth = AnomalyCube(values, master_cube);

    const MaskCube orig = regime_masks(out.geometry, p, seed);
    Eigen::ArrayXf observed = values * orig.bits().cast<float>();
    out.observed = AnomalyCube(observed, orig);

    // Sites: late-regime days at cells missing from the original masks.
    std::mt19937_64 site_rng(derive_seed(seed, "synth-sites"));
    const Index first_day = std::max<Index>(p.regime_boundary, 0);
    const Index last_day = p.days - p.window_days;
    if (p.sites > 0 && first_day > last_day) throw GridError("synthesize: no room for sites after the regime boundary");
    for (Index s = 0; s < p.sites; ++s) {
        std::uniform_int_distribution<Index> pick_day(first_day, last_day);
        const Index day = pick_day(site_rng);
        std::vector<Index> candidates;
        for (Index k = 0; k < plane; ++k) {
            const Index r = k / p.width, c = k % p.width;
            if (master(r, c) && !orig(day, r, c)) candidates.push_back(k);
        }
        if (candidates.empty()) {
            for (Index k = 0; k < plane; ++k) {
                if (master(k / p.width, k % p.width)) candidates.push_back(k);
            }
        }
        std::uniform_int_distribution<std::size_t> pick_cell(0, candidates.size() - 1);
        const Index k = candidates[pick_cell(site_rng)];
        out.sites.push_back({day, k / p.width, k % p.width});
    }
    const CylinderIndex cyl = build_cylinders(out.geometry, out.sites, p.days, p.radius_km, p.window_days);
    for (const auto& c : cyl.sites) out.observations.push_back(cylinder_extreme(out.truth, c, p.window_days, p.aggregator));
    return out;
}

// ------------------------------------------------------------------ tables

namespace {

std::vector<std::vector<std::string>> csv_rows(const std::string& text, const std::string& header,
                                               const std::string& what) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != header) throw GridError(what + ": expected header '" + header + "'");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

double to_real(const std::string& s, const std::string& what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw GridError(what + ": bad number '" + s + "'");
    return v;
}

Index to_index(const std::string& s, const std::string& what) {
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0') throw GridError(what + ": bad integer '" + s + "'");
    return static_cast<Index>(v);
}

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string format_sites(const std::vector<Site>& sites) {
    std::string out = "site_id,day,row,col\n";
    for (std::size_t i = 0; i < sites.size(); ++i) {
        out += std::to_string(i) + "," + std::to_string(sites[i].day) + "," + std::to_string(sites[i].row) + "," +
               std::to_string(sites[i].col) + "\n";
    }
    return out;
}

std::vector<Site> parse_sites(const std::string& text) {
    std::vector<Site> out;
    for (const auto& r : csv_rows(text, "site_id,day,row,col", "sites table")) {
        if (r.size() != 4 || to_index(r[0], "sites table") != static_cast<Index>(out.size())) {
            throw GridError("sites table: malformed row " + std::to_string(out.size()));
        }
        out.push_back({to_index(r[1], "sites table"), to_index(r[2], "sites table"), to_index(r[3], "sites table")});
    }
    return out;
}

std::string format_observations(const std::vector<Site>& sites, const std::vector<double>& values) {
    std::string out = "site_id,day,observed_extreme\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        out += std::to_string(i) + "," + std::to_string(sites[i].day) + "," + g17(values[i]) + "\n";
    }
    return out;
}

std::vector<double> parse_observations(const std::string& text) {
    std::vector<double> out;
    for (const auto& r : csv_rows(text, "site_id,day,observed_extreme", "observations table")) {
        if (r.size() != 3 || to_index(r[0], "observations table") != static_cast<Index>(out.size())) {
            throw GridError("observations table: malformed row " + std::to_string(out.size()));
        }
        out.push_back(to_real(r[2], "observations table"));
    }
    return out;
}

double ModelRecord::selection_score() const {
    return std::isfinite(val_hidden_loss) ? val_hidden_loss : val_loss;
}

static const char* kSummaryHeader =
    "model_id,label,status,iterations,selected,dropout,weight_decay,batch_size,train_loss,val_loss,"
    "val_hidden_loss,ratio";

std::string format_model_summary(const std::vector<ModelRecord>& rows) {
    std::string out = std::string(kSummaryHeader) + "\n";
    for (const auto& m : rows) {
        out += std::to_string(m.id) + "," + m.label + "," + m.status + "," + std::to_string(m.iterations) + "," +
               std::to_string(m.selected) + "," + g17(m.hyper.dropout) + "," + g17(m.hyper.weight_decay) + "," +
               std::to_string(m.hyper.batch_size) + "," + g17(m.train_loss) + "," + g17(m.val_loss) + "," +
               g17(m.val_hidden_loss) + "," + g17(m.ratio) + "\n";
    }
    return out;
}

std::vector<ModelRecord> parse_model_summary(const std::string& text) {
    std::vector<ModelRecord> out;
    const std::string what = "model summary";
    for (const auto& r : csv_rows(text, kSummaryHeader, what)) {
        if (r.size() != 12) throw GridError(what + ": malformed row");
        ModelRecord m;
        m.id = to_index(r[0], what);
        m.label = r[1];
        m.status = r[2];
        m.iterations = to_index(r[3], what);
        m.selected = to_index(r[4], what);
        m.hyper = {to_real(r[5], what), to_real(r[6], what), to_index(r[7], what)};
        m.train_loss = to_real(r[8], what);
        m.val_loss = to_real(r[9], what);
        m.val_hidden_loss = to_real(r[10], what);
        m.ratio = to_real(r[11], what);
        out.push_back(m);
    }
    return out;
}

std::size_t best_model(const std::vector<ModelRecord>& rows) {
    if (rows.empty()) throw GridError("best_model: no models");
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].selection_score() < rows[best].selection_score()) best = i;
    }
    return best;
}

std::vector<SubensemblePoint> subensemble_curve(const ExtremeDistribution& dist,
                                                const std::vector<ModelRecord>& models,
                                                const std::vector<double>& observations,
                                                Index random_orderings, std::uint64_t seed) {
    std::vector<std::size_t> sorted(models.size());
    std::iota(sorted.begin(), sorted.end(), 0);
    std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
        return models[a].selection_score() < models[b].selection_score();
    });
    auto score_prefix = [&](const std::vector<std::size_t>& order, Index m) {
        std::vector<Index> ids;
        for (Index i = 0; i < m; ++i) ids.push_back(models[order[static_cast<std::size_t>(i)]].id);
        return averaged_score(dist.subset(ids), observations).mean;
    };
    std::vector<SubensemblePoint> out;
    const auto n = static_cast<Index>(models.size());
    for (Index m = 1; m <= n; ++m) out.push_back({"sorted", m, score_prefix(sorted, m)});
    std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
    std::mt19937_64 rng(derive_seed(seed, "report-order"));
    for (Index r = 0; r < random_orderings; ++r) {
        std::vector<std::size_t> order = sorted;
        std::shuffle(order.begin(), order.end(), rng);
        for (Index m = 1; m <= n; ++m) acc[static_cast<std::size_t>(m - 1)] += score_prefix(order, m);
    }
    if (random_orderings > 0) {
        for (Index m = 1; m <= n; ++m) {
            out.push_back({"random", m, acc[static_cast<std::size_t>(m - 1)] / static_cast<double>(random_orderings)});
        }
    }
    return out;
}

// ------------------------------------------------------------------ stages

StagePaths StagePaths::make(const StageContext& ctx) {
    const auto& c = ctx.config;
    const fs::path d = ctx.stage_dir;
    auto pick = [&](const char* key, const fs::path& fallback) {
        const std::string v = c.text(key);
        return v.empty() ? fallback : fs::path(v);
    };
    StagePaths p;
    p.dataset = pick("data.dataset", d / "data" / "dataset.gcub");
    p.truth = d / "data" / "truth.gcub";
    p.geometry = pick("data.geometry", d / "data" / "geometry.csv");
    p.sites = pick("data.sites", d / "data" / "sites.csv");
    p.observations = pick("data.observations", d / "data" / "observations.csv");
    p.extra_masks = d / "masks" / "extra.gcub";
    p.mask_stats = d / "masks" / "stats.csv";
    p.models_dir = d / "models";
    p.model_summary = d / "models" / "summary.csv";
    p.tuning_table = d / "models" / "tuning.csv";
    p.extremes = d / "samples" / "extremes.csv";
    p.saturation = d / "samples" / "best_saturation.csv";
    p.climatology = d / "samples" / "climatology.csv";
    p.score_report = d / "score" / "report.csv";
    p.score_summary = d / "score" / "summary.csv";
    p.subensemble = d / "report" / "subensemble.csv";
    p.report = d / "report" / "report.txt";
    return p;
}

fs::path StagePaths::model_file(Index id) const { return models_dir / ("model_" + std::to_string(id) + ".gpar"); }

fs::path StagePaths::model_log(Index id, Index iteration) const {
    return models_dir / ("model_" + std::to_string(id) + "_iter" + std::to_string(iteration) + ".log");
}

namespace {

void say(const StageContext& ctx, const std::string& msg) {
    if (ctx.log) *ctx.log << msg << std::endl;
}

void require(const std::string& stage, const fs::path& path, const std::string& producer) {
    if (!fs::exists(path)) {
        throw PipelineError(stage, "missing upstream artifact " + path.string() + " (produced by '" + producer + "')");
    }
}

GridGeometry load_geometry(const StageContext& ctx, const StagePaths& p, const std::string& stage) {
    require(stage, p.geometry, "synth");
    GridGeometry g = read_geometry(p.geometry);
    const auto& c = ctx.config;
    const std::string metric = c.text("data.metric");
    if (metric == "haversine") g.metric = DistanceMetric::haversine;
    else if (metric == "cell_pitch") g.metric = DistanceMetric::cell_pitch;
    else throw RunConfigError("data.metric must be haversine or cell_pitch, got '" + metric + "'");
    g.cell_pitch_km = c.real("data.cell_pitch_km");
    g.skew_period = c.integer("data.skew_period");
    g.downsample_factor = c.integer("data.downsample_factor");
    return g;
}

Footprint footprint(const RunConfig& c) {
    Footprint f;
    f.skew.period = c.integer("data.skew_period");
    f.skew_width = c.integer("data.skew_width");
    f.factor = c.integer("data.downsample_factor");
    f.valid_threshold = c.real("data.valid_threshold");
    if (f.factor < 1) throw RunConfigError("data.downsample_factor must be >= 1");
    return f;
}

SplitSpec split_from(const RunConfig& c, Index days) {
    const double f0 = c.real("split.fraction_before");
    return make_split(days, c.integer("split.regime_boundary"), {f0, 1.0 - f0}, c.integer("split.validation_days"));
}

NoiseParams noise_from(const RunConfig& c) {
    NoiseParams n{c.real("noise.mu"), c.real("noise.sigma")};
    n.validate();
    return n;
}

AutoencoderConfig base_architecture(const RunConfig& c, Index width, Index height) {
    AutoencoderConfig a;
    a.d_ch = c.integer("model.d_ch");
    a.n_days = c.integer("model.n_days");
    a.use_posenc = c.boolean("model.use_posenc");
    a.include_masks = c.boolean("model.include_masks");
    a.width = width;
    a.height = height;
    return a;
}

TrainOptions train_options(const RunConfig& c) {
    TrainOptions o;
    o.epochs = c.integer("optim.epochs");
    o.batch_size = c.integer("optim.batch_size");
    o.max_lr = c.real("optim.max_lr");
    o.weight_decay = c.real("optim.weight_decay");
    o.dropout = c.real("optim.dropout");
    o.beta1 = c.real("optim.beta1");
    o.beta2 = c.real("optim.beta2");
    o.eps = c.real("optim.eps");
    o.flat_fraction = c.real("optim.flat_fraction");
    o.loss = parse_loss_norm(c.text("optim.loss"));
    o.noise = noise_from(c);
    return o;
}

TuneOptions tune_options(const RunConfig& c) {
    TuneOptions t;
    t.max_iterations = c.integer("tune.max_iterations");
    t.band_low = c.real("tune.band_low");
    t.band_high = c.real("tune.band_high");
    t.dropout_step = c.real("tune.dropout_step");
    t.max_dropout = c.real("tune.max_dropout");
    t.weight_decay_factor = c.real("tune.weight_decay_factor");
    t.min_weight_decay = c.real("tune.min_weight_decay");
    t.batch_step = c.integer("tune.batch_step");
    t.min_batch = c.integer("tune.min_batch");
    return t;
}

struct LoadedData {
    GridGeometry geometry;
    AnomalyCube observed;
    Footprint fp;
    ReducedData reduced;
    bool is_reduced = false;

    const AnomalyCube& model_cube() const { return is_reduced ? reduced.cube : observed; }
    const MaskPlane& model_master() const { return is_reduced ? reduced.master : geometry.master; }
};

LoadedData load_data(const StageContext& ctx, const StagePaths& p, const std::string& stage,
                     const MaskCube* extra) {
    LoadedData d;
    d.geometry = load_geometry(ctx, p, stage);
    require(stage, p.dataset, "synth");
    d.observed = read_cube(p.dataset);
    if (d.observed.width() != d.geometry.width || d.observed.height() != d.geometry.height) {
        throw PipelineError(stage, "dataset and geometry shapes differ");
    }
    d.fp = footprint(ctx.config);
    d.is_reduced = !d.fp.identity();
    if (d.is_reduced) d.reduced = reduce_dataset(d.observed, extra, d.geometry.master, d.fp);
    return d;
}

void write_text(const fs::path& path, const std::string& text) { write_file(path, text); }

std::vector<std::unique_ptr<Autoencoder<float>>> load_models(const StageContext& ctx, const StagePaths& p,
                                                             const std::vector<ModelRecord>& records,
                                                             const LoadedData& d, const std::string& stage) {
    const AutoencoderConfig base =
        base_architecture(ctx.config, d.model_cube().width(), d.model_cube().height());
    std::vector<std::unique_ptr<Autoencoder<float>>> models;
    for (const auto& r : records) {
        require(stage, p.model_file(r.id), "train");
        auto m = std::make_unique<Autoencoder<float>>(config_from_label(r.label, base), 0);
        m->load_state(nn::read_params(p.model_file(r.id)));
        models.push_back(std::move(m));
    }
    return models;
}

}  // namespace

void run_synth(const StageContext& ctx) {
    const StagePaths p = StagePaths::make(ctx);
    const SynthParams sp = synth_params(ctx.config);
    say(ctx, "synth: generating " + std::to_string(sp.days) + " days on " + std::to_string(sp.width) + "x" +
                 std::to_string(sp.height));
    const SynthData s = synthesize(sp, ctx.seed);
    write_cube(p.dataset, s.observed);
    write_cube(p.truth, s.truth);
    write_geometry(p.geometry, s.geometry);
    write_text(p.sites, format_sites(s.sites));
    write_text(p.observations, format_observations(s.sites, s.observations));
}

void run_masks(const StageContext& ctx) {
    const StagePaths p = StagePaths::make(ctx);
    const GridGeometry g = load_geometry(ctx, p, "masks");
    require("masks", p.dataset, "synth");
    const AnomalyCube observed = read_cube(p.dataset);
    const auto& c = ctx.config;
    MaskGenParams mp;
    mp.removal_fraction = c.real("maskgen.removal_fraction");
    mp.target_missing_fraction = c.real("maskgen.target_missing_fraction");
    mp.seeds_count = c.integer("maskgen.seeds_count");
    mp.growth_bias = c.real("maskgen.growth_bias");
    mp.max_iterations = c.integer("maskgen.max_iterations");
    mp.min_component_share = c.real("maskgen.min_component_share");
    mp.max_attempts = c.integer("maskgen.max_attempts");
    mp.month_length = c.integer("data.month_length");
    mp.rng_seed = derive_seed(ctx.seed, "maskgen");
    say(ctx, "masks: generating additional damage");
    MaskCube extra;
    try {
        extra = generate_masks(g, observed.mask(), mp);
    } catch (const MaskGenError& e) {
        throw PipelineError("masks", e.what());
    }
    write_mask(p.extra_masks, extra);
    const MaskStats orig = mask_stats(observed.mask(), g, mp.month_length);
    const MaskStats ext = mask_stats(extra, g, mp.month_length);
    std::string table = "day,original_missing,total_missing,largest_component_share\n";
    for (Index t = 0; t < observed.days(); ++t) {
        const auto i = static_cast<std::size_t>(t);
        table += std::to_string(t) + "," + g17(orig.missing_fraction[i]) + "," + g17(ext.missing_fraction[i]) + "," +
                 g17(ext.largest_component_share[i]) + "\n";
    }
    write_text(p.mask_stats, table);
}

void run_train(const StageContext& ctx) {
    const StagePaths p = StagePaths::make(ctx);
    require("train", p.extra_masks, "masks");
    const MaskCube extra_full = read_mask(p.extra_masks);
    const LoadedData d = load_data(ctx, p, "train", &extra_full);
    const MaskCube& extra = d.is_reduced ? d.reduced.extra : extra_full;
    if (!extra.same_shape(d.model_cube().mask())) throw PipelineError("train", "m' cube does not match the dataset");
    const TrainingData data{d.model_cube(), extra, d.model_master()};
    const SplitSpec split = split_from(ctx.config, d.observed.days());
    const AutoencoderConfig base = base_architecture(ctx.config, d.model_cube().width(), d.model_cube().height());
    const TrainOptions opt = train_options(ctx.config);
    const TuneOptions tune = tune_options(ctx.config);
    const bool tuning = ctx.config.boolean("optim.tune");
    const auto labels = ctx.config.list("model.ensemble");
    if (labels.empty()) throw RunConfigError("model.ensemble lists no architectures");
    std::vector<AutoencoderConfig> archs;
    for (const auto& l : labels) archs.push_back(config_from_label(l, base));

    std::vector<ModelRecord> records(labels.size());
    std::vector<std::string> tuning_rows(labels.size());
    std::mutex log_mutex;
    auto train_one = [&](std::size_t i) {
        const auto id = static_cast<Index>(i);
        const std::uint64_t seed = derive_seed(ctx.seed, "train", static_cast<std::uint64_t>(i));
        ModelRecord& rec = records[i];
        rec.id = id;
        rec.label = labels[i];
        TuningState state;
        std::unique_ptr<Autoencoder<float>> model;
        if (tuning) {
            TuneResult r = tune_regularization(data, split, archs[i], opt, tune, seed, [&](Index it, const TuneIteration& ti) {
                std::lock_guard<std::mutex> lock(log_mutex);
                char buf[200];
                std::snprintf(buf, sizeof buf,
                              "train: model %lld (%s) iteration %lld: dropout %.3g wd %.3g batch %lld ratio %.4f",
                              static_cast<long long>(id), labels[i].c_str(), static_cast<long long>(it),
                              ti.hyper.dropout, ti.hyper.weight_decay, static_cast<long long>(ti.hyper.batch_size),
                              ti.ratio());
                say(ctx, buf);
            });
            state = std::move(r.state);
            model = std::move(r.model);
        } else {
            TrainResult r = train_model(data, split, archs[i], opt, derive_seed(seed, "tune", 0));
            state.iteration = 1;
            state.selected = 0;
            state.current = {opt.dropout, opt.weight_decay, opt.batch_size};
            state.history.push_back({state.current, r.train_loss, r.val_loss, r.val_hidden_loss, std::move(r.log)});
            state.status = classify_ratio(state.history.back().ratio(), tune);
            model = std::move(r.model);
        }
        for (std::size_t j = 0; j < state.history.size(); ++j) {
            const auto& h = state.history[j];
            write_text(p.model_log(id, static_cast<Index>(j)), format_log(h.log, opt.loss));
            tuning_rows[i] += std::to_string(id) + "," + std::to_string(j) + "," + g17(h.hyper.dropout) + "," +
                              g17(h.hyper.weight_decay) + "," + std::to_string(h.hyper.batch_size) + "," +
                              g17(h.train_loss) + "," + g17(h.val_loss) + "," + g17(h.val_hidden_loss) + "," +
                              g17(h.ratio()) + "," + to_string(classify_ratio(h.ratio(), tune)) + "\n";
        }
        const auto& sel = state.history[static_cast<std::size_t>(state.selected)];
        rec.status = to_string(state.status);
        rec.iterations = state.iteration;
        rec.selected = state.selected;
        rec.hyper = sel.hyper;
        rec.train_loss = sel.train_loss;
        rec.val_loss = sel.val_loss;
        rec.val_hidden_loss = sel.val_hidden_loss;
        rec.ratio = sel.ratio();
        nn::write_params(p.model_file(id), model->state());
    };

    const std::size_t workers = static_cast<std::size_t>(std::clamp<Index>(ctx.jobs, 1, static_cast<Index>(labels.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < labels.size(); ++i) train_one(i);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < labels.size(); i += workers) train_one(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    write_text(p.model_summary, format_model_summary(records));
    std::string table = "model_id,iteration,dropout,weight_decay,batch_size,train_loss,val_loss,val_hidden_loss,ratio,status\n";
    for (const auto& r : tuning_rows) table += r;
    write_text(p.tuning_table, table);
}

void run_sample(const StageContext& ctx) {
    const StagePaths p = StagePaths::make(ctx);
    require("sample", p.model_summary, "train");
    require("sample", p.sites, "synth");
    const auto records = parse_model_summary(read_file(p.model_summary));
    const LoadedData d = load_data(ctx, p, "sample", nullptr);
    auto models = load_models(ctx, p, records, d, "sample");
    const auto sites = parse_sites(read_file(p.sites));
    const auto& c = ctx.config;
    const CylinderIndex cyl =
        build_cylinders(d.geometry, sites, d.observed.days(), c.real("data.radius_km"), c.integer("data.window_days"));
    const Aggregator agg = parse_aggregator(c.text("sample.aggregator"));
    const NoiseParams noise = noise_from(c);
    const Index k = c.integer("sample.k");
    const Index k_sat = std::max<Index>(k, c.integer("sample.k_saturation"));
    const InferenceData inf{d.observed, d.geometry.master, d.fp, d.is_reduced ? &d.reduced : nullptr};

    const std::size_t best = best_model(records);
    say(ctx, "sample: " + std::to_string(k_sat) + " samples from best model " + std::to_string(records[best].id));
    const ExtremeDistribution sat = ensemble_distribution({models[best].get()}, {records[best].id}, inf, k_sat, cyl,
                                                          agg, noise, ctx.seed, 1);
    std::vector<Autoencoder<float>*> rest;
    std::vector<Index> rest_ids;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (i == best) continue;
        rest.push_back(models[i].get());
        rest_ids.push_back(records[i].id);
    }
    say(ctx, "sample: " + std::to_string(k) + " samples from each of " + std::to_string(rest.size()) + " other models");
    ExtremeDistribution others;
    if (!rest.empty()) others = ensemble_distribution(rest, rest_ids, inf, k, cyl, agg, noise, ctx.seed, ctx.jobs);

    ExtremeDistribution all;
    all.sites = sat.sites;
    all.samples.resize(sat.samples.size());
    for (std::size_t s = 0; s < sat.samples.size(); ++s) {
        for (const auto& r : records) {
            const auto& src = r.id == records[best].id ? sat.samples[s] : others.samples[s];
            for (const auto& e : src) {
                if (e.model_id == r.id && e.sample_id < k) all.samples[s].push_back(e);
            }
        }
    }
    write_text(p.extremes, format_extremes(all));
    write_text(p.saturation, format_extremes(sat));
    const SplitSpec split = split_from(c, d.observed.days());
    write_text(p.climatology, format_extremes(baseline_climatology(d.observed, cyl, split, agg)));
}

void run_score(const StageContext& ctx) {
    const StagePaths p = StagePaths::make(ctx);
    require("score", p.observations, "synth");
    require("score", p.extremes, "sample");
    require("score", p.saturation, "sample");
    require("score", p.climatology, "sample");
    require("score", p.model_summary, "train");
    const auto obs = parse_observations(read_file(p.observations));
    const auto records = parse_model_summary(read_file(p.model_summary));
    const ExtremeDistribution all = parse_extremes(read_file(p.extremes));
    const ExtremeDistribution sat = parse_extremes(read_file(p.saturation));
    const ExtremeDistribution clim = parse_extremes(read_file(p.climatology));
    const Index k = ctx.config.integer("sample.k");

    const ScoreReport ensemble = averaged_score(all, obs);
    write_text(p.score_report, ensemble.format());
    std::string summary = "name,mean_twcrps\n";
    summary += "ensemble," + g17(ensemble.mean) + "\n";
    for (const auto& r : records) {
        summary += "model_" + std::to_string(r.id) + "," + g17(averaged_score(all.subset({r.id}), obs).mean) + "\n";
    }
    const Index best = records[best_model(records)].id;
    const Index k_sat = static_cast<Index>(sat.samples.empty() ? 0 : sat.samples[0].size());
    summary += "best_k" + std::to_string(k) + "," + g17(averaged_score(sat.subset({best}, k), obs).mean) + "\n";
    summary += "best_k" + std::to_string(k_sat) + "," + g17(averaged_score(sat, obs).mean) + "\n";
    summary += "climatology," + g17(averaged_score(clim, obs).mean) + "\n";
    write_text(p.score_summary, summary);
    say(ctx, "score: mean_twcrps=" + g17(ensemble.mean));
}

void run_report(const StageContext& ctx) {
    const StagePaths p = StagePaths::make(ctx);
    require("report", p.score_summary, "score");
    require("report", p.extremes, "sample");
    require("report", p.model_summary, "train");
    require("report", p.observations, "synth");
    const auto obs = parse_observations(read_file(p.observations));
    const auto records = parse_model_summary(read_file(p.model_summary));
    const ExtremeDistribution all = parse_extremes(read_file(p.extremes));
    const auto curve = subensemble_curve(all, records, obs, ctx.config.integer("report.random_orderings"), ctx.seed);
    std::string table = "ordering,members,mean_twcrps\n";
    for (const auto& pt : curve) table += pt.ordering + "," + std::to_string(pt.members) + "," + g17(pt.mean_twcrps) + "\n";
    write_text(p.subensemble, table);

    AutoencoderConfig ref;
    ref.width = 32;
    ref.height = 128;
    const auto family = enumerate_configs(ref);
    Index min_layers = 1000, max_layers = 0;
    for (const auto& f : family) {
        min_layers = std::min(min_layers, conv_layer_count(f));
        max_layers = std::max(max_layers, conv_layer_count(f));
    }
    std::ostringstream r;
    r << "architecture family\n";
    r << "  enumerated configurations: " << family.size() << "\n";
    r << "  reference ensemble size: 155\n";
    r << "  note: the constraints n_outer>=1, 0<=n_reduce<=5, n_inner>=0, 1<=sum<=10 admit " << family.size()
      << " configurations; a reference ensemble of 155 implies " << family.size() - 155
      << " were excluded by an unstated rule, so the full family is enumerated here\n";
    r << "  conv+tconv layers per model: " << min_layers << ".." << max_layers << "\n";
    r << "\nmodels\n";
    Index well = 0, iters = 0;
    for (const auto& m : records) {
        r << "  model " << m.id << " " << m.label << ": " << m.status << " after " << m.iterations
          << " iteration(s); kept iteration " << m.selected << " with ratio " << g17(m.ratio) << ", val_hidden "
          << g17(m.val_hidden_loss) << "\n";
        well += m.status == "well-trained";
        iters += m.iterations;
    }
    r << "  well-trained: " << well << "/" << records.size() << ", mean iterations "
      << g17(static_cast<double>(iters) / static_cast<double>(records.size())) << "\n";
    r << "\nscores\n" << read_file(p.score_summary);
    r << "\nsub-ensembles (see subensemble.csv)\n" << table;
    write_text(p.report, r.str());
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"synth", "masks", "train", "sample", "score", "report"};
    return names;
}

void run_stage(const std::string& name, const StageContext& ctx) {
    try {
        if (name == "synth") return run_synth(ctx);
        if (name == "masks") return run_masks(ctx);
        if (name == "train") return run_train(ctx);
        if (name == "sample") return run_sample(ctx);
        if (name == "score") return run_score(ctx);
        if (name == "report") return run_report(ctx);
    } catch (const PipelineError&) {
        throw;
    } catch (const RunConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw PipelineError(name, e.what());
    }
    throw RunConfigError("unknown stage '" + name + "'");
}

}  // namespace gapnet
