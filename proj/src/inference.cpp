#include "gapnet/inference.hpp"

#include "gapnet/seed.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace gapnet {

const char* to_string(Aggregator a) {
    switch (a) {
        case Aggregator::max: return "max";
        case Aggregator::min: return "min";
        case Aggregator::mean: return "mean";
    }
    return "?";
}

Aggregator parse_aggregator(const std::string& text) {
    if (text == "max") return Aggregator::max;
    if (text == "min") return Aggregator::min;
    if (text == "mean") return Aggregator::mean;
    throw InferenceError("unknown aggregator '" + text + "' (expected max, min or mean)");
}

AnomalyCube sample_reconstruction(Autoencoder<float>& model, const InferenceData& data,
                                  const NoiseParams& noise, std::uint64_t seed,
                                  const std::vector<Index>& days) {
    const bool reduced = !data.footprint.identity();
    if (reduced && !data.reduced) throw InferenceError("reduced footprint without reduced data");
    const AnomalyCube& src = reduced ? data.reduced->cube : data.observed;
    const MaskPlane& src_master = reduced ? data.reduced->master : data.master;
    const auto& cfg = model.config();

    std::vector<Index> todo = days;
    if (todo.empty()) {
        todo.resize(static_cast<std::size_t>(data.observed.days()));
        for (Index t = 0; t < data.observed.days(); ++t) todo[static_cast<std::size_t>(t)] = t;
    }
    for (Index t : todo) {
        if (t < 0 || t >= data.observed.days()) throw InferenceError("day " + std::to_string(t) + " out of range");
    }

    AnomalyCube out(data.observed.days(), data.observed.width(), data.observed.height());
    out.mask().bits().setZero();
    const Index plane = cfg.height * cfg.width;
    constexpr std::size_t kChunk = 16;
    for (std::size_t a = 0; a < todo.size(); a += kChunk) {
        const std::size_t b = std::min(todo.size(), a + kChunk);
        nn::Tensor<float> input(static_cast<Index>(b - a), cfg.input_channels(), cfg.height, cfg.width);
        for (std::size_t i = a; i < b; ++i) {
            fill_input(src, src.mask(), src_master, cfg, todo[i], noise, seed,
                       input.data() + static_cast<Index>(i - a) * input.sample_size());
        }
        const nn::Tensor<float> pred = model.forward(input, false);
        for (std::size_t i = a; i < b; ++i) {
            const Index t = todo[i];
            Plane<float> p = Eigen::Map<const FieldPlane>(pred.data() + static_cast<Index>(i - a) * plane,
                                                          cfg.height, cfg.width);
            if (reduced) p = restore_plane(p, src_master, data.master, data.footprint);
            out.day(t) = p * data.master.cast<float>();
            out.mask().day(t) = data.master;
        }
    }
    return out;
}

AnomalyCube blend(const AnomalyCube& observed, const MaskPlane& master, const AnomalyCube& prediction) {
    if (!observed.mask().same_shape(prediction.mask())) throw InferenceError("blend: shape mismatch");
    AnomalyCube out(observed.days(), observed.width(), observed.height());
    for (Index t = 0; t < observed.days(); ++t) {
        const auto m = observed.mask().day(t);
        out.day(t) = (master != 0).select((m != 0).select(observed.day(t), prediction.day(t)), 0.0f);
        out.mask().day(t) = master;
    }
    return out;
}

double cylinder_extreme(const AnomalyCube& cube, const CylinderSite& site, Index window_days,
                        Aggregator aggregator) {
    if (site.cells.empty()) throw InferenceError("cylinder has no cells");
    if (site.site.day < 0 || site.site.day + window_days > cube.days()) {
        throw InferenceError("cylinder window starting on day " + std::to_string(site.site.day) +
                             " leaves the record");
    }
    double acc = aggregator == Aggregator::max   ? -std::numeric_limits<double>::infinity()
                 : aggregator == Aggregator::min ? std::numeric_limits<double>::infinity()
                                                 : 0.0;
    for (Index t = site.site.day; t < site.site.day + window_days; ++t) {
        const float* plane = cube.values().data() + t * cube.plane_size();
        for (Index c : site.cells) {
            const double v = plane[c];
            if (aggregator == Aggregator::max) acc = std::max(acc, v);
            else if (aggregator == Aggregator::min) acc = std::min(acc, v);
            else acc += v;
        }
    }
    if (aggregator == Aggregator::mean) acc /= static_cast<double>(window_days * static_cast<Index>(site.cells.size()));
    return acc;
}

std::vector<double> ExtremeDistribution::values(std::size_t site) const {
    std::vector<double> out;
    out.reserve(samples[site].size());
    for (const auto& s : samples[site]) out.push_back(s.value);
    return out;
}

ExtremeDistribution ExtremeDistribution::subset(const std::vector<Index>& models, Index max_samples) const {
    const std::set<Index> keep(models.begin(), models.end());
    ExtremeDistribution out;
    out.sites = sites;
    out.samples.resize(samples.size());
    for (std::size_t s = 0; s < samples.size(); ++s) {
        for (const auto& e : samples[s]) {
            if (keep.count(e.model_id) && (max_samples < 0 || e.sample_id < max_samples)) {
                out.samples[s].push_back(e);
            }
        }
    }
    return out;
}

std::vector<Index> cylinder_days(const CylinderIndex& cylinders) {
    std::set<Index> days;
    for (const auto& c : cylinders.sites) {
        for (Index t = 0; t < cylinders.window_days; ++t) days.insert(c.site.day + t);
    }
    return {days.begin(), days.end()};
}

ExtremeDistribution ensemble_distribution(std::vector<Autoencoder<float>*> models,
                                          const std::vector<Index>& model_ids,
                                          const InferenceData& data, Index samples_per_model,
                                          const CylinderIndex& cylinders, Aggregator aggregator,
                                          const NoiseParams& noise, std::uint64_t root_seed,
                                          Index jobs) {
    if (models.size() != model_ids.size()) throw InferenceError("one model id per model required");
    if (samples_per_model < 1) throw InferenceError("samples_per_model must be >= 1");
    const std::vector<Index> days = cylinder_days(cylinders);
    const std::size_t n_sites = cylinders.sites.size();
    // values[m][k][site]
    std::vector<std::vector<std::vector<double>>> values(
        models.size(), std::vector<std::vector<double>>(static_cast<std::size_t>(samples_per_model),
                                                        std::vector<double>(n_sites)));
    auto run = [&](std::size_t m) {
        for (Index k = 0; k < samples_per_model; ++k) {
            const std::uint64_t seed = derive_seed(root_seed, "sample", static_cast<std::uint64_t>(model_ids[m]),
                                                   static_cast<std::uint64_t>(k));
            const AnomalyCube recon = sample_reconstruction(*models[m], data, noise, seed, days);
            const AnomalyCube full = blend(data.observed, data.master, recon);
            for (std::size_t s = 0; s < n_sites; ++s) {
                values[m][static_cast<std::size_t>(k)][s] =
                    cylinder_extreme(full, cylinders.sites[s], cylinders.window_days, aggregator);
            }
        }
    };
    const auto workers = static_cast<std::size_t>(std::clamp<Index>(jobs, 1, static_cast<Index>(std::max<std::size_t>(1, models.size()))));
    if (workers == 1) {
        for (std::size_t m = 0; m < models.size(); ++m) run(m);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t m = w; m < models.size(); m += workers) run(m);
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
    ExtremeDistribution out;
    out.samples.resize(n_sites);
    for (const auto& c : cylinders.sites) out.sites.push_back(c.site);
    for (std::size_t m = 0; m < models.size(); ++m) {
        for (Index k = 0; k < samples_per_model; ++k) {
            for (std::size_t s = 0; s < n_sites; ++s) {
                out.samples[s].push_back({model_ids[m], k, values[m][static_cast<std::size_t>(k)][s]});
            }
        }
    }
    return out;
}

std::string format_extremes(const ExtremeDistribution& dist) {
    std::string out = "site_id,day,sample_id,model_id,extreme_value\n";
    char line[128];
    for (std::size_t s = 0; s < dist.samples.size(); ++s) {
        for (const auto& e : dist.samples[s]) {
            std::snprintf(line, sizeof line, "%zu,%lld,%lld,%lld,%.17g\n", s,
                          static_cast<long long>(dist.sites[s].day), static_cast<long long>(e.sample_id),
                          static_cast<long long>(e.model_id), e.value);
            out += line;
        }
    }
    return out;
}

ExtremeDistribution parse_extremes(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "site_id,day,sample_id,model_id,extreme_value") {
        throw InferenceError("extreme table: bad header");
    }
    ExtremeDistribution out;
    Index line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        long long site = 0, day = 0, sample = 0, model = 0;
        double value = 0.0;
        char tail = 0;
        if (std::sscanf(line.c_str(), "%lld,%lld,%lld,%lld,%lf%c", &site, &day, &sample, &model, &value, &tail) != 5 ||
            site < 0) {
            throw InferenceError("extreme table: malformed line " + std::to_string(line_no));
        }
        const auto s = static_cast<std::size_t>(site);
        if (s >= out.samples.size()) {
            out.samples.resize(s + 1);
            out.sites.resize(s + 1);
        }
        out.sites[s].day = day;
        out.samples[s].push_back({model, sample, value});
    }
    return out;
}

}  // namespace gapnet
