#include "gapnet/scoring.hpp"

#include <algorithm>
#include <cstdio>

namespace gapnet {
namespace {

double antiderivative(double z) { return z * normal_cdf(z) + normal_pdf(z); }

}  // namespace

double weight_integral(double a, double b, const WeightParams& p) {
    return p.scale * (antiderivative((b - p.center) / p.scale) - antiderivative((a - p.center) / p.scale));
}

double twcrps(std::vector<double> samples, double u_obs, const WeightParams& p) {
    if (samples.empty()) throw ScoreError("twcrps: no samples");
    for (double s : samples) {
        if (!std::isfinite(s)) throw ScoreError("twcrps: non-finite sample");
    }
    if (!std::isfinite(u_obs)) throw ScoreError("twcrps: non-finite observation");
    std::sort(samples.begin(), samples.end());
    const double k = static_cast<double>(samples.size());
    std::vector<double> breaks = samples;
    breaks.push_back(u_obs);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    double total = 0.0;
    std::size_t below = 0;  // samples <= current left breakpoint
    for (std::size_t j = 0; j + 1 < breaks.size(); ++j) {
        const double a = breaks[j];
        while (below < samples.size() && samples[below] <= a) ++below;
        const double f = static_cast<double>(below) / k;
        const double ind = u_obs <= a ? 1.0 : 0.0;
        const double d = f - ind;
        if (d != 0.0) total += d * d * weight_integral(a, breaks[j + 1], p);
    }
    return total;
}

std::string ScoreReport::format() const {
    std::string out = "site_id,day,twcrps\n";
    char line[96];
    for (std::size_t s = 0; s < per_site.size(); ++s) {
        std::snprintf(line, sizeof line, "%zu,%lld,%.17g\n", s, static_cast<long long>(sites[s].day), per_site[s]);
        out += line;
    }
    std::snprintf(line, sizeof line, "mean_twcrps=%.17g\n", mean);
    return out + line;
}

ScoreReport averaged_score(const ExtremeDistribution& dist, const std::vector<double>& observations,
                           const WeightParams& p) {
    if (dist.samples.empty()) throw ScoreError("averaged_score: no sites");
    ScoreReport r;
    r.sites = dist.sites;
    double sum = 0.0;
    for (std::size_t s = 0; s < dist.samples.size(); ++s) {
        if (s >= observations.size() || !std::isfinite(observations[s])) {
            throw ScoreError("averaged_score: missing observation for site " + std::to_string(s));
        }
        if (dist.samples[s].empty()) throw ScoreError("averaged_score: no samples for site " + std::to_string(s));
        r.per_site.push_back(twcrps(dist.values(s), observations[s], p));
        sum += r.per_site.back();
    }
    r.mean = sum / static_cast<double>(r.per_site.size());
    return r;
}

ExtremeDistribution baseline_climatology(const AnomalyCube& observed, const CylinderIndex& cylinders,
                                         const SplitSpec& split, Aggregator aggregator) {
    const Index w = cylinders.window_days;
    ExtremeDistribution out;
    out.samples.resize(cylinders.sites.size());
    for (std::size_t s = 0; s < cylinders.sites.size(); ++s) {
        const CylinderSite& cyl = cylinders.sites[s];
        out.sites.push_back(cyl.site);
        Index sample = 0;
        for (Index t0 = 0; t0 + w <= observed.days(); ++t0) {
            bool usable = true;
            for (Index t = t0; t < t0 + w && usable; ++t) {
                if (split.is_validation(t)) {
                    usable = false;
                    break;
                }
                const std::uint8_t* m = observed.mask().bits().data() + t * observed.plane_size();
                for (Index c : cyl.cells) {
                    if (!m[c]) {
                        usable = false;
                        break;
                    }
                }
            }
            if (!usable) continue;
            CylinderSite window = cyl;
            window.site.day = t0;
            out.samples[s].push_back({-1, sample++, cylinder_extreme(observed, window, w, aggregator)});
        }
        if (out.samples[s].empty()) {
            throw ScoreError("baseline_climatology: no usable history for site " + std::to_string(s));
        }
    }
    return out;
}

}  // namespace gapnet
