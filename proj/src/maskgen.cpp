#include "gapnet/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace gapnet {

double largest_component_share(const MaskPlane& missing) {
    const Index rows = missing.rows();
    const Index cols = missing.cols();
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(rows * cols), 0);
    std::vector<Index> stack;
    Index total = 0;
    Index largest = 0;
    for (Index start = 0; start < rows * cols; ++start) {
        if (!missing(start / cols, start % cols) || seen[static_cast<std::size_t>(start)]) continue;
        Index size = 0;
        stack.assign(1, start);
        seen[static_cast<std::size_t>(start)] = 1;
        while (!stack.empty()) {
            const Index k = stack.back();
            stack.pop_back();
            ++size;
            const Index r = k / cols;
            const Index c = k % cols;
            const Index nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (const auto& n : nbr) {
                if (n[0] < 0 || n[0] >= rows || n[1] < 0 || n[1] >= cols) continue;
                const Index kk = n[0] * cols + n[1];
                if (missing(n[0], n[1]) && !seen[static_cast<std::size_t>(kk)]) {
                    seen[static_cast<std::size_t>(kk)] = 1;
                    stack.push_back(kk);
                }
            }
        }
        total += size;
        largest = std::max(largest, size);
    }
    return total == 0 ? 0.0 : static_cast<double>(largest) / static_cast<double>(total);
}

namespace {

// Grows one month's damage on top of `observed` (master cells still observed).
// Returns the new observed plane.
MaskPlane grow_month(const MaskPlane& master, const MaskPlane& observed, Index target_missing,
                     const MaskGenParams& p, std::uint64_t seed) {
    const Index rows = master.rows();
    const Index cols = master.cols();
    const Index n = rows * cols;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    MaskPlane obs = observed;
    Index missing = 0;
    for (Index k = 0; k < n; ++k) {
        if (master(k / cols, k % cols) && !obs(k / cols, k % cols)) ++missing;
    }
    const auto is_missing = [&](Index r, Index c) {
        return r >= 0 && r < rows && c >= 0 && c < cols && master(r, c) && !obs(r, c);
    };
    const auto observed_cells = [&] {
        std::vector<Index> cells;
        for (Index k = 0; k < n; ++k) {
            if (obs(k / cols, k % cols)) cells.push_back(k);
        }
        return cells;
    };

    for (Index s = 0; s < p.seeds_count && missing < target_missing; ++s) {
        const auto cells = observed_cells();
        if (cells.empty()) break;
        std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
        const Index k = cells[pick(rng)];
        obs(k / cols, k % cols) = 0;
        ++missing;
    }

    std::vector<double> weight(static_cast<std::size_t>(n), 0.0);
    Index iterations = 0;
    while (missing < target_missing) {
        if (++iterations > p.max_iterations) {
            throw MaskGenError("generate_masks: max_iterations reached before target fraction");
        }
        double total = 0.0;
        for (Index k = 0; k < n; ++k) {
            const Index r = k / cols;
            const Index c = k % cols;
            double w = 0.0;
            if (obs(r, c)) {
                const int nb = is_missing(r - 1, c) + is_missing(r + 1, c) + is_missing(r, c - 1) +
                               is_missing(r, c + 1);
                if (nb > 0) w = 1.0 + p.growth_bias * nb;
            }
            weight[static_cast<std::size_t>(k)] = w;
            total += w;
        }
        Index chosen = -1;
        if (total > 0.0) {
            double u = unit(rng) * total;
            for (Index k = 0; k < n; ++k) {
                const double w = weight[static_cast<std::size_t>(k)];
                if (w <= 0.0) continue;
                chosen = k;
                if (u < w) break;
                u -= w;
            }
        } else {
            // Observed region no longer touches the missing set: reseed.
            const auto cells = observed_cells();
            if (cells.empty()) break;
            std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
            chosen = cells[pick(rng)];
        }
        obs(chosen / cols, chosen % cols) = 0;
        ++missing;
    }
    return obs;
}

}  // namespace

MaskCube generate_masks(const GridGeometry& geometry, const MaskCube& existing,
                        const MaskGenParams& p) {
    if (existing.width() != geometry.width || existing.height() != geometry.height) {
        throw MaskGenError("generate_masks: mask and geometry shapes differ");
    }
    if (p.month_length < 1) throw MaskGenError("generate_masks: month_length must be >= 1");
    const Index master_cells = geometry.master_count();
    if (master_cells == 0) throw MaskGenError("generate_masks: empty master mask");

    MaskCube out(existing.days(), existing.width(), existing.height(), 0);
    const Index months = month_count(existing.days(), p.month_length);
    for (Index month = 0; month < months; ++month) {
        const Index first = month * p.month_length;
        const Index last = std::min(existing.days(), first + p.month_length);
        MaskPlane observed = geometry.master;
        for (Index t = first; t < last; ++t) observed = observed * existing.day(t);

        const Index observed_count = observed.cast<Index>().sum();
        const double existing_missing =
            1.0 - static_cast<double>(observed_count) / static_cast<double>(master_cells);
        const double target = p.removal_fraction > 0.0
                                  ? composite_missing_fraction(existing_missing, p.removal_fraction)
                                  : p.target_missing_fraction;
        if (!(target > 0.0 && target < 1.0)) {
            throw MaskGenError("generate_masks: target fraction must lie in (0, 1)");
        }
        const auto target_missing =
            static_cast<Index>(std::llround(target * static_cast<double>(master_cells)));
        if (target_missing <= master_cells - observed_count) {
            std::ostringstream os;
            os << "generate_masks: target already exceeded in month " << month << " (existing "
               << existing_missing << ", target " << target << ")";
            throw MaskGenError(os.str());
        }

        MaskPlane grown;
        double best_share = -1.0;
        for (Index attempt = 0; attempt < p.max_attempts; ++attempt) {
            const std::uint64_t seed = p.rng_seed + static_cast<std::uint64_t>(month) +
                                       static_cast<std::uint64_t>(attempt) * 0x9E3779B97F4A7C15ull;
            MaskPlane candidate = grow_month(geometry.master, observed, target_missing, p, seed);
            const MaskPlane missing = geometry.master * (candidate == 0).cast<std::uint8_t>();
            const double share = largest_component_share(missing);
            if (share > best_share) {
                best_share = share;
                grown = std::move(candidate);
            }
            if (share >= p.min_component_share) break;
        }
        if (best_share < p.min_component_share) {
            std::ostringstream os;
            os << "generate_masks: month " << month << " stayed fragmented (largest component "
               << best_share << ") after " << p.max_attempts << " attempts";
            throw MaskGenError(os.str());
        }
        for (Index t = first; t < last; ++t) out.day(t) = grown;
    }
    return out;
}

MaskStats mask_stats(const MaskCube& mask, const GridGeometry& geometry, Index month_length) {
    if (mask.width() != geometry.width || mask.height() != geometry.height) {
        throw MaskGenError("mask_stats: mask and geometry shapes differ");
    }
    MaskStats stats;
    const double master_cells = static_cast<double>(geometry.master_count());
    for (Index t = 0; t < mask.days(); ++t) {
        const MaskPlane missing = geometry.master * (mask.day(t) == 0).cast<std::uint8_t>();
        const double count = static_cast<double>(missing.cast<Index>().sum());
        stats.missing_fraction.push_back(master_cells > 0 ? count / master_cells : 0.0);
        stats.largest_component_share.push_back(largest_component_share(missing));
        if (t % month_length != 0 && !(mask.day(t) == mask.day(t - 1)).all()) {
            stats.month_constant = false;
        }
    }
    return stats;
}

}  // namespace gapnet
