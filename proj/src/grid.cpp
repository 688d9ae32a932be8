#include "gapnet/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>

namespace gapnet {

MaskCube::MaskCube(Index days, Index width, Index height, std::uint8_t fill)
    : days_(days), width_(width), height_(height) {
    if (days < 0 || width < 0 || height < 0) {
        throw GridError("MaskCube: negative dimension");
    }
    bits_.setConstant(days * width * height, fill);
}

AnomalyCube::AnomalyCube(Index days, Index width, Index height, float fill)
    : mask_(days, width, height, 1) {
    values_.setConstant(days * width * height, fill);
}

AnomalyCube::AnomalyCube(Eigen::ArrayXf values, MaskCube mask)
    : values_(std::move(values)), mask_(std::move(mask)) {
    if (values_.size() != mask_.bits().size()) {
        throw GridError("AnomalyCube: values and mask differ in shape");
    }
}

bool masked_equal(const AnomalyCube& a, const AnomalyCube& b) {
    if (!(a.mask() == b.mask())) return false;
    const auto& bits = a.mask().bits();
    for (Index i = 0; i < bits.size(); ++i) {
        if (bits[i] && std::bit_cast<std::uint32_t>(a.values()[i]) !=
                           std::bit_cast<std::uint32_t>(b.values()[i])) {
            return false;
        }
    }
    return true;
}

GridGeometry GridGeometry::regular(Index width, Index height, double lat0, double lon0,
                                   double dlat, double dlon) {
    GridGeometry g;
    g.width = width;
    g.height = height;
    g.lat.resize(height, width);
    g.lon.resize(height, width);
    for (Index r = 0; r < height; ++r) {
        for (Index c = 0; c < width; ++c) {
            g.lat(r, c) = lat0 - dlat * static_cast<double>(r);
            g.lon(r, c) = lon0 + dlon * static_cast<double>(c);
        }
    }
    g.master = MaskPlane::Ones(height, width);
    g.cell_pitch_km = dlat * std::numbers::pi / 180.0 * kEarthRadiusKm;
    return g;
}

void GridGeometry::validate() const {
    if (width <= 0 || height <= 0) throw GridError("GridGeometry: empty grid");
    if (lat.rows() != height || lat.cols() != width || lon.rows() != height ||
        lon.cols() != width || master.rows() != height || master.cols() != width) {
        throw GridError("GridGeometry: coordinate tables do not match grid dimensions");
    }
    if (downsample_factor < 1) throw GridError("GridGeometry: downsample_factor < 1");
    if (skew_period < 0) throw GridError("GridGeometry: negative skew_period");
    for (Index r = 0; r < height; ++r) {
        for (Index c = 0; c < width; ++c) {
            if (master(r, c) > 1) throw GridError("GridGeometry: master mask is not binary");
            if (master(r, c) && !(std::isfinite(lat(r, c)) && std::isfinite(lon(r, c)))) {
                std::ostringstream os;
                os << "GridGeometry: non-finite coordinate at master cell (" << r << ", " << c
                   << ")";
                throw GridError(os.str());
            }
        }
    }
}

Index GridGeometry::master_count() const {
    return master.cast<Index>().sum();
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
    constexpr double deg = std::numbers::pi / 180.0;
    const double dphi = (lat2 - lat1) * deg;
    const double dlambda = (lon2 - lon1) * deg;
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlambda / 2.0);
    const double a = s1 * s1 + std::cos(lat1 * deg) * std::cos(lat2 * deg) * s2 * s2;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

double cell_distance_km(const GridGeometry& g, Index row_a, Index col_a, Index row_b,
                        Index col_b) {
    if (g.metric == DistanceMetric::cell_pitch) {
        const double dr = static_cast<double>(row_a - row_b);
        const double dc = static_cast<double>(col_a - col_b);
        return g.cell_pitch_km * std::sqrt(dr * dr + dc * dc);
    }
    return haversine_km(g.lat(row_a, col_a), g.lon(row_a, col_a), g.lat(row_b, col_b),
                        g.lon(row_b, col_b));
}

CylinderIndex build_cylinders(const GridGeometry& geometry, const std::vector<Site>& sites,
                              Index total_days, double radius_km, Index window_days) {
    if (!(radius_km > 0.0)) throw GridError("build_cylinders: radius_km must be positive");
    if (window_days < 1) throw GridError("build_cylinders: window_days must be >= 1");

    CylinderIndex index;
    index.radius_km = radius_km;
    index.window_days = window_days;
    index.sites.reserve(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const Site& s = sites[i];
        const bool inside = s.row >= 0 && s.row < geometry.height && s.col >= 0 &&
                            s.col < geometry.width;
        if (!inside || !geometry.is_master(s.row, s.col)) {
            std::ostringstream os;
            os << "build_cylinders: site " << i << " (row " << s.row << ", col " << s.col
               << ") is outside the master mask";
            throw GridError(os.str());
        }
        if (s.day < 0 || s.day + window_days > total_days) {
            std::ostringstream os;
            os << "build_cylinders: site " << i << " window starting at day " << s.day
               << " exceeds the dataset";
            throw GridError(os.str());
        }
        CylinderSite cyl{s, {}};
        for (Index r = 0; r < geometry.height; ++r) {
            for (Index c = 0; c < geometry.width; ++c) {
                if (!geometry.is_master(r, c)) continue;
                const bool self = r == s.row && c == s.col;
                if (self || cell_distance_km(geometry, s.row, s.col, r, c) <= radius_km) {
                    cyl.cells.push_back(r * geometry.width + c);
                }
            }
        }
        index.sites.push_back(std::move(cyl));
    }
    return index;
}

std::vector<Index> SplitSpec::training_days() const {
    std::vector<Index> days;
    days.reserve(static_cast<std::size_t>(total_days - validation_length()));
    for (Index d = 0; d < total_days; ++d) {
        if (!is_validation(d)) days.push_back(d);
    }
    return days;
}

std::vector<Index> SplitSpec::validation_days() const {
    std::vector<Index> days;
    for (Index d = validation_start; d <= validation_end; ++d) days.push_back(d);
    return days;
}

SplitSpec make_split(Index total_days, Index regime_boundary_day,
                     std::array<double, 2> regime_fractions, Index validation_days) {
    if (validation_days <= 0 || validation_days >= total_days) {
        throw GridError("make_split: validation span must satisfy 0 < span < total days");
    }
    if (regime_fractions[0] < 0.0 || regime_fractions[1] < 0.0 ||
        std::abs(regime_fractions[0] + regime_fractions[1] - 1.0) > 1e-9) {
        throw GridError("make_split: regime fractions must be non-negative and sum to 1");
    }
    const double want_before = static_cast<double>(validation_days) * regime_fractions[0];
    const auto before = static_cast<Index>(std::llround(want_before));
    const Index start = regime_boundary_day - before;
    const Index end = start + validation_days - 1;
    if (start < 0 || end >= total_days) {
        std::ostringstream os;
        os << "make_split: infeasible proportions, block [" << start << ", " << end
           << "] falls outside [0, " << total_days - 1 << "]";
        throw GridError(os.str());
    }
    return SplitSpec{total_days, start, end};
}

}  // namespace gapnet
