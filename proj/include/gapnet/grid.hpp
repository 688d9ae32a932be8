#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gapnet {

using Index = Eigen::Index;

/// One day of a gridded field: `height` rows by `width` columns, row-major.
template <typename T>
using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using FieldPlane = Plane<float>;
using MaskPlane = Plane<std::uint8_t>;

class GridError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Binary observation mask over days x height x width. 1 = observed.
class MaskCube {
public:
    MaskCube() = default;
    MaskCube(Index days, Index width, Index height, std::uint8_t fill = 1);

    Index days() const { return days_; }
    Index width() const { return width_; }
    Index height() const { return height_; }
    Index plane_size() const { return width_ * height_; }

    std::uint8_t operator()(Index day, Index row, Index col) const {
        return bits_[offset(day, row, col)];
    }
    std::uint8_t& operator()(Index day, Index row, Index col) {
        return bits_[offset(day, row, col)];
    }

    Eigen::Map<MaskPlane> day(Index t) {
        return Eigen::Map<MaskPlane>(bits_.data() + t * plane_size(), height_, width_);
    }
    Eigen::Map<const MaskPlane> day(Index t) const {
        return Eigen::Map<const MaskPlane>(bits_.data() + t * plane_size(), height_, width_);
    }

    const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>& bits() const { return bits_; }
    Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>& bits() { return bits_; }

    bool same_shape(const MaskCube& other) const {
        return days_ == other.days_ && width_ == other.width_ && height_ == other.height_;
    }

    friend bool operator==(const MaskCube& a, const MaskCube& b) {
        return a.same_shape(b) && (a.bits_ == b.bits_).all();
    }

private:
    Index offset(Index day, Index row, Index col) const {
        return (day * height_ + row) * width_ + col;
    }

    Index days_ = 0;
    Index width_ = 0;
    Index height_ = 0;
    Eigen::Array<std::uint8_t, Eigen::Dynamic, 1> bits_;
};

/// Anomaly values (deg C) with a paired validity mask of identical shape.
/// Values under mask 0 are ignored by every consumer.
class AnomalyCube {
public:
    AnomalyCube() = default;
    AnomalyCube(Index days, Index width, Index height, float fill = 0.0f);
    AnomalyCube(Eigen::ArrayXf values, MaskCube mask);

    Index days() const { return mask_.days(); }
    Index width() const { return mask_.width(); }
    Index height() const { return mask_.height(); }
    Index plane_size() const { return mask_.plane_size(); }

    float operator()(Index day, Index row, Index col) const {
        return values_[(day * height() + row) * width() + col];
    }
    float& operator()(Index day, Index row, Index col) {
        return values_[(day * height() + row) * width() + col];
    }

    Eigen::Map<FieldPlane> day(Index t) {
        return Eigen::Map<FieldPlane>(values_.data() + t * plane_size(), height(), width());
    }
    Eigen::Map<const FieldPlane> day(Index t) const {
        return Eigen::Map<const FieldPlane>(values_.data() + t * plane_size(), height(), width());
    }

    const Eigen::ArrayXf& values() const { return values_; }
    Eigen::ArrayXf& values() { return values_; }
    const MaskCube& mask() const { return mask_; }
    MaskCube& mask() { return mask_; }

private:
    Eigen::ArrayXf values_;
    MaskCube mask_;
};

/// Equal masks and bit-identical values at every observed cell.
bool masked_equal(const AnomalyCube& a, const AnomalyCube& b);

enum class DistanceMetric { haversine, cell_pitch };

/// Spatial layout of the grid: coordinates, valid-region mask and the
/// footprint-reduction parameters used when models run at reduced resolution.
struct GridGeometry {
    Index width = 0;
    Index height = 0;
    Plane<double> lat;
    Plane<double> lon;
    MaskPlane master;
    Index skew_period = 0;
    Index downsample_factor = 1;
    DistanceMetric metric = DistanceMetric::haversine;
    double cell_pitch_km = 1.0;

    static GridGeometry regular(Index width, Index height, double lat0, double lon0,
                                double dlat, double dlon);

    /// Throws GridError when the geometry invariants do not hold.
    void validate() const;
    Index master_count() const;
    bool is_master(Index row, Index col) const { return master(row, col) != 0; }
};

constexpr double kEarthRadiusKm = 6371.0;

double haversine_km(double lat1, double lon1, double lat2, double lon2);

/// Distance between two cells under the geometry's metric.
double cell_distance_km(const GridGeometry& geometry, Index row_a, Index col_a, Index row_b,
                        Index col_b);

struct Site {
    Index day = 0;
    Index row = 0;
    Index col = 0;

    friend bool operator==(const Site&, const Site&) = default;
};

struct CylinderSite {
    Site site;
    /// Flat plane offsets (row * width + col) of master cells within the radius.
    std::vector<Index> cells;
};

struct CylinderIndex {
    std::vector<CylinderSite> sites;
    Index window_days = 7;
    double radius_km = 50.0;
};

CylinderIndex build_cylinders(const GridGeometry& geometry, const std::vector<Site>& sites,
                              Index total_days, double radius_km = 50.0,
                              Index window_days = 7);

/// Contiguous validation block; everything else is training data.
struct SplitSpec {
    Index total_days = 0;
    Index validation_start = 0;  // inclusive, 0-based
    Index validation_end = 0;    // inclusive, 0-based

    bool is_validation(Index day) const {
        return day >= validation_start && day <= validation_end;
    }
    Index validation_length() const { return validation_end - validation_start + 1; }
    std::vector<Index> training_days() const;
    std::vector<Index> validation_days() const;
};

constexpr Index kDaysPerYear = 365;
constexpr Index kDaysPerMonth = 30;

/// Places a validation block of `validation_days` so that the share of its days
/// before `regime_boundary_day` matches `regime_fractions[0]` to within one day.
SplitSpec make_split(Index total_days, Index regime_boundary_day,
                     std::array<double, 2> regime_fractions, Index validation_days);

inline Index month_of(Index day, Index month_length = kDaysPerMonth) {
    return day / month_length;
}
inline Index month_count(Index total_days, Index month_length = kDaysPerMonth) {
    return (total_days + month_length - 1) / month_length;
}

}  // namespace gapnet
