#pragma once

#include "gapnet/grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace gapnet {

enum class SkewDirection { west, east };

/// Row r moves horizontally by floor(r / period) cells; period 0 disables.
struct SkewSpec {
    Index period = 0;
    SkewDirection direction = SkewDirection::west;

    bool enabled() const { return period > 0; }
    Index shift(Index row) const { return enabled() ? row / period : 0; }
    /// Signed column offset applied by skew (west is towards column 0).
    Index offset(Index row) const {
        return direction == SkewDirection::west ? -shift(row) : shift(row);
    }
};

template <typename Scalar>
struct MaskedPlane {
    Plane<Scalar> field;
    MaskPlane mask;
};

namespace detail {

template <typename Scalar>
MaskedPlane<Scalar> shift_rows(const Plane<Scalar>& field, const MaskPlane& mask,
                               const SkewSpec& spec, Index out_width, int sign,
                               const char* what) {
    if (field.rows() != mask.rows() || field.cols() != mask.cols()) {
        throw GridError(std::string(what) + ": field and mask differ in shape");
    }
    const Index height = field.rows();
    MaskedPlane<Scalar> out{Plane<Scalar>::Zero(height, out_width),
                            MaskPlane::Zero(height, out_width)};
    for (Index r = 0; r < height; ++r) {
        const Index delta = sign * spec.offset(r);
        for (Index c = 0; c < field.cols(); ++c) {
            if (!mask(r, c)) continue;
            const Index to = c + delta;
            if (to < 0 || to >= out_width) {
                std::ostringstream os;
                os << what << ": content shifted off-canvas, first offending row " << r;
                throw GridError(os.str());
            }
            out.field(r, to) = field(r, c);
            out.mask(r, to) = 1;
        }
    }
    return out;
}

// Catmull-Rom weights for offsets -1, 0, 1, 2 at fractional position t.
inline std::array<double, 4> cubic_weights(double t) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    return {-0.5 * t3 + t2 - 0.5 * t, 1.5 * t3 - 2.5 * t2 + 1.0, -1.5 * t3 + 2.0 * t2 + 0.5 * t,
            0.5 * t3 - 0.5 * t2};
}

}  // namespace detail

/// Shifts observed content of each row and transports the mask with it. Cells
/// that receive no content are mask 0. Throws if observed content would leave
/// a canvas of `out_width` columns.
template <typename Scalar>
MaskedPlane<Scalar> skew(const Plane<Scalar>& field, const MaskPlane& mask, const SkewSpec& spec,
                         Index out_width) {
    return detail::shift_rows(field, mask, spec, out_width, +1, "skew");
}

template <typename Scalar>
MaskedPlane<Scalar> skew(const Plane<Scalar>& field, const MaskPlane& mask, const SkewSpec& spec) {
    return skew(field, mask, spec, field.cols());
}

/// Exact inverse of skew onto a canvas of `out_width` columns.
template <typename Scalar>
MaskedPlane<Scalar> unskew(const Plane<Scalar>& field, const MaskPlane& mask, const SkewSpec& spec,
                           Index out_width) {
    return detail::shift_rows(field, mask, spec, out_width, -1, "unskew");
}

template <typename Scalar>
MaskedPlane<Scalar> unskew(const Plane<Scalar>& field, const MaskPlane& mask,
                           const SkewSpec& spec) {
    return unskew(field, mask, spec, field.cols());
}

/// Block mean over observed cells. A coarse cell is valid when the observed
/// share of its factor x factor block reaches `valid_threshold`; invalid
/// coarse cells hold 0.
template <typename Scalar>
MaskedPlane<Scalar> downsample(const Plane<Scalar>& field, const MaskPlane& mask, Index factor = 3,
                               double valid_threshold = 0.5) {
    if (factor < 1) throw GridError("downsample: factor must be >= 1");
    if (field.rows() % factor != 0 || field.cols() % factor != 0) {
        std::ostringstream os;
        os << "downsample: " << field.cols() << "x" << field.rows()
           << " is not divisible by factor " << factor;
        throw GridError(os.str());
    }
    const Index rows = field.rows() / factor;
    const Index cols = field.cols() / factor;
    const double block = static_cast<double>(factor * factor);
    MaskedPlane<Scalar> out{Plane<Scalar>::Zero(rows, cols), MaskPlane::Zero(rows, cols)};
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            const auto m = mask.block(r * factor, c * factor, factor, factor).template cast<Scalar>();
            const Scalar count = m.sum();
            const double share = static_cast<double>(count) / block;
            if (count > Scalar(0) && share >= valid_threshold) {
                // Average deviations from one observed value so constant blocks stay exact.
                const auto blk = field.block(r * factor, c * factor, factor, factor);
                Scalar anchor = 0;
                for (Index k = factor * factor - 1; k >= 0; --k) {
                    if (m(k / factor, k % factor) != Scalar(0)) anchor = blk(k / factor, k % factor);
                }
                out.field(r, c) = anchor + ((blk - anchor) * m).sum() / count;
                out.mask(r, c) = 1;
            }
        }
    }
    return out;
}

/// Bicubic (Catmull-Rom) interpolation of the coarse grid at fine-cell centres.
/// Where any of the 16 support cells is invalid or off-grid, falls back to
/// bilinear over the valid cells of the 2x2 neighbourhood, then to the nearest
/// valid coarse cell. Results are clamped to the range of the contributing
/// coarse values.
template <typename Scalar>
Plane<Scalar> upsample(const Plane<Scalar>& coarse, const MaskPlane& coarse_mask, Index factor = 3) {
    if (factor < 1) throw GridError("upsample: factor must be >= 1");
    if (coarse.rows() != coarse_mask.rows() || coarse.cols() != coarse_mask.cols()) {
        throw GridError("upsample: field and mask differ in shape");
    }
    const Index crow = coarse.rows();
    const Index ccol = coarse.cols();
    const auto valid = [&](Index r, Index c) {
        return r >= 0 && r < crow && c >= 0 && c < ccol && coarse_mask(r, c) != 0;
    };
    const double f = static_cast<double>(factor);
    Plane<Scalar> out = Plane<Scalar>::Zero(crow * factor, ccol * factor);
    for (Index fr = 0; fr < out.rows(); ++fr) {
        const double y = (static_cast<double>(fr) + 0.5) / f - 0.5;
        const auto iy = static_cast<Index>(std::floor(y));
        const double ty = y - static_cast<double>(iy);
        const auto wy = detail::cubic_weights(ty);
        for (Index fc = 0; fc < out.cols(); ++fc) {
            const double x = (static_cast<double>(fc) + 0.5) / f - 0.5;
            const auto ix = static_cast<Index>(std::floor(x));
            const double tx = x - static_cast<double>(ix);

            bool full = true;
            for (Index dr = -1; dr <= 2 && full; ++dr) {
                for (Index dc = -1; dc <= 2 && full; ++dc) full = valid(iy + dr, ix + dc);
            }
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            double value = 0.0;
            if (full) {
                const auto wx = detail::cubic_weights(tx);
                for (Index dr = 0; dr < 4; ++dr) {
                    for (Index dc = 0; dc < 4; ++dc) {
                        const double v = static_cast<double>(coarse(iy + dr - 1, ix + dc - 1));
                        value += wy[static_cast<std::size_t>(dr)] * wx[static_cast<std::size_t>(dc)] * v;
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
                }
            } else {
                double wsum = 0.0;
                for (Index dr = 0; dr < 2; ++dr) {
                    for (Index dc = 0; dc < 2; ++dc) {
                        if (!valid(iy + dr, ix + dc)) continue;
                        const double w = (dr ? ty : 1.0 - ty) * (dc ? tx : 1.0 - tx);
                        const double v = static_cast<double>(coarse(iy + dr, ix + dc));
                        value += w * v;
                        wsum += w;
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
                }
                if (wsum > 1e-12) {
                    value /= wsum;
                } else {
                    double best = std::numeric_limits<double>::infinity();
                    bool found = false;
                    for (Index r = 0; r < crow; ++r) {
                        for (Index c = 0; c < ccol; ++c) {
                            if (!coarse_mask(r, c)) continue;
                            const double d = (r - y) * (r - y) + (c - x) * (c - x);
                            if (d < best) {
                                best = d;
                                value = static_cast<double>(coarse(r, c));
                                found = true;
                            }
                        }
                    }
                    if (!found) value = 0.0;
                    lo = hi = value;
                }
            }
            out(fr, fc) = static_cast<Scalar>(std::clamp(value, lo, hi));
        }
    }
    return out;
}

/// Skew, crop and block-average pipeline that moves daily planes between the
/// full grid and the reduced grid models operate on.
struct Footprint {
    SkewSpec skew;
    Index skew_width = 0;  // canvas width after skewing; 0 keeps the input width
    Index factor = 1;
    double valid_threshold = 0.5;

    bool identity() const { return !skew.enabled() && factor == 1; }
};

/// Reduced-resolution view of a dataset plus the coarse valid region.
struct ReducedData {
    AnomalyCube cube;
    MaskCube extra;  // reduced additional-damage masks, empty when not supplied
    MaskPlane master;
};

MaskedPlane<float> reduce_plane(const Plane<float>& field, const MaskPlane& mask,
                                const Footprint& fp);
MaskPlane reduce_mask(const MaskPlane& mask, const Footprint& fp);
/// Upsample a reduced plane with `coarse_valid` as the interpolation mask and
/// unskew it back onto a `full_width`-column canvas. Cells outside
/// `full_master` are 0.
Plane<float> restore_plane(const Plane<float>& coarse, const MaskPlane& coarse_valid,
                           const MaskPlane& full_master, const Footprint& fp);

ReducedData reduce_dataset(const AnomalyCube& cube, const MaskCube* extra,
                           const MaskPlane& master, const Footprint& fp);

}  // namespace gapnet
