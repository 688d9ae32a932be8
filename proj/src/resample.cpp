#include "gapnet/resample.hpp"

namespace gapnet {
namespace {

Index canvas_width(const Footprint& fp, Index width) {
    return fp.skew_width > 0 ? fp.skew_width : width;
}

}  // namespace

MaskedPlane<float> reduce_plane(const Plane<float>& field, const MaskPlane& mask,
                                const Footprint& fp) {
    auto skewed = skew(field, mask, fp.skew, canvas_width(fp, field.cols()));
    if (fp.factor == 1) return skewed;
    return downsample(skewed.field, skewed.mask, fp.factor, fp.valid_threshold);
}

MaskPlane reduce_mask(const MaskPlane& mask, const Footprint& fp) {
    return reduce_plane(mask.cast<float>(), mask, fp).mask;
}

Plane<float> restore_plane(const Plane<float>& coarse, const MaskPlane& coarse_valid,
                           const MaskPlane& full_master, const Footprint& fp) {
    const Index width = full_master.cols();
    const Plane<float> fine = fp.factor == 1 ? coarse : upsample(coarse, coarse_valid, fp.factor);
    const MaskPlane skewed_master =
        skew(Plane<float>(full_master.cast<float>()), full_master, fp.skew, canvas_width(fp, width))
            .mask;
    auto back = unskew(fine, skewed_master, fp.skew, width);
    return back.field;
}

ReducedData reduce_dataset(const AnomalyCube& cube, const MaskCube* extra,
                           const MaskPlane& master, const Footprint& fp) {
    ReducedData out;
    out.master = reduce_mask(master, fp);
    const Index rows = out.master.rows();
    const Index cols = out.master.cols();
    out.cube = AnomalyCube(cube.days(), cols, rows);
    if (extra) out.extra = MaskCube(cube.days(), cols, rows);
    for (Index t = 0; t < cube.days(); ++t) {
        const MaskPlane m = cube.mask().day(t) * master;
        auto reduced = reduce_plane(cube.day(t), m, fp);
        out.cube.day(t) = reduced.field;
        out.cube.mask().day(t) = reduced.mask * out.master;
        if (extra) {
            const MaskPlane e = extra->day(t) * master;
            out.extra.day(t) = reduce_mask(e, fp) * out.cube.mask().day(t);
        }
    }
    return out;
}

}  // namespace gapnet
