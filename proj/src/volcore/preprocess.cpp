#include "cortexnet/volcore/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "cortexnet/common/error.hpp"

namespace cortexnet {
namespace {

void check_target(double target) {
    if (!(target > 0.0) || !std::isfinite(target)) throw ConfigError("resample target spacing must be > 0");
}

bool already_at(const Spacing& s, double target) {
    return s[0] == target && s[1] == target && s[2] == target;
}

Dims resampled_dims(const Dims& d, const Spacing& s, double target) {
    return {resampled_extent(d.nx, s[0], target), resampled_extent(d.ny, s[1], target),
            resampled_extent(d.nz, s[2], target)};
}

/// Continuous source index of output voxel j along one axis.
double source_coord(std::size_t j, double spacing, double target) {
    return (static_cast<double>(j) + 0.5) * target / spacing - 0.5;
}

std::size_t nearest_index(double c, std::size_t n) {
    const double r = std::floor(c + 0.5);
    return static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(n - 1)));
}

struct LinearTap {
    std::size_t i0, i1;
    double w1;
};

LinearTap linear_tap(double c, std::size_t n) {
    c = std::clamp(c, 0.0, static_cast<double>(n - 1));
    const double f = std::floor(c);
    LinearTap t;
    t.i0 = static_cast<std::size_t>(f);
    t.i1 = std::min(t.i0 + 1, n - 1);
    t.w1 = c - f;
    return t;
}

/// Nearest-neighbour source index per output voxel, axis by axis.
template <typename F>
void for_each_nearest(const Dims& in, const Spacing& s, double target, const Dims& out, F&& f) {
    std::vector<std::size_t> ix(out.nx), iy(out.ny), iz(out.nz);
    for (std::size_t j = 0; j < out.nx; ++j) ix[j] = nearest_index(source_coord(j, s[0], target), in.nx);
    for (std::size_t j = 0; j < out.ny; ++j) iy[j] = nearest_index(source_coord(j, s[1], target), in.ny);
    for (std::size_t j = 0; j < out.nz; ++j) iz[j] = nearest_index(source_coord(j, s[2], target), in.nz);
    std::size_t o = 0;
    for (std::size_t z = 0; z < out.nz; ++z)
        for (std::size_t y = 0; y < out.ny; ++y)
            for (std::size_t x = 0; x < out.nx; ++x, ++o) f(o, ix[x] + in.nx * (iy[y] + in.ny * iz[z]));
}

}  // namespace

std::size_t resampled_extent(std::size_t dim, double spacing, double target) {
    const double extent = static_cast<double>(dim) * spacing / target;
    // tolerate representation error in exact multiples (e.g. 32 * 1.0 / 0.5)
    const double n = std::ceil(extent - 1e-9 * std::max(1.0, extent));
    return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

Volume resample_isotropic(const Volume& v, double target) {
    check_target(target);
    v.validate();
    if (already_at(v.spacing, target)) return v;

    const Dims od = resampled_dims(v.dims, v.spacing, target);
    Volume out(od, {target, target, target});
    std::vector<LinearTap> tx(od.nx), ty(od.ny), tz(od.nz);
    for (std::size_t j = 0; j < od.nx; ++j) tx[j] = linear_tap(source_coord(j, v.spacing[0], target), v.dims.nx);
    for (std::size_t j = 0; j < od.ny; ++j) ty[j] = linear_tap(source_coord(j, v.spacing[1], target), v.dims.ny);
    for (std::size_t j = 0; j < od.nz; ++j) tz[j] = linear_tap(source_coord(j, v.spacing[2], target), v.dims.nz);

    std::size_t o = 0;
    for (std::size_t z = 0; z < od.nz; ++z) {
        const LinearTap& cz = tz[z];
        for (std::size_t y = 0; y < od.ny; ++y) {
            const LinearTap& cy = ty[y];
            for (std::size_t x = 0; x < od.nx; ++x, ++o) {
                const LinearTap& cx = tx[x];
                auto at = [&](std::size_t i, std::size_t j, std::size_t k) {
                    return static_cast<double>(v.at(i, j, k));
                };
                const double c00 = at(cx.i0, cy.i0, cz.i0) * (1 - cx.w1) + at(cx.i1, cy.i0, cz.i0) * cx.w1;
                const double c10 = at(cx.i0, cy.i1, cz.i0) * (1 - cx.w1) + at(cx.i1, cy.i1, cz.i0) * cx.w1;
                const double c01 = at(cx.i0, cy.i0, cz.i1) * (1 - cx.w1) + at(cx.i1, cy.i0, cz.i1) * cx.w1;
                const double c11 = at(cx.i0, cy.i1, cz.i1) * (1 - cx.w1) + at(cx.i1, cy.i1, cz.i1) * cx.w1;
                const double c0 = c00 * (1 - cy.w1) + c10 * cy.w1;
                const double c1 = c01 * (1 - cy.w1) + c11 * cy.w1;
                out.data[o] = static_cast<float>(c0 * (1 - cz.w1) + c1 * cz.w1);
            }
        }
    }
    return out;
}

LabelVolume resample_isotropic(const LabelVolume& v, double target) {
    check_target(target);
    v.validate();
    if (already_at(v.spacing, target)) return v;
    const Dims od = resampled_dims(v.dims, v.spacing, target);
    LabelVolume out(od, {target, target, target}, v.num_classes);
    for_each_nearest(v.dims, v.spacing, target, od, [&](std::size_t o, std::size_t i) { out.data[o] = v.data[i]; });
    return out;
}

MetricVolume resample_isotropic(const MetricVolume& v, double target) {
    check_target(target);
    v.validate();
    if (already_at(v.spacing, target)) return v;
    const Dims od = resampled_dims(v.dims, v.spacing, target);
    MetricVolume out(od, {target, target, target});
    for_each_nearest(v.dims, v.spacing, target, od, [&](std::size_t o, std::size_t i) {
        out.mask[o] = v.mask[i];
        out.data[o] = v.mask[i] ? v.data[i] : 0.0f;
    });
    return out;
}

NormalizedVolume normalize_intensity(const Volume& v) {
    v.validate();
    NormalizedVolume result;
    result.volume = Volume(v.dims, v.spacing);
    const auto [lo_it, hi_it] = std::minmax_element(v.data.begin(), v.data.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) {
        result.constant_input = true;
        return result;
    }
    if (lo == 0.0 && hi == 1.0) {
        result.volume.data = v.data;
        return result;
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < v.data.size(); ++i)
        result.volume.data[i] = static_cast<float>((static_cast<double>(v.data[i]) - lo) / range);
    return result;
}

MetricVolume combine_metric_volumes(const MetricVolume& a, const MetricVolume& b) {
    if (!same_geometry(a, b)) throw ShapeError("combine_metric_volumes: dims or spacing mismatch");
    a.validate();
    b.validate();
    MetricVolume out(a.dims, a.spacing);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.mask[i] && b.mask[i]) {
            out.data[i] = static_cast<float>(0.5 * (static_cast<double>(a.data[i]) + static_cast<double>(b.data[i])));
            out.mask[i] = 1;
        } else if (a.mask[i]) {
            out.data[i] = a.data[i];
            out.mask[i] = 1;
        } else if (b.mask[i]) {
            out.data[i] = b.data[i];
            out.mask[i] = 1;
        }
    }
    return out;
}

}  // namespace cortexnet
