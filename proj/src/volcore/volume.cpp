#include "cortexnet/volcore/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cortexnet/common/error.hpp"

namespace cortexnet {
namespace {

void check_geometry(const Dims& dims, const Spacing& spacing, std::size_t n, const char* what) {
    if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0)
        throw InvariantError(std::string(what) + ": dims must be positive");
    for (double s : spacing)
        if (!(s > 0.0) || !std::isfinite(s))
            throw InvariantError(std::string(what) + ": spacing must be finite and > 0");
    if (n != dims.count())
        throw InvariantError(std::string(what) + ": data size " + std::to_string(n) +
                             " does not match dims " + std::to_string(dims.count()));
}

}  // namespace

bool same_geometry(const Dims& a, const Spacing& sa, const Dims& b, const Spacing& sb) {
    return a == b && sa == sb;
}

void Volume::validate() const {
    check_geometry(dims, spacing, data.size(), "Volume");
    for (float v : data)
        if (!std::isfinite(v)) throw InvariantError("Volume: non-finite value");
}

void LabelVolume::validate() const {
    check_geometry(dims, spacing, data.size(), "LabelVolume");
    if (num_classes < 2 || num_classes > 255) throw InvariantError("LabelVolume: num_classes must be in [2, 255]");
    for (std::uint8_t v : data)
        if (v >= num_classes)
            throw InvariantError("LabelVolume: label " + std::to_string(v) + " >= num_classes " +
                                 std::to_string(num_classes));
}

std::size_t LabelVolume::count_label(std::uint8_t label) const {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), label));
}

void MetricVolume::validate() const {
    check_geometry(dims, spacing, data.size(), "MetricVolume");
    if (mask.size() != data.size()) throw InvariantError("MetricVolume: mask size mismatch");
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (mask[i] > 1) throw InvariantError("MetricVolume: mask values must be 0 or 1");
        if (mask[i]) {
            if (!std::isfinite(data[i])) throw InvariantError("MetricVolume: non-finite value inside mask");
        } else if (data[i] != 0.0f) {
            throw InvariantError("MetricVolume: non-zero value outside mask");
        }
    }
}

std::size_t MetricVolume::mask_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

}  // namespace cortexnet
