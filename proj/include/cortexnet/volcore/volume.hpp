#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace cortexnet {

/// Grid extent in voxels, x fastest in memory.
struct Dims {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    std::size_t count() const { return nx * ny * nz; }
    std::size_t operator[](std::size_t axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
    bool operator==(const Dims&) const = default;
};

/// Voxel edge lengths in mm along x, y, z.
using Spacing = std::array<double, 3>;

template <typename T>
struct Grid3 {
    Dims dims;
    Spacing spacing{1.0, 1.0, 1.0};
    std::vector<T> data;

    Grid3() = default;
    Grid3(Dims d, Spacing s, T fill = T{}) : dims(d), spacing(s), data(d.count(), fill) {}

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + dims.nx * (y + dims.ny * z);
    }
    T& at(std::size_t x, std::size_t y, std::size_t z) { return data[index(x, y, z)]; }
    const T& at(std::size_t x, std::size_t y, std::size_t z) const { return data[index(x, y, z)]; }
    std::size_t size() const { return data.size(); }
};

/// Real-valued intensity volume (the T2-like input and derived real grids).
struct Volume : Grid3<float> {
    using Grid3<float>::Grid3;
    /// Throws InvariantError on non-positive spacing, size mismatch or non-finite data.
    void validate() const;
};

/// Integer segmentation; class 1 is cortex.
struct LabelVolume : Grid3<std::uint8_t> {
    int num_classes = 2;

    LabelVolume() = default;
    LabelVolume(Dims d, Spacing s, int classes = 2) : Grid3<std::uint8_t>(d, s, 0), num_classes(classes) {}
    void validate() const;
    std::size_t count_label(std::uint8_t label) const;
};

/// Per-voxel metric with a validity mask (the cortical ribbon). Values are
/// exactly zero wherever the mask is clear.
struct MetricVolume : Grid3<float> {
    std::vector<std::uint8_t> mask;

    MetricVolume() = default;
    MetricVolume(Dims d, Spacing s) : Grid3<float>(d, s, 0.0f), mask(d.count(), 0) {}
    void validate() const;
    std::size_t mask_count() const;
};

bool same_geometry(const Dims& a, const Spacing& sa, const Dims& b, const Spacing& sb);

template <typename A, typename B>
bool same_geometry(const Grid3<A>& a, const Grid3<B>& b) {
    return same_geometry(a.dims, a.spacing, b.dims, b.spacing);
}

}  // namespace cortexnet
