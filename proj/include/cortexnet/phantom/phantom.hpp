#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "cortexnet/volcore/volume.hpp"

namespace cortexnet {

enum class PhantomShape { Sphere, Ellipsoid };

std::string to_string(PhantomShape s);
PhantomShape parse_shape(const std::string& s);

struct IntensityLevels {
    double background = 0.1;
    double interior = 0.9;
    double shell = 0.5;
};

/// A closed shell of known thickness and curvature on a voxel grid.
struct PhantomSpec {
    PhantomShape shape = PhantomShape::Sphere;
    std::array<double, 3> outer_semi_axes{10.0, 10.0, 10.0};  ///< mm; equal for spheres
    double shell_thickness = 2.0;                             ///< mm
    Dims grid_dims{64, 64, 64};
    double spacing = 0.5;  ///< isotropic voxel size, mm
    IntensityLevels intensity;
    double blur_sigma = 0.0;  ///< Gaussian blur, mm
    double noise_sigma = 0.0;
    double center_jitter = 0.0;  ///< max offset of the centre along each axis, mm

    /// Throws InvariantError when the shell is degenerate or does not fit the
    /// grid with a two-voxel margin.
    void validate() const;
};

void to_json(nlohmann::json& j, const PhantomSpec& s);
void from_json(const nlohmann::json& j, PhantomSpec& s);

struct PhantomSubject {
    Volume image;  ///< normalised to [0, 1]
    LabelVolume labels;
    MetricVolume thickness;
    MetricVolume curvature;
    PhantomSpec spec;
    std::uint64_t seed = 0;
    std::array<double, 3> center{};  ///< mm, grid-corner origin at voxel 0's centre
};

/// Shell voxels lie outside the inner surface and inside the outer one. The
/// inner surface is the outer ellipsoid scaled by 1 - t / min(semi_axes), so
/// for a sphere it is the concentric sphere of radius R - t. Metric values
/// are taken at the nearest inner-surface point: thickness is the distance
/// along the inner normal to the outer surface, curvature is the inner
/// surface's mean curvature.
PhantomSubject generate_phantom(const PhantomSpec& spec, std::uint64_t seed);

/// Inner-surface scale factor for a spec.
double inner_scale(const PhantomSpec& spec);

}  // namespace cortexnet
