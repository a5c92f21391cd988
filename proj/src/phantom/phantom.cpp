#include "cortexnet/phantom/phantom.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "cortexnet/common/error.hpp"
#include "cortexnet/common/rng.hpp"
#include "cortexnet/phantom/ellipsoid.hpp"
#include "cortexnet/volcore/preprocess.hpp"

namespace cortexnet {
namespace {

void blur_axis(std::vector<double>& data, const Dims& d, int axis, const std::vector<double>& kernel) {
    const int radius = static_cast<int>(kernel.size() / 2);
    const std::size_t n = d[static_cast<std::size_t>(axis)];
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
    std::vector<double> line(n), out(n);
    const std::size_t lines = d.count() / n;
    for (std::size_t l = 0; l < lines; ++l) {
        std::size_t base;
        if (axis == 0) base = l * d.nx;
        else if (axis == 1) base = (l % d.nx) + (l / d.nx) * d.nx * d.ny;
        else base = l;
        for (std::size_t i = 0; i < n; ++i) line[i] = data[base + i * stride];
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const long j = std::clamp(static_cast<long>(i) + k, 0L, static_cast<long>(n) - 1);
                acc += kernel[static_cast<std::size_t>(k + radius)] * line[static_cast<std::size_t>(j)];
            }
            out[i] = acc;
        }
        for (std::size_t i = 0; i < n; ++i) data[base + i * stride] = out[i];
    }
}

void gaussian_blur(std::vector<double>& data, const Dims& d, double sigma_voxels) {
    if (sigma_voxels <= 0.0) return;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_voxels)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double w = std::exp(-0.5 * (k * k) / (sigma_voxels * sigma_voxels));
        kernel[static_cast<std::size_t>(k + radius)] = w;
        sum += w;
    }
    for (double& w : kernel) w /= sum;
    for (int axis = 0; axis < 3; ++axis) blur_axis(data, d, axis, kernel);
}

}  // namespace

std::string to_string(PhantomShape s) { return s == PhantomShape::Sphere ? "sphere" : "ellipsoid"; }

PhantomShape parse_shape(const std::string& s) {
    if (s == "sphere") return PhantomShape::Sphere;
    if (s == "ellipsoid") return PhantomShape::Ellipsoid;
    throw ConfigError("unknown phantom shape '" + s + "'");
}

void PhantomSpec::validate() const {
    const double min_axis = *std::min_element(outer_semi_axes.begin(), outer_semi_axes.end());
    if (!(min_axis > 0.0)) throw InvariantError("phantom: semi-axes must be > 0");
    if (shape == PhantomShape::Sphere &&
        (outer_semi_axes[0] != outer_semi_axes[1] || outer_semi_axes[1] != outer_semi_axes[2]))
        throw InvariantError("phantom: sphere requires equal semi-axes");
    if (!(shell_thickness > 0.0) || !(shell_thickness < min_axis))
        throw InvariantError("phantom: shell_thickness must be in (0, min semi-axis)");
    if (!(spacing > 0.0)) throw InvariantError("phantom: spacing must be > 0");
    if (grid_dims.count() == 0) throw InvariantError("phantom: grid dims must be positive");
    if (blur_sigma < 0.0 || noise_sigma < 0.0 || center_jitter < 0.0)
        throw InvariantError("phantom: blur_sigma, noise_sigma and center_jitter must be >= 0");
    for (std::size_t a = 0; a < 3; ++a) {
        const double half_extent = (static_cast<double>(grid_dims[a]) - 1.0) * 0.5 * spacing;
        if (outer_semi_axes[a] + center_jitter + 2.0 * spacing > half_extent)
            throw InvariantError("phantom: shell does not fit the grid with a two-voxel margin on axis " +
                                 std::to_string(a));
    }
}

double inner_scale(const PhantomSpec& spec) {
    const double min_axis = *std::min_element(spec.outer_semi_axes.begin(), spec.outer_semi_axes.end());
    return 1.0 - spec.shell_thickness / min_axis;
}

PhantomSubject generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng = make_rng({seed, 0x70686e74u});

    PhantomSubject s;
    s.spec = spec;
    s.seed = seed;
    for (std::size_t a = 0; a < 3; ++a) {
        const double mid = (static_cast<double>(spec.grid_dims[a]) - 1.0) * 0.5 * spec.spacing;
        const double jitter = spec.center_jitter > 0.0
                                  ? std::uniform_real_distribution<double>(-spec.center_jitter, spec.center_jitter)(rng)
                                  : 0.0;
        s.center[a] = mid + jitter;
    }

    const Dims d = spec.grid_dims;
    const Spacing sp{spec.spacing, spec.spacing, spec.spacing};
    s.labels = LabelVolume(d, sp, 2);
    s.thickness = MetricVolume(d, sp);
    s.curvature = MetricVolume(d, sp);

    const Ellipsoid outer{spec.outer_semi_axes};
    const Ellipsoid inner = outer.scaled(inner_scale(spec));
    const bool sphere = spec.shape == PhantomShape::Sphere;
    const double sphere_curvature = 1.0 / (spec.outer_semi_axes[0] - spec.shell_thickness);

    std::vector<double> intensity(d.count());
    std::size_t i = 0;
    for (std::size_t z = 0; z < d.nz; ++z) {
        for (std::size_t y = 0; y < d.ny; ++y) {
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                const Vec3 p(x * spec.spacing - s.center[0], y * spec.spacing - s.center[1],
                             z * spec.spacing - s.center[2]);
                if (outer.implicit(p) > 1.0) {
                    intensity[i] = spec.intensity.background;
                    continue;
                }
                if (inner.implicit(p) <= 1.0) {
                    intensity[i] = spec.intensity.interior;
                    continue;
                }
                intensity[i] = spec.intensity.shell;
                s.labels.data[i] = 1;
                s.thickness.mask[i] = 1;
                s.curvature.mask[i] = 1;
                if (sphere) {
                    s.thickness.data[i] = static_cast<float>(spec.shell_thickness);
                    s.curvature.data[i] = static_cast<float>(sphere_curvature);
                } else {
                    const Vec3 q = nearest_surface_point(inner, p).point;
                    const Vec3 n = inner.unit_normal(q);
                    s.thickness.data[i] = static_cast<float>(ray_exit_distance(outer, q, n));
                    s.curvature.data[i] = static_cast<float>(mean_curvature(inner, q));
                }
            }
        }
    }

    gaussian_blur(intensity, d, spec.blur_sigma / spec.spacing);
    if (spec.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, spec.noise_sigma);
        for (double& v : intensity) v += noise(rng);
    }
    Volume raw(d, sp);
    for (std::size_t k = 0; k < intensity.size(); ++k) raw.data[k] = static_cast<float>(intensity[k]);
    s.image = normalize_intensity(raw).volume;
    return s;
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
    j = nlohmann::json{
        {"shape", to_string(s.shape)},
        {"outer_semi_axes", s.outer_semi_axes},
        {"shell_thickness", s.shell_thickness},
        {"grid_dims", {s.grid_dims.nx, s.grid_dims.ny, s.grid_dims.nz}},
        {"spacing", s.spacing},
        {"intensity_levels", {s.intensity.background, s.intensity.interior, s.intensity.shell}},
        {"blur_sigma", s.blur_sigma},
        {"noise_sigma", s.noise_sigma},
        {"center_jitter", s.center_jitter},
    };
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
    s.shape = parse_shape(j.at("shape").get<std::string>());
    s.outer_semi_axes = j.at("outer_semi_axes").get<std::array<double, 3>>();
    s.shell_thickness = j.at("shell_thickness").get<double>();
    const auto dims = j.at("grid_dims").get<std::array<std::size_t, 3>>();
    s.grid_dims = {dims[0], dims[1], dims[2]};
    s.spacing = j.at("spacing").get<double>();
    const auto levels = j.at("intensity_levels").get<std::array<double, 3>>();
    s.intensity = {levels[0], levels[1], levels[2]};
    s.blur_sigma = j.at("blur_sigma").get<double>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    s.center_jitter = j.at("center_jitter").get<double>();
}

}  // namespace cortexnet
