#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cortexnet/common/rng.hpp"
#include "cortexnet/nets/tensor.hpp"
#include "cortexnet/phantom/cohort.hpp"
#include "cortexnet/volcore/volume.hpp"

namespace cortexnet {

enum class TargetMetric { Thickness, Curvature };

std::string to_string(TargetMetric m);
TargetMetric parse_target_metric(const std::string& s);  ///< "thickness" | "curvature"

/// One subject's aligned image, segmentation and regression target.
struct TrainingSubject {
    std::string id;
    Volume image;
    LabelVolume labels;
    MetricVolume metric;

    /// Throws ShapeError unless all three grids share dims and spacing.
    void validate() const;
};

TrainingSubject load_subject(const ManifestRecord& record, TargetMetric target);

struct PatchSample {
    Tensor<float> image;                ///< 1 x P x P x P, (z, y, x) order
    std::vector<std::uint8_t> labels;   ///< P^3
    std::vector<float> metric;          ///< P^3, zero outside the mask
    std::vector<std::uint8_t> mask;     ///< P^3
    std::string subject_id;
    std::array<std::size_t, 3> center{};   ///< drawn voxel (x, y, z) in subject coordinates
    std::array<std::int64_t, 3> origin{};  ///< patch corner (x, y, z); negative inside zero padding
    bool cortex_centered = false;
};

/// Draws ceil(n/2) patches centred on uniformly chosen cortex voxels, then
/// floor(n/2) centred on non-cortex voxels. Volumes smaller than the patch
/// are zero-padded symmetrically and centres are clamped so every patch lies
/// inside the padded volume. Throws InvariantError when the subject has no
/// cortex voxel.
std::vector<PatchSample> sample_class_balanced_patches(const TrainingSubject& subject, std::size_t n,
                                                       std::size_t patch_size, Rng& rng);

/// Extracts the patch whose corner is `origin`; voxels outside the subject read as zero.
PatchSample extract_patch(const TrainingSubject& subject, std::array<std::int64_t, 3> origin, std::size_t patch_size);

}  // namespace cortexnet
