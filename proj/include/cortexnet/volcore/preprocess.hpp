#pragma once

#include "cortexnet/volcore/volume.hpp"

namespace cortexnet {

constexpr double kDefaultTargetSpacing = 0.5;

/// Output dims along one axis: ceil(dim * spacing / target), never cropping.
std::size_t resampled_extent(std::size_t dim, double spacing, double target);

/// Resamples onto an isotropic grid of `target` mm. Output voxel j sits at
/// physical position (j + 0.5) * target from the grid corner. Intensities are
/// trilinear with edge clamping; labels, masks and metric values use nearest
/// neighbour. Resampling at the volume's own spacing returns the data unchanged.
Volume resample_isotropic(const Volume& v, double target = kDefaultTargetSpacing);
LabelVolume resample_isotropic(const LabelVolume& v, double target = kDefaultTargetSpacing);
MetricVolume resample_isotropic(const MetricVolume& v, double target = kDefaultTargetSpacing);

struct NormalizedVolume {
    Volume volume;
    bool constant_input = false;  ///< max == min; output is all zeros
};

/// Min-max rescale to [0, 1].
NormalizedVolume normalize_intensity(const Volume& v);

/// Merges two metric volumes over the union of their masks, averaging where
/// both are defined. Throws ShapeError on dims or spacing mismatch.
MetricVolume combine_metric_volumes(const MetricVolume& a, const MetricVolume& b);

}  // namespace cortexnet
