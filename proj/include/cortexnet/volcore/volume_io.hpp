#pragma once

#include <filesystem>
#include <variant>

#include "cortexnet/volcore/volume.hpp"

namespace cortexnet {

enum class VolumeKind { Real, Label, Metric };

using AnyVolume = std::variant<Volume, LabelVolume, MetricVolume>;

/// Native on-disk format: `<stem>.json` header
///   { "dims": [x,y,z], "spacing": [sx,sy,sz], "kind": "real"|"label"|"metric", "has_mask": bool }
/// plus `<stem>.raw` little-endian payload, x fastest. Real and metric data
/// are float32; labels and masks are uint8, the mask following the metric
/// values. Label headers also carry "num_classes".
///
/// `header` is the path of the .json file; the payload path is derived from it.
std::filesystem::path payload_path(const std::filesystem::path& header);

void write_volume(const std::filesystem::path& header, const Volume& v);
void write_volume(const std::filesystem::path& header, const LabelVolume& v);
void write_volume(const std::filesystem::path& header, const MetricVolume& v);

/// Throws IoError when files are missing, FormatError on malformed headers or
/// payload size mismatch, InvariantError on non-finite or out-of-range values.
AnyVolume read_volume(const std::filesystem::path& header);

Volume read_real_volume(const std::filesystem::path& header);
LabelVolume read_label_volume(const std::filesystem::path& header);
MetricVolume read_metric_volume(const std::filesystem::path& header);

}  // namespace cortexnet
