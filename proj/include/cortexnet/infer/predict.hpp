#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "cortexnet/common/rng.hpp"
#include "cortexnet/nets/model.hpp"
#include "cortexnet/volcore/volume.hpp"

namespace cortexnet {

struct WindowOptions {
    std::size_t patch_size = 64;
    std::size_t stride = 32;
};

/// Whole-volume prediction: class-1 probability and regressed metric.
struct VolumePrediction {
    Volume seg_prob;
    Volume metric;
};

/// Tiles the volume, zero-padded at the high end so the windows cover it
/// exactly, with patch_size^3 windows every `stride` voxels. Window outputs
/// (softmax probabilities and metric) are averaged uniformly per voxel, then
/// the padding is cropped. Windows draw their dropout/latent noise from
/// substreams of `rng`, which may be null for deterministic models.
/// Throws ConfigError when stride is 0 or exceeds patch_size.
VolumePrediction sliding_window_predict(Model<float>& model, const ModelParameters& params, const Volume& volume,
                                        const WindowOptions& opts, Rng* rng);

struct PredictionEnsemble {
    std::vector<VolumePrediction> samples;
    Volume mean_metric;
    Volume median_metric;  ///< even N: mean of the two central values
    Volume var_metric;     ///< population variance over the samples
    Volume min_metric;
    Volume max_metric;
    Volume mean_seg_prob;
    Volume var_seg_prob;

    std::size_t size() const { return samples.size(); }
};

/// Derives the voxel-wise summary grids. Throws InvariantError on an empty
/// list and ShapeError when sample geometries differ.
PredictionEnsemble summarize_samples(std::vector<VolumePrediction> samples);

/// n sliding-window passes, sample i using the stream (seed, i). A model
/// without inference-time randomness is evaluated once and the result
/// repeated. Throws ConfigError when n < 1.
PredictionEnsemble sample_predictions(Model<float>& model, const ModelParameters& params, const Volume& volume,
                                      std::size_t n, std::uint64_t seed, const WindowOptions& opts);

/// Voxel-wise variance of the metric samples (or of the segmentation
/// probabilities); higher values mean lower confidence.
Volume confidence_map(const PredictionEnsemble& ens, bool segmentation = false);

/// Cortex (1) where the probability is >= threshold, else 0.
LabelVolume binarize_segmentation(const Volume& seg_prob, double threshold = 0.5);

/// Writes seg_prob, seg_label, metric_mean, metric_median, metric_min,
/// metric_max and (for N > 1) metric_var volumes plus prediction.json under
/// dir. `metadata` is merged into prediction.json.
void write_prediction_bundle(const std::filesystem::path& dir, const PredictionEnsemble& ens, double threshold,
                             const nlohmann::json& metadata);

struct PredictionBundle {
    Volume seg_prob;
    LabelVolume seg_label;
    Volume metric_mean, metric_median, metric_min, metric_max;
    Volume metric_var;  ///< empty when the bundle is degenerate
    nlohmann::json metadata;
};

PredictionBundle read_prediction_bundle(const std::filesystem::path& dir);

}  // namespace cortexnet
