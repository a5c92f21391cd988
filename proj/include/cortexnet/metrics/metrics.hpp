#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cortexnet/volcore/volume.hpp"

namespace cortexnet {

struct DiceScore {
    double value = 0.0;
    bool both_empty = false;  ///< neither volume contains the class; value is 1
};

/// 2|P n G| / (|P| + |G|) for voxels equal to `cls`.
DiceScore dice(const LabelVolume& pred, const LabelVolume& gt, std::uint8_t cls = 1);

struct MaskedError {
    double mean_abs = 0.0;
    double median_abs = 0.0;  ///< even counts average the two central values
    std::size_t count = 0;
};

/// Absolute differences over gt.mask. Throws InvariantError on an empty mask.
MaskedError masked_error(const Volume& pred, const MetricVolume& gt);

/// 100 * share of mask voxels with min <= gt <= max.
double percent_in_range(const Volume& min_grid, const Volume& max_grid, const MetricVolume& gt);

/// Pearson r between the two grids over `mask`; nullopt when either series
/// is constant there. Throws InvariantError on an empty mask.
std::optional<double> confidence_error_correlation(const Volume& var_grid, const Volume& abs_err_grid,
                                                   std::span<const std::uint8_t> mask);

/// |pred - gt| voxel-wise (zero outside the mask).
Volume abs_error_grid(const Volume& pred, const MetricVolume& gt);

inline constexpr std::array<double, 5> kSummaryPercentiles{5, 25, 50, 75, 95};

/// Nearest-rank quantiles at kSummaryPercentiles. Throws InvariantError on an empty list.
std::array<double, 5> nearest_rank_quantiles(std::vector<double> values);

struct CohortSummary {
    std::array<double, 5> predicted{};
    std::array<double, 5> ground_truth{};
    std::vector<double> predicted_means;
    std::vector<double> ground_truth_means;
};

/// Quantiles of per-subject global mean metric values.
CohortSummary cohort_summary(const std::vector<double>& predicted_means, const std::vector<double>& ground_truth_means);

void write_cohort_summary_csv(const std::filesystem::path& path, const CohortSummary& s);
/// Box-and-whisker style comparison of the two distributions.
std::string render_cohort_summary_svg(const CohortSummary& s, const std::string& metric_name);

struct SubjectMetrics {
    std::string subject;
    DiceScore dice;
    MaskedError error;
    double percent_in_range = 0.0;
    std::optional<double> confidence_error_correlation;  ///< needs a non-degenerate ensemble
    std::size_t n_cortex_voxels = 0;  ///< ground-truth metric mask size
    double predicted_global_mean = 0.0;  ///< over the predicted cortex (gt mask if empty)
    double ground_truth_global_mean = 0.0;
};

struct MetricsReport {
    double dice = 0.0;
    double mean_abs_error = 0.0;
    double median_abs_error = 0.0;
    double percent_in_range = 0.0;
    std::optional<double> confidence_error_correlation;  ///< mean over subjects where defined
    std::size_t n_cortex_voxels = 0;
    std::vector<SubjectMetrics> per_subject;
};

/// Scores one subject. `metric` is the point prediction (ensemble median),
/// `var` may be empty for degenerate ensembles.
SubjectMetrics evaluate_subject(const std::string& subject, const LabelVolume& pred_labels, const Volume& metric,
                                const Volume& min_grid, const Volume& max_grid, const Volume& var,
                                const LabelVolume& gt_labels, const MetricVolume& gt_metric);

/// Means over subjects. Throws InvariantError on an empty cohort.
MetricsReport aggregate_report(std::vector<SubjectMetrics> subjects);

void to_json(nlohmann::json& j, const SubjectMetrics& s);
void to_json(nlohmann::json& j, const MetricsReport& r);

/// `subject,dice,mean_abs,median_abs,pct_in_range,conf_corr` rows plus a final "mean" row.
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& r);

}  // namespace cortexnet
