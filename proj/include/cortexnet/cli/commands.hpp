#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "cortexnet/cli/run_config.hpp"

namespace cortexnet {

/// Each command returns a JSON summary of what it wrote.

/// Generates phantom.count subjects under out_dir.
nlohmann::json cmd_phantom(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// Trains cfg.model on the manifest's train/val splits.
nlohmann::json cmd_train(const RunConfig& cfg, const std::filesystem::path& manifest,
                         const std::filesystem::path& out_dir);

/// Predicts one volume (a .json volume header) into out_dir.
nlohmann::json cmd_predict_volume(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                  const std::filesystem::path& volume, const std::filesystem::path& out_dir);

/// Predicts every subject of infer.split into out_dir/<subject id>.
nlohmann::json cmd_predict_manifest(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                    const std::filesystem::path& manifest, const std::filesystem::path& out_dir);

/// Scores out_dir/<subject id> bundles from `predictions` against eval.split
/// and writes metrics.json, metrics.csv, cohort_summary.csv and
/// cohort_summary.svg. Throws InvariantError when the split is empty.
nlohmann::json cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& manifest,
                            const std::filesystem::path& predictions, const std::filesystem::path& out_dir);

}  // namespace cortexnet
