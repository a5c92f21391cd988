#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "cortexnet/nets/config.hpp"
#include "cortexnet/nets/losses.hpp"
#include "cortexnet/nets/parameters.hpp"

namespace cortexnet {

/// Single-file checkpoint: magic "CXNCKPT\0", u32 version, u64 header
/// length, JSON header (model kind, label, network config, metadata,
/// tensor names and shapes), then float32 little-endian tensor data in
/// header order. Contains no timestamps, so equal inputs give equal bytes.
struct Checkpoint {
    ModelKind kind = ModelKind::UNet;
    std::string label;
    NetworkConfig config;
    ModelParameters params;
    nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "UNetMSE", "UNetHuber", "UNetDropBlock", "UNetDropBlockHuber" or "PHiSeg".
std::string checkpoint_label(ModelKind kind, RegressionLossKind loss);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Validates the parameters against the layout implied by the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// As above, and additionally rejects a kind or config differing from the expected one.
Checkpoint load_checkpoint(const std::filesystem::path& path, ModelKind expected_kind, const NetworkConfig& expected);

}  // namespace cortexnet
