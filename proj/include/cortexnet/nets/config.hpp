#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace cortexnet {

enum class ModelKind { UNet, UNetDropBlock, PHiSeg };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);  ///< "unet" | "unet_dropblock" | "phiseg"

enum class Padding { Zero, Periodic };

struct DropBlockConfig {
    int block_size = 3;
    double drop_rate = 0.1;
    bool active_at_inference = true;
};

struct LatentConfig {
    int num_levels = 3;
    int latent_dim = 4;
};

/// Architecture hyperparameters. Channel width at level l is
/// base_channels * channel_growth^l; the U-Net bottleneck sits at level
/// `levels`, so patch sides must be divisible by 2^levels.
struct NetworkConfig {
    int levels = 3;
    int base_channels = 16;
    int channel_growth = 2;
    int convs_per_block = 2;
    int num_classes = 2;
    int regression_hidden = 64;
    DropBlockConfig dropblock;
    LatentConfig latent;
    Padding padding = Padding::Zero;
    double norm_epsilon = 1e-5;

    void validate() const;
    int channels(int level) const;
    /// Patch sides must be multiples of this.
    int divisor(ModelKind kind) const;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
/// Strict: unknown keys raise ConfigError; missing keys keep defaults.
void from_json(const nlohmann::json& j, NetworkConfig& c);

}  // namespace cortexnet
