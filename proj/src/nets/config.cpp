#include "cortexnet/nets/config.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "cortexnet/common/error.hpp"
#include "cortexnet/common/json_util.hpp"

namespace cortexnet {

using nlohmann::json;

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::UNet: return "unet";
        case ModelKind::UNetDropBlock: return "unet_dropblock";
        case ModelKind::PHiSeg: return "phiseg";
    }
    return "unknown";
}

ModelKind parse_model_kind(const std::string& s) {
    if (s == "unet") return ModelKind::UNet;
    if (s == "unet_dropblock") return ModelKind::UNetDropBlock;
    if (s == "phiseg") return ModelKind::PHiSeg;
    throw ConfigError("unknown model kind '" + s + "' (expected unet, unet_dropblock or phiseg)");
}

void NetworkConfig::validate() const {
    if (levels < 2) throw ConfigError("network.levels must be >= 2");
    if (64 % (1 << std::min(levels, 30)) != 0) throw ConfigError("network.levels: 64 must be divisible by 2^levels");
    if (base_channels < 1) throw ConfigError("network.base_channels must be >= 1");
    if (channel_growth < 1) throw ConfigError("network.channel_growth must be >= 1");
    if (convs_per_block < 1) throw ConfigError("network.convs_per_block must be >= 1");
    if (num_classes != 2) throw ConfigError("network.num_classes must be 2");
    if (regression_hidden < 1) throw ConfigError("network.regression_hidden must be >= 1");
    if (dropblock.block_size < 1 || dropblock.block_size % 2 == 0)
        throw ConfigError("network.dropblock.block_size must be odd and >= 1");
    if (!(dropblock.drop_rate >= 0.0 && dropblock.drop_rate <= 1.0))
        throw ConfigError("network.dropblock.drop_rate must be in [0, 1]");
    if (latent.num_levels < 1 || latent.num_levels > 6) throw ConfigError("network.latent.num_levels must be in [1, 6]");
    if (latent.latent_dim < 1) throw ConfigError("network.latent.latent_dim must be >= 1");
    if (!(norm_epsilon > 0.0)) throw ConfigError("network.norm_epsilon must be > 0");
}

int NetworkConfig::channels(int level) const {
    int c = base_channels;
    for (int l = 0; l < level; ++l) c *= channel_growth;
    return c;
}

int NetworkConfig::divisor(ModelKind kind) const {
    return kind == ModelKind::PHiSeg ? 1 << (latent.num_levels - 1) : 1 << levels;
}

namespace {

std::string padding_name(Padding p) { return p == Padding::Periodic ? "periodic" : "zero"; }

Padding parse_padding(const std::string& s) {
    if (s == "zero") return Padding::Zero;
    if (s == "periodic") return Padding::Periodic;
    throw ConfigError("network.padding: expected 'zero' or 'periodic', got '" + s + "'");
}

}  // namespace

void to_json(json& j, const NetworkConfig& c) {
    j = json{{"levels", c.levels},
             {"base_channels", c.base_channels},
             {"channel_growth", c.channel_growth},
             {"convs_per_block", c.convs_per_block},
             {"num_classes", c.num_classes},
             {"regression_hidden", c.regression_hidden},
             {"dropblock",
              {{"block_size", c.dropblock.block_size},
               {"drop_rate", c.dropblock.drop_rate},
               {"active_at_inference", c.dropblock.active_at_inference}}},
             {"latent", {{"num_levels", c.latent.num_levels}, {"latent_dim", c.latent.latent_dim}}},
             {"padding", padding_name(c.padding)},
             {"norm_epsilon", c.norm_epsilon}};
}

void from_json(const json& j, NetworkConfig& c) {
    require_known_keys(j,
                       {"levels", "base_channels", "channel_growth", "convs_per_block", "num_classes",
                        "regression_hidden", "dropblock", "latent", "padding", "norm_epsilon"},
                       "network");
    read_optional(j, "levels", c.levels, "network");
    read_optional(j, "base_channels", c.base_channels, "network");
    read_optional(j, "channel_growth", c.channel_growth, "network");
    read_optional(j, "convs_per_block", c.convs_per_block, "network");
    read_optional(j, "num_classes", c.num_classes, "network");
    read_optional(j, "regression_hidden", c.regression_hidden, "network");
    read_optional(j, "norm_epsilon", c.norm_epsilon, "network");
    if (j.contains("dropblock")) {
        const json& d = j.at("dropblock");
        require_known_keys(d, {"block_size", "drop_rate", "active_at_inference"}, "network.dropblock");
        read_optional(d, "block_size", c.dropblock.block_size, "network.dropblock");
        read_optional(d, "drop_rate", c.dropblock.drop_rate, "network.dropblock");
        read_optional(d, "active_at_inference", c.dropblock.active_at_inference, "network.dropblock");
    }
    if (j.contains("latent")) {
        const json& l = j.at("latent");
        require_known_keys(l, {"num_levels", "latent_dim"}, "network.latent");
        read_optional(l, "num_levels", c.latent.num_levels, "network.latent");
        read_optional(l, "latent_dim", c.latent.latent_dim, "network.latent");
    }
    if (j.contains("padding")) {
        std::string p;
        read_optional(j, "padding", p, "network");
        c.padding = parse_padding(p);
    }
}

}  // namespace cortexnet
