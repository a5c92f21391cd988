#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "cortexnet/nets/config.hpp"
#include "cortexnet/phantom/cohort.hpp"
#include "cortexnet/train/trainer.hpp"

namespace cortexnet {

inline constexpr int kRunConfigSchemaVersion = 1;

struct PhantomSection {
    std::size_t count = 32;
    PhantomRanges ranges;
    SplitFractions split{0.75, 0.125, 0.125};
};

struct PreprocessSection {
    double target_spacing = 0.5;
    bool normalize = true;
};

struct InferSection {
    std::size_t patch_size = 64;
    std::size_t stride = 32;
    std::size_t samples = 1;
    double threshold = 0.5;
    std::string split = "test";  ///< manifest split predicted by `predict --manifest`
};

struct EvalSection {
    std::string split = "test";
};

/// Whole-pipeline configuration. Every field except the seed has a default.
struct RunConfig {
    int schema_version = kRunConfigSchemaVersion;
    std::optional<std::uint64_t> seed;
    ModelKind model = ModelKind::UNet;
    PhantomSection phantom;
    PreprocessSection preprocess;
    NetworkConfig network;
    TrainConfig train;
    InferSection infer;
    EvalSection eval;

    /// Throws ConfigError when the seed is missing or a section is invalid.
    void validate() const;
    std::uint64_t required_seed() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Strict: unknown keys at any level raise ConfigError.
void from_json(const nlohmann::json& j, RunConfig& c);

/// Parses a config file; throws IoError / ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace cortexnet
