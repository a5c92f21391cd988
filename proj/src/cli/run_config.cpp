#include "cortexnet/cli/run_config.hpp"

#include <fstream>

#include "cortexnet/common/error.hpp"
#include "cortexnet/common/json_util.hpp"

namespace cortexnet {

using nlohmann::json;

void RunConfig::validate() const {
    if (schema_version != kRunConfigSchemaVersion)
        throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
    required_seed();
    if (phantom.count < 1) throw ConfigError("phantom.count must be >= 1");
    phantom.ranges.validate();
    split_counts(phantom.count, phantom.split);
    if (!(preprocess.target_spacing > 0.0)) throw ConfigError("preprocess.target_spacing must be positive");
    network.validate();
    train.validate();
    if (infer.stride < 1 || infer.stride > infer.patch_size) throw ConfigError("infer.stride must lie in [1, patch_size]");
    if (infer.samples < 1) throw ConfigError("infer.samples must be >= 1");
    if (!(infer.threshold >= 0.0 && infer.threshold <= 1.0)) throw ConfigError("infer.threshold must lie in [0, 1]");
    for (const auto* s : {&infer.split, &eval.split})
        if (*s != "train" && *s != "val" && *s != "test") throw ConfigError("split must be train, val or test");
}

std::uint64_t RunConfig::required_seed() const {
    if (!seed) throw ConfigError("a top-level \"seed\" is required (config file or --seed)");
    return *seed;
}

void to_json(json& j, const RunConfig& c) {
    j = json{{"schema_version", c.schema_version},
             {"seed", c.seed ? json(*c.seed) : json()},
             {"model", to_string(c.model)},
             {"phantom",
              {{"count", c.phantom.count},
               {"ranges", c.phantom.ranges},
               {"split", {{"train", c.phantom.split.train}, {"val", c.phantom.split.val}, {"test", c.phantom.split.test}}}}},
             {"preprocess", {{"target_spacing", c.preprocess.target_spacing}, {"normalize", c.preprocess.normalize}}},
             {"network", c.network},
             {"train", c.train},
             {"infer",
              {{"patch_size", c.infer.patch_size},
               {"stride", c.infer.stride},
               {"samples", c.infer.samples},
               {"threshold", c.infer.threshold},
               {"split", c.infer.split}}},
             {"eval", {{"split", c.eval.split}}}};
}

void from_json(const json& j, RunConfig& c) {
    require_known_keys(j, {"schema_version", "seed", "model", "phantom", "preprocess", "network", "train", "infer", "eval"},
                       "config");
    read_optional(j, "schema_version", c.schema_version, "config");
    if (j.contains("seed") && !j.at("seed").is_null()) {
        std::uint64_t seed = 0;
        read_optional(j, "seed", seed, "config");
        c.seed = seed;
    }
    std::string model = to_string(c.model);
    read_optional(j, "model", model, "config");
    c.model = parse_model_kind(model);

    if (j.contains("phantom")) {
        const json& p = j.at("phantom");
        require_known_keys(p, {"count", "ranges", "split"}, "phantom");
        read_optional(p, "count", c.phantom.count, "phantom");
        if (p.contains("ranges")) c.phantom.ranges = p.at("ranges").get<PhantomRanges>();
        if (p.contains("split")) {
            const json& s = p.at("split");
            require_known_keys(s, {"train", "val", "test"}, "phantom.split");
            read_optional(s, "train", c.phantom.split.train, "phantom.split");
            read_optional(s, "val", c.phantom.split.val, "phantom.split");
            read_optional(s, "test", c.phantom.split.test, "phantom.split");
        }
    }
    if (j.contains("preprocess")) {
        const json& p = j.at("preprocess");
        require_known_keys(p, {"target_spacing", "normalize"}, "preprocess");
        read_optional(p, "target_spacing", c.preprocess.target_spacing, "preprocess");
        read_optional(p, "normalize", c.preprocess.normalize, "preprocess");
    }
    if (j.contains("network")) c.network = j.at("network").get<NetworkConfig>();
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("infer")) {
        const json& p = j.at("infer");
        require_known_keys(p, {"patch_size", "stride", "samples", "threshold", "split"}, "infer");
        read_optional(p, "patch_size", c.infer.patch_size, "infer");
        read_optional(p, "stride", c.infer.stride, "infer");
        read_optional(p, "samples", c.infer.samples, "infer");
        read_optional(p, "threshold", c.infer.threshold, "infer");
        read_optional(p, "split", c.infer.split, "infer");
    }
    if (j.contains("eval")) {
        const json& p = j.at("eval");
        require_known_keys(p, {"split"}, "eval");
        read_optional(p, "split", c.eval.split, "eval");
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return j.get<RunConfig>();
}

}  // namespace cortexnet
