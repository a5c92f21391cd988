#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cortexnet/cli/commands.hpp"
#include "cortexnet/common/error.hpp"

namespace {

using nlohmann::json;
using namespace cortexnet;

int fail(const std::string& kind, const std::string& message, int code = 1) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cortexnet: cortical segmentation and metric regression on 3D volumes"};
    app.require_subcommand(1);

    std::string config_path, out, model, loss, checkpoint, volume, manifest, predictions;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> samples, stride;
    bool print_config = false;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "overrides the config seed");
        sub->add_flag("--print-config", print_config, "print the resolved configuration and exit");
    };
    auto* phantom = app.add_subcommand("phantom", "generate a synthetic phantom cohort");
    common(phantom);
    phantom->add_option("--out", out, "output directory")->required();

    auto* train = app.add_subcommand("train", "train a model on a cohort manifest");
    common(train);
    train->add_option("--manifest", manifest, "cohort manifest")->required();
    train->add_option("--out", out, "output directory")->required();
    train->add_option("--model", model, "unet | unet_dropblock | phiseg");
    train->add_option("--loss", loss, "mse | huber");

    auto* predict = app.add_subcommand("predict", "predict whole volumes with a checkpoint");
    common(predict);
    predict->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    auto* vol_opt = predict->add_option("--volume", volume, "volume header (.json)");
    predict->add_option("--manifest", manifest, "predict the configured split of a manifest")->excludes(vol_opt);
    predict->add_option("--out", out, "output directory")->required();
    predict->add_option("--samples", samples, "number of ensemble samples");
    predict->add_option("--stride", stride, "sliding-window stride");

    auto* evaluate = app.add_subcommand("evaluate", "score prediction bundles against ground truth");
    common(evaluate);
    evaluate->add_option("--manifest", manifest, "cohort manifest")->required();
    evaluate->add_option("--predictions", predictions, "directory of per-subject bundles")->required();
    evaluate->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage_error", e.what(), 2);
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        if (seed) cfg.seed = *seed;
        if (!model.empty()) cfg.model = parse_model_kind(model);
        if (!loss.empty()) cfg.train.loss = parse_regression_loss(loss);
        if (samples) cfg.infer.samples = *samples;
        if (stride) cfg.infer.stride = *stride;
        if (print_config) {
            std::cout << json(cfg).dump(2) << std::endl;
            return 0;
        }
        cfg.validate();

        json result;
        if (phantom->parsed()) {
            result = cmd_phantom(cfg, out);
        } else if (train->parsed()) {
            result = cmd_train(cfg, manifest, out);
        } else if (predict->parsed()) {
            if (volume.empty() == manifest.empty()) return fail("usage_error", "predict needs --volume or --manifest", 2);
            result = volume.empty() ? cmd_predict_manifest(cfg, checkpoint, manifest, out)
                                    : cmd_predict_volume(cfg, checkpoint, volume, out);
        } else {
            result = cmd_evaluate(cfg, manifest, predictions, out);
        }
        std::cout << result.dump(2) << std::endl;
        return 0;
    } catch (const Error& e) {
        return fail(e.kind(), e.what());
    } catch (const std::exception& e) {
        return fail("error", e.what());
    }
}
