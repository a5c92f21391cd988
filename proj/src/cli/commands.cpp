#include "cortexnet/cli/commands.hpp"

#include <fstream>

#include "cortexnet/common/error.hpp"
#include "cortexnet/infer/predict.hpp"
#include "cortexnet/metrics/metrics.hpp"
#include "cortexnet/nets/checkpoint.hpp"
#include "cortexnet/volcore/preprocess.hpp"
#include "cortexnet/volcore/volume_io.hpp"

namespace cortexnet {

using nlohmann::json;

namespace {

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("cannot write " + path.string());
}

Volume preprocess(const RunConfig& cfg, const Volume& v) {
    Volume out = resample_isotropic(v, cfg.preprocess.target_spacing);
    if (cfg.preprocess.normalize) out = normalize_intensity(out).volume;
    return out;
}

json predict_one(const RunConfig& cfg, const Checkpoint& ckpt, const Volume& raw, const std::filesystem::path& out_dir,
                 const std::string& subject) {
    Model<float> model(ckpt.kind, ckpt.config);
    const Volume volume = preprocess(cfg, raw);
    const auto ens = sample_predictions(model, ckpt.params, volume, cfg.infer.samples, cfg.required_seed(),
                                        {cfg.infer.patch_size, cfg.infer.stride});
    json meta = {{"model_kind", to_string(ckpt.kind)},
                 {"label", ckpt.label},
                 {"subject", subject},
                 {"seed", cfg.required_seed()},
                 {"stride", cfg.infer.stride},
                 {"patch_size", cfg.infer.patch_size},
                 {"stochastic", model.stochastic_at_inference()},
                 {"target_metric", ckpt.metadata.value("target_metric", "thickness")}};
    write_prediction_bundle(out_dir, ens, cfg.infer.threshold, meta);
    return {{"subject", subject}, {"bundle", out_dir.string()}, {"n_samples", ens.size()}};
}

}  // namespace

json cmd_phantom(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    const auto manifest = generate_cohort(cfg.phantom.count, cfg.phantom.ranges, cfg.required_seed(), out_dir,
                                          cfg.phantom.split);
    return {{"manifest", manifest.string()}, {"subjects", cfg.phantom.count}};
}

json cmd_train(const RunConfig& cfg, const std::filesystem::path& manifest, const std::filesystem::path& out_dir) {
    cfg.validate();
    TrainConfig tc = cfg.train;
    tc.seed = cfg.required_seed();
    const auto r = train(cfg.model, cfg.network, tc, manifest, out_dir);
    return {{"checkpoint", r.checkpoint.string()},
            {"label", checkpoint_label(cfg.model, tc.loss)},
            {"log", r.log.string()},
            {"best_epoch", r.best_epoch},
            {"best_val_loss", r.best_val_loss}};
}

json cmd_predict_volume(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                        const std::filesystem::path& volume, const std::filesystem::path& out_dir) {
    cfg.validate();
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    return predict_one(cfg, ckpt, read_real_volume(volume), out_dir, volume.stem().string());
}

json cmd_predict_manifest(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                          const std::filesystem::path& manifest, const std::filesystem::path& out_dir) {
    cfg.validate();
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const auto records = filter_split(load_manifest(manifest), cfg.infer.split);
    if (records.empty()) throw InvariantError("no subjects in split '" + cfg.infer.split + "'");
    json out = json::array();
    for (const auto& r : records) out.push_back(predict_one(cfg, ckpt, read_real_volume(r.image), out_dir / r.id, r.id));
    return {{"predictions", out}};
}

json cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& manifest, const std::filesystem::path& predictions,
                  const std::filesystem::path& out_dir) {
    cfg.validate();
    const auto records = filter_split(load_manifest(manifest), cfg.eval.split);
    if (records.empty()) throw InvariantError("no subjects in split '" + cfg.eval.split + "'");
    std::filesystem::create_directories(out_dir);

    std::vector<SubjectMetrics> subjects;
    std::string metric_name;
    for (const auto& r : records) {
        const auto b = read_prediction_bundle(predictions / r.id);
        const auto target = parse_target_metric(b.metadata.value("target_metric", "thickness"));
        if (metric_name.empty()) metric_name = to_string(target);
        if (metric_name != to_string(target)) throw InvariantError("prediction bundles disagree on the target metric");
        const auto gt_labels = read_label_volume(r.labels);
        const auto gt_metric = read_metric_volume(target == TargetMetric::Thickness ? r.thickness : r.curvature);
        subjects.push_back(evaluate_subject(r.id, b.seg_label, b.metric_median, b.metric_min, b.metric_max,
                                            b.metric_var, gt_labels, gt_metric));
        write_json(out_dir / (r.id + ".json"), subjects.back());
    }
    const MetricsReport report = aggregate_report(std::move(subjects));
    std::vector<double> pred_means, gt_means;
    for (const auto& s : report.per_subject) {
        pred_means.push_back(s.predicted_global_mean);
        gt_means.push_back(s.ground_truth_global_mean);
    }
    const auto summary = cohort_summary(pred_means, gt_means);
    json report_json = report;
    report_json["target_metric"] = metric_name;
    write_json(out_dir / "metrics.json", report_json);
    write_metrics_csv(out_dir / "metrics.csv", report);
    write_cohort_summary_csv(out_dir / "cohort_summary.csv", summary);
    std::ofstream(out_dir / "cohort_summary.svg") << render_cohort_summary_svg(summary, metric_name);
    return {{"report", (out_dir / "metrics.json").string()},
            {"subjects", report.per_subject.size()},
            {"dice", report.dice},
            {"mean_abs_error", report.mean_abs_error}};
}

}  // namespace cortexnet
