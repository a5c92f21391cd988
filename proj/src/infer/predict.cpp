#include "cortexnet/infer/predict.hpp"

#include <algorithm>
#include <fstream>

#include "cortexnet/common/error.hpp"
#include "cortexnet/nets/losses.hpp"
#include "cortexnet/volcore/volume_io.hpp"

namespace cortexnet {

namespace {

std::size_t covered_extent(std::size_t n, std::size_t patch, std::size_t stride) {
    if (n <= patch) return patch;
    return patch + (n - patch + stride - 1) / stride * stride;
}

}  // namespace

VolumePrediction sliding_window_predict(Model<float>& model, const ModelParameters& params, const Volume& volume,
                                        const WindowOptions& opts, Rng* rng) {
    volume.validate();
    const std::size_t P = opts.patch_size;
    if (P == 0 || P % static_cast<std::size_t>(model.divisor()) != 0)
        throw ConfigError("patch_size must be a positive multiple of " + std::to_string(model.divisor()));
    if (opts.stride == 0 || opts.stride > P) throw ConfigError("stride must lie in [1, patch_size]");
    if (model.stochastic_at_inference() && !rng) throw InvariantError("stochastic model needs an RNG");

    const Dims& d = volume.dims;
    const Dims pd{covered_extent(d.nx, P, opts.stride), covered_extent(d.ny, P, opts.stride),
                  covered_extent(d.nz, P, opts.stride)};
    std::vector<double> prob_sum(d.count(), 0.0), metric_sum(d.count(), 0.0);
    std::vector<std::uint32_t> counts(d.count(), 0);
    const std::uint64_t base = rng ? (*rng)() : 0;

    Tensor<float> patch(1, P, P, P);
    std::uint64_t window = 0;
    for (std::size_t z0 = 0; z0 + P <= pd.nz; z0 += opts.stride)
        for (std::size_t y0 = 0; y0 + P <= pd.ny; y0 += opts.stride)
            for (std::size_t x0 = 0; x0 + P <= pd.nx; x0 += opts.stride, ++window) {
                std::fill(patch.data.begin(), patch.data.end(), 0.0f);
                const std::size_t xe = std::min(P, d.nx - std::min(d.nx, x0));
                for (std::size_t z = 0; z < P && z0 + z < d.nz; ++z)
                    for (std::size_t y = 0; y < P && y0 + y < d.ny; ++y)
                        std::copy_n(&volume.at(x0, y0 + y, z0 + z), xe, &patch.at(0, z, y, 0));
                Rng wrng = make_rng({base, window});
                const auto out = model.forward_infer(params, patch, rng ? &wrng : nullptr);
                const auto prob = softmax_channels(out.seg_logits);
                const std::size_t sp = P * P * P;
                for (std::size_t z = 0; z < P && z0 + z < d.nz; ++z)
                    for (std::size_t y = 0; y < P && y0 + y < d.ny; ++y)
                        for (std::size_t x = 0; x < xe; ++x) {
                            const std::size_t src = x + P * (y + P * z);
                            const std::size_t dst = volume.index(x0 + x, y0 + y, z0 + z);
                            prob_sum[dst] += prob.data[sp + src];
                            metric_sum[dst] += out.metric.data[src];
                            ++counts[dst];
                        }
            }

    VolumePrediction pred{Volume(d, volume.spacing), Volume(d, volume.spacing)};
    for (std::size_t i = 0; i < d.count(); ++i) {
        if (counts[i] == 0) throw InvariantError("sliding window left a voxel uncovered");
        pred.seg_prob.data[i] = static_cast<float>(prob_sum[i] / counts[i]);
        pred.metric.data[i] = static_cast<float>(metric_sum[i] / counts[i]);
    }
    return pred;
}

PredictionEnsemble summarize_samples(std::vector<VolumePrediction> samples) {
    if (samples.empty()) throw InvariantError("prediction ensemble needs at least one sample");
    const Dims d = samples[0].metric.dims;
    const Spacing s = samples[0].metric.spacing;
    for (const auto& p : samples)
        if (!same_geometry(p.metric, samples[0].metric) || !same_geometry(p.seg_prob, samples[0].metric))
            throw ShapeError("ensemble samples differ in geometry");

    PredictionEnsemble e;
    e.mean_metric = e.median_metric = e.var_metric = e.min_metric = e.max_metric = e.mean_seg_prob = e.var_seg_prob =
        Volume(d, s);
    const std::size_t n = samples.size();
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < d.count(); ++i) {
        double sum = 0.0, psum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            vals[k] = samples[k].metric.data[i];
            sum += vals[k];
            psum += samples[k].seg_prob.data[i];
        }
        const double mean = sum / n, pmean = psum / n;
        double var = 0.0, pvar = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            var += (vals[k] - mean) * (vals[k] - mean);
            const double dp = samples[k].seg_prob.data[i] - pmean;
            pvar += dp * dp;
        }
        std::sort(vals.begin(), vals.end());
        const double median = n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
        e.mean_metric.data[i] = static_cast<float>(mean);
        e.median_metric.data[i] = static_cast<float>(median);
        e.var_metric.data[i] = static_cast<float>(var / n);
        e.min_metric.data[i] = static_cast<float>(vals.front());
        e.max_metric.data[i] = static_cast<float>(vals.back());
        e.mean_seg_prob.data[i] = static_cast<float>(pmean);
        e.var_seg_prob.data[i] = static_cast<float>(pvar / n);
    }
    e.samples = std::move(samples);
    return e;
}

PredictionEnsemble sample_predictions(Model<float>& model, const ModelParameters& params, const Volume& volume,
                                      std::size_t n, std::uint64_t seed, const WindowOptions& opts) {
    if (n < 1) throw ConfigError("number of samples must be >= 1");
    std::vector<VolumePrediction> samples;
    if (!model.stochastic_at_inference()) {
        samples.assign(n, sliding_window_predict(model, params, volume, opts, nullptr));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            Rng rng = make_rng({seed, i});
            samples.push_back(sliding_window_predict(model, params, volume, opts, &rng));
        }
    }
    return summarize_samples(std::move(samples));
}

Volume confidence_map(const PredictionEnsemble& ens, bool segmentation) {
    return segmentation ? ens.var_seg_prob : ens.var_metric;
}

LabelVolume binarize_segmentation(const Volume& seg_prob, double threshold) {
    LabelVolume out(seg_prob.dims, seg_prob.spacing);
    for (std::size_t i = 0; i < seg_prob.size(); ++i) out.data[i] = seg_prob.data[i] >= threshold ? 1 : 0;
    return out;
}

void write_prediction_bundle(const std::filesystem::path& dir, const PredictionEnsemble& ens, double threshold,
                             const nlohmann::json& metadata) {
    std::filesystem::create_directories(dir);
    const bool degenerate = ens.size() < 2;
    write_volume(dir / "seg_prob.json", ens.mean_seg_prob);
    write_volume(dir / "seg_label.json", binarize_segmentation(ens.mean_seg_prob, threshold));
    write_volume(dir / "metric_mean.json", ens.mean_metric);
    write_volume(dir / "metric_median.json", ens.median_metric);
    write_volume(dir / "metric_min.json", ens.min_metric);
    write_volume(dir / "metric_max.json", ens.max_metric);
    if (!degenerate) write_volume(dir / "metric_var.json", ens.var_metric);

    nlohmann::json meta = metadata;
    meta["n_samples"] = ens.size();
    meta["threshold"] = threshold;
    meta["degenerate"] = degenerate;
    meta["variance"] = "population";
    meta["confidence_convention"] = "higher variance (brighter) means lower confidence";
    std::ofstream out(dir / "prediction.json");
    out << meta.dump(2) << '\n';
    if (!out) throw IoError("cannot write " + (dir / "prediction.json").string());
}

PredictionBundle read_prediction_bundle(const std::filesystem::path& dir) {
    PredictionBundle b;
    std::ifstream in(dir / "prediction.json");
    if (!in) throw IoError("missing prediction bundle metadata in " + dir.string());
    try {
        b.metadata = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed prediction.json: ") + e.what());
    }
    b.seg_prob = read_real_volume(dir / "seg_prob.json");
    b.seg_label = read_label_volume(dir / "seg_label.json");
    b.metric_mean = read_real_volume(dir / "metric_mean.json");
    b.metric_median = read_real_volume(dir / "metric_median.json");
    b.metric_min = read_real_volume(dir / "metric_min.json");
    b.metric_max = read_real_volume(dir / "metric_max.json");
    if (std::filesystem::exists(dir / "metric_var.json")) b.metric_var = read_real_volume(dir / "metric_var.json");
    return b;
}

}  // namespace cortexnet
