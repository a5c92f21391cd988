#include "cortexnet/train/sampler.hpp"

#include <algorithm>

#include "cortexnet/common/error.hpp"
#include "cortexnet/volcore/volume_io.hpp"

namespace cortexnet {

std::string to_string(TargetMetric m) { return m == TargetMetric::Thickness ? "thickness" : "curvature"; }

TargetMetric parse_target_metric(const std::string& s) {
    if (s == "thickness") return TargetMetric::Thickness;
    if (s == "curvature") return TargetMetric::Curvature;
    throw ConfigError("unknown target metric '" + s + "' (expected thickness or curvature)");
}

void TrainingSubject::validate() const {
    if (!same_geometry(image, labels) || !same_geometry(image, metric))
        throw ShapeError("subject " + id + ": image, labels and metric grids differ in geometry");
}

TrainingSubject load_subject(const ManifestRecord& record, TargetMetric target) {
    TrainingSubject s;
    s.id = record.id;
    s.image = read_real_volume(record.image);
    s.labels = read_label_volume(record.labels);
    s.metric = read_metric_volume(target == TargetMetric::Thickness ? record.thickness : record.curvature);
    s.validate();
    return s;
}

PatchSample extract_patch(const TrainingSubject& subject, std::array<std::int64_t, 3> origin, std::size_t patch_size) {
    const std::size_t P = patch_size;
    PatchSample out;
    out.image = Tensor<float>(1, P, P, P);
    out.labels.assign(P * P * P, 0);
    out.metric.assign(P * P * P, 0.0f);
    out.mask.assign(P * P * P, 0);
    out.subject_id = subject.id;
    out.origin = origin;
    const Dims& d = subject.image.dims;
    for (std::size_t z = 0; z < P; ++z) {
        const std::int64_t sz = origin[2] + static_cast<std::int64_t>(z);
        if (sz < 0 || sz >= static_cast<std::int64_t>(d.nz)) continue;
        for (std::size_t y = 0; y < P; ++y) {
            const std::int64_t sy = origin[1] + static_cast<std::int64_t>(y);
            if (sy < 0 || sy >= static_cast<std::int64_t>(d.ny)) continue;
            for (std::size_t x = 0; x < P; ++x) {
                const std::int64_t sx = origin[0] + static_cast<std::int64_t>(x);
                if (sx < 0 || sx >= static_cast<std::int64_t>(d.nx)) continue;
                const std::size_t src = subject.image.index(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy),
                                                            static_cast<std::size_t>(sz));
                const std::size_t dst = x + P * (y + P * z);
                out.image.data[dst] = subject.image.data[src];
                out.labels[dst] = subject.labels.data[src];
                out.metric[dst] = subject.metric.data[src];
                out.mask[dst] = subject.metric.mask[src];
            }
        }
    }
    return out;
}

namespace {

std::int64_t patch_start(std::size_t center, std::size_t dim, std::size_t P) {
    // Coordinates of the symmetrically padded axis, then back to subject space.
    const std::size_t padded = std::max(dim, P);
    const auto pad_before = static_cast<std::int64_t>((padded - dim) / 2);
    const std::int64_t c = static_cast<std::int64_t>(center) + pad_before;
    const std::int64_t start = std::clamp<std::int64_t>(c - static_cast<std::int64_t>(P / 2), 0,
                                                        static_cast<std::int64_t>(padded - P));
    return start - pad_before;
}

}  // namespace

std::vector<PatchSample> sample_class_balanced_patches(const TrainingSubject& subject, std::size_t n,
                                                       std::size_t patch_size, Rng& rng) {
    subject.validate();
    if (patch_size == 0) throw ConfigError("patch_size must be positive");
    std::vector<std::size_t> cortex, background;
    for (std::size_t i = 0; i < subject.labels.size(); ++i)
        (subject.labels.data[i] == 1 ? cortex : background).push_back(i);
    if (cortex.empty()) throw InvariantError("subject " + subject.id + " has an empty cortex mask");
    if (background.empty()) background = cortex;

    const Dims& d = subject.image.dims;
    std::vector<PatchSample> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const bool on_cortex = k < (n + 1) / 2;
        const auto& pool = on_cortex ? cortex : background;
        const std::size_t idx = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        const std::array<std::size_t, 3> c{idx % d.nx, (idx / d.nx) % d.ny, idx / (d.nx * d.ny)};
        PatchSample s = extract_patch(
            subject, {patch_start(c[0], d.nx, patch_size), patch_start(c[1], d.ny, patch_size), patch_start(c[2], d.nz, patch_size)},
            patch_size);
        s.center = c;
        s.cortex_centered = on_cortex;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace cortexnet
