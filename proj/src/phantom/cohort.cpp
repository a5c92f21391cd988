#include "cortexnet/phantom/cohort.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cortexnet/common/error.hpp"
#include "cortexnet/common/json_util.hpp"
#include "cortexnet/common/parallel.hpp"
#include "cortexnet/common/rng.hpp"
#include "cortexnet/volcore/volume_io.hpp"

namespace cortexnet {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double draw(Rng& rng, const Range& r) {
    if (r.max == r.min) return r.min;
    return std::uniform_real_distribution<double>(r.min, r.max)(rng);
}

void check_range(const Range& r, const char* name) {
    if (!(r.min <= r.max)) throw ConfigError(std::string("phantom range ") + name + ": min > max");
}

json range_json(const Range& r) { return json::array({r.min, r.max}); }

Range range_from(const json& j, const char* key, Range fallback) {
    if (!j.contains(key)) return fallback;
    const auto v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw ConfigError(std::string("phantom.") + key + ": expected [min, max]");
    return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

void PhantomRanges::validate() const {
    if (shapes.empty()) throw ConfigError("phantom ranges: at least one shape required");
    check_range(semi_axis, "semi_axis");
    check_range(thickness, "thickness");
    check_range(blur_sigma, "blur_sigma");
    check_range(noise_sigma, "noise_sigma");
    check_range(center_jitter, "center_jitter");
    if (!(semi_axis.min > 0.0)) throw ConfigError("phantom ranges: semi_axis must be > 0");
    if (!(thickness.min > 0.0)) throw ConfigError("phantom ranges: thickness must be > 0");
    if (!(thickness.max < semi_axis.min))
        throw ConfigError("phantom ranges infeasible: thickness max " + std::to_string(thickness.max) +
                          " must be below the smallest semi-axis " + std::to_string(semi_axis.min));
    if (blur_sigma.min < 0.0 || noise_sigma.min < 0.0 || center_jitter.min < 0.0)
        throw ConfigError("phantom ranges: blur, noise and jitter must be >= 0");
    if (!(spacing > 0.0)) throw ConfigError("phantom ranges: spacing must be > 0");
    for (std::size_t a = 0; a < 3; ++a) {
        const double half_extent = (static_cast<double>(grid_dims[a]) - 1.0) * 0.5 * spacing;
        if (semi_axis.max + center_jitter.max + 2.0 * spacing > half_extent)
            throw ConfigError("phantom ranges infeasible: largest shell does not fit the grid on axis " +
                              std::to_string(a));
    }
}

void to_json(json& j, const PhantomRanges& r) {
    json shapes = json::array();
    for (auto s : r.shapes) shapes.push_back(to_string(s));
    j = json{{"shapes", shapes},
             {"semi_axis", range_json(r.semi_axis)},
             {"thickness", range_json(r.thickness)},
             {"grid_dims", {r.grid_dims.nx, r.grid_dims.ny, r.grid_dims.nz}},
             {"spacing", r.spacing},
             {"intensity_levels", {r.intensity.background, r.intensity.interior, r.intensity.shell}},
             {"blur_sigma", range_json(r.blur_sigma)},
             {"noise_sigma", range_json(r.noise_sigma)},
             {"center_jitter", range_json(r.center_jitter)}};
}

void from_json(const json& j, PhantomRanges& r) {
    require_known_keys(j,
                       {"shapes", "semi_axis", "thickness", "grid_dims", "spacing", "intensity_levels", "blur_sigma",
                        "noise_sigma", "center_jitter"},
                       "phantom ranges");
    try {
        if (j.contains("shapes")) {
            r.shapes.clear();
            for (const auto& s : j.at("shapes")) r.shapes.push_back(parse_shape(s.get<std::string>()));
        }
        r.semi_axis = range_from(j, "semi_axis", r.semi_axis);
        r.thickness = range_from(j, "thickness", r.thickness);
        if (j.contains("grid_dims")) {
            const auto d = j.at("grid_dims").get<std::array<std::size_t, 3>>();
            r.grid_dims = {d[0], d[1], d[2]};
        }
        read_optional(j, "spacing", r.spacing, "phantom");
        if (j.contains("intensity_levels")) {
            const auto l = j.at("intensity_levels").get<std::array<double, 3>>();
            r.intensity = {l[0], l[1], l[2]};
        }
        r.blur_sigma = range_from(j, "blur_sigma", r.blur_sigma);
        r.noise_sigma = range_from(j, "noise_sigma", r.noise_sigma);
        r.center_jitter = range_from(j, "center_jitter", r.center_jitter);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("phantom ranges: ") + e.what());
    }
}

SplitCounts split_counts(std::size_t n, const SplitFractions& f) {
    if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
        throw ConfigError("split fractions must be non-negative and sum to 1");
    SplitCounts c;
    c.val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.val));
    c.test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.test));
    if (c.val + c.test > n) throw ConfigError("split fractions leave no room for the requested counts");
    c.train = n - c.val - c.test;
    return c;
}

PhantomSpec draw_spec(const PhantomRanges& ranges, std::uint64_t seed, std::size_t index) {
    Rng rng = make_rng({seed + index, 0x73706563u});
    PhantomSpec s;
    s.shape = ranges.shapes[index % ranges.shapes.size()];
    if (s.shape == PhantomShape::Sphere) {
        const double r = draw(rng, ranges.semi_axis);
        s.outer_semi_axes = {r, r, r};
    } else {
        for (double& a : s.outer_semi_axes) a = draw(rng, ranges.semi_axis);
    }
    s.shell_thickness = draw(rng, ranges.thickness);
    s.grid_dims = ranges.grid_dims;
    s.spacing = ranges.spacing;
    s.intensity = ranges.intensity;
    s.blur_sigma = draw(rng, ranges.blur_sigma);
    s.noise_sigma = draw(rng, ranges.noise_sigma);
    s.center_jitter = draw(rng, ranges.center_jitter);
    return s;
}

fs::path generate_cohort(std::size_t n, const PhantomRanges& ranges, std::uint64_t seed, const fs::path& out_dir,
                         const SplitFractions& fractions) {
    if (n < 1) throw ConfigError("cohort size must be >= 1");
    ranges.validate();
    const SplitCounts counts = split_counts(n, fractions);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());

    std::vector<ManifestRecord> records(n);
    parallel_for(n, [&](std::size_t i) {
        ManifestRecord& r = records[i];
        char id[32];
        std::snprintf(id, sizeof id, "sub-%04zu", i);
        r.id = id;
        r.seed = seed + i;
        r.spec = draw_spec(ranges, seed, i);
        r.split = i < counts.train ? "train" : i < counts.train + counts.val ? "val" : "test";
        const PhantomSubject subject = generate_phantom(r.spec, r.seed);
        const fs::path rel(r.id);
        r.image = rel / "image.json";
        r.labels = rel / "labels.json";
        r.thickness = rel / "thickness.json";
        r.curvature = rel / "curvature.json";
        write_volume(out_dir / r.image, subject.image);
        write_volume(out_dir / r.labels, subject.labels);
        write_volume(out_dir / r.thickness, subject.thickness);
        write_volume(out_dir / r.curvature, subject.curvature);
    });

    const fs::path manifest = out_dir / "manifest.json";
    save_manifest(manifest, records);
    return manifest;
}

void save_manifest(const fs::path& manifest, const std::vector<ManifestRecord>& records) {
    json list = json::array();
    for (const auto& r : records) {
        list.push_back(json{{"id", r.id},
                            {"image", r.image.generic_string()},
                            {"labels", r.labels.generic_string()},
                            {"thickness", r.thickness.generic_string()},
                            {"curvature", r.curvature.generic_string()},
                            {"split", r.split},
                            {"seed", r.seed},
                            {"spec", r.spec}});
    }
    std::ofstream out(manifest, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + manifest.string());
    out << list.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + manifest.string());
}

std::vector<ManifestRecord> load_manifest(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw IoError("cannot open manifest " + manifest.string());
    json list;
    try {
        list = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("malformed manifest " + manifest.string() + ": " + e.what());
    }
    if (!list.is_array()) throw FormatError("manifest must be a JSON array");
    const fs::path root = fs::absolute(manifest).parent_path();
    std::vector<ManifestRecord> records;
    try {
        for (const auto& j : list) {
            ManifestRecord r;
            r.id = j.at("id").get<std::string>();
            r.image = root / j.at("image").get<std::string>();
            r.labels = root / j.at("labels").get<std::string>();
            r.thickness = root / j.at("thickness").get<std::string>();
            r.curvature = root / j.at("curvature").get<std::string>();
            r.split = j.at("split").get<std::string>();
            if (r.split != "train" && r.split != "val" && r.split != "test")
                throw FormatError("unknown split '" + r.split + "'");
            r.seed = j.at("seed").get<std::uint64_t>();
            r.spec = j.at("spec").get<PhantomSpec>();
            records.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw FormatError("malformed manifest record: " + std::string(e.what()));
    }
    return records;
}

std::vector<ManifestRecord> filter_split(const std::vector<ManifestRecord>& records, const std::string& split) {
    std::vector<ManifestRecord> out;
    for (const auto& r : records)
        if (r.split == split) out.push_back(r);
    return out;
}

}  // namespace cortexnet
