#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cortexnet/phantom/phantom.hpp"

namespace cortexnet {

struct Range {
    double min = 0.0;
    double max = 0.0;
};

/// Per-field draw ranges for a cohort. Subject i uses shapes[i % shapes.size()].
struct PhantomRanges {
    std::vector<PhantomShape> shapes{PhantomShape::Sphere, PhantomShape::Ellipsoid};
    Range semi_axis{9.0, 13.0};
    Range thickness{1.5, 3.0};
    Dims grid_dims{64, 64, 64};
    double spacing = 0.5;
    IntensityLevels intensity;
    Range blur_sigma{0.0, 0.5};
    Range noise_sigma{0.0, 0.03};
    Range center_jitter{0.0, 1.0};

    /// Throws ConfigError when some draw could violate PhantomSpec invariants.
    void validate() const;
};

void to_json(nlohmann::json& j, const PhantomRanges& r);
void from_json(const nlohmann::json& j, PhantomRanges& r);

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct SplitCounts {
    std::size_t train = 0, val = 0, test = 0;
};

/// val = round(n*val), test = round(n*test), train takes the remainder.
SplitCounts split_counts(std::size_t n, const SplitFractions& f);

struct ManifestRecord {
    std::string id;
    std::filesystem::path image;
    std::filesystem::path labels;
    std::filesystem::path thickness;
    std::filesystem::path curvature;
    std::string split;  ///< "train" | "val" | "test"
    std::uint64_t seed = 0;
    PhantomSpec spec;
};

/// Manifest file: a JSON array of records with paths relative to the
/// manifest's directory. load_manifest resolves them to absolute paths.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& manifest);
void save_manifest(const std::filesystem::path& manifest, const std::vector<ManifestRecord>& records);

std::vector<ManifestRecord> filter_split(const std::vector<ManifestRecord>& records, const std::string& split);

/// Draws the spec of subject `index` (seeded with seed + index).
PhantomSpec draw_spec(const PhantomRanges& ranges, std::uint64_t seed, std::size_t index);

/// Writes n phantom subjects under out_dir (one directory per subject) and
/// returns the manifest path. Output is a pure function of (n, ranges, seed,
/// fractions).
std::filesystem::path generate_cohort(std::size_t n, const PhantomRanges& ranges, std::uint64_t seed,
                                      const std::filesystem::path& out_dir, const SplitFractions& fractions = {});

}  // namespace cortexnet
