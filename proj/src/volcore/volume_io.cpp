#include "cortexnet/volcore/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "cortexnet/common/error.hpp"

namespace cortexnet {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(sizeof(float) == 4);

const char* kind_name(VolumeKind k) {
    switch (k) {
        case VolumeKind::Real: return "real";
        case VolumeKind::Label: return "label";
        case VolumeKind::Metric: return "metric";
    }
    return "?";
}

void append_floats(std::vector<char>& out, const std::vector<float>& values) {
    const std::size_t start = out.size();
    out.resize(start + values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &values[i], 4);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        std::memcpy(out.data() + start + i * 4, &bits, 4);
    }
}

void read_floats(const char* src, std::vector<float>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, src + i * 4, 4);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        std::memcpy(&values[i], &bits, 4);
    }
}

void write_files(const fs::path& header, VolumeKind kind, const Dims& dims, const Spacing& spacing,
                 bool has_mask, int num_classes, const std::vector<char>& payload) {
    json h;
    h["dims"] = {dims.nx, dims.ny, dims.nz};
    h["spacing"] = {spacing[0], spacing[1], spacing[2]};
    h["kind"] = kind_name(kind);
    h["has_mask"] = has_mask;
    if (kind == VolumeKind::Label) h["num_classes"] = num_classes;
    h["payload"] = payload_path(header).filename().string();

    if (header.has_parent_path()) fs::create_directories(header.parent_path());
    std::ofstream hs(header, std::ios::binary | std::ios::trunc);
    if (!hs) throw IoError("cannot open for writing: " + header.string());
    hs << h.dump(2) << '\n';
    if (!hs) throw IoError("write failed: " + header.string());

    const fs::path raw = payload_path(header);
    std::ofstream ps(raw, std::ios::binary | std::ios::trunc);
    if (!ps) throw IoError("cannot open for writing: " + raw.string());
    ps.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!ps) throw IoError("write failed: " + raw.string());
}

struct Header {
    VolumeKind kind;
    Dims dims;
    Spacing spacing;
    bool has_mask;
    int num_classes;
};

Header parse_header(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open volume header: " + path.string());
    json h;
    try {
        h = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("malformed volume header " + path.string() + ": " + e.what());
    }
    try {
        Header out{};
        const auto& d = h.at("dims");
        const auto& s = h.at("spacing");
        if (!d.is_array() || d.size() != 3 || !s.is_array() || s.size() != 3)
            throw FormatError("dims and spacing must be 3-element arrays");
        for (const auto& e : d)
            if (!e.is_number_integer() || e.get<long long>() <= 0)
                throw FormatError("dims must be positive integers");
        out.dims = {d[0].get<std::size_t>(), d[1].get<std::size_t>(), d[2].get<std::size_t>()};
        for (int i = 0; i < 3; ++i) {
            if (!s[i].is_number()) throw FormatError("spacing must be numeric");
            out.spacing[i] = s[i].get<double>();
            if (!(out.spacing[i] > 0.0)) throw FormatError("spacing must be > 0");
        }
        const std::string kind = h.at("kind").get<std::string>();
        if (kind == "real") out.kind = VolumeKind::Real;
        else if (kind == "label") out.kind = VolumeKind::Label;
        else if (kind == "metric") out.kind = VolumeKind::Metric;
        else throw FormatError("unknown volume kind '" + kind + "'");
        out.has_mask = h.at("has_mask").get<bool>();
        if (out.kind == VolumeKind::Metric && !out.has_mask)
            throw FormatError("metric volumes require has_mask = true");
        if (out.kind != VolumeKind::Metric && out.has_mask)
            throw FormatError("only metric volumes carry a mask");
        out.num_classes = h.value("num_classes", 2);
        return out;
    } catch (const json::exception& e) {
        throw FormatError("malformed volume header " + path.string() + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError("malformed volume header " + path.string() + ": " + e.what());
    }
}

std::vector<char> read_payload(const fs::path& header, std::size_t expected) {
    const fs::path raw = payload_path(header);
    std::ifstream in(raw, std::ios::binary);
    if (!in) throw IoError("cannot open volume payload: " + raw.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < expected)
        throw FormatError("truncated payload " + raw.string() + ": expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(bytes.size()));
    if (bytes.size() > expected)
        throw FormatError("oversized payload " + raw.string() + ": expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(bytes.size()));
    return bytes;
}

}  // namespace

fs::path payload_path(const fs::path& header) {
    fs::path p = header;
    p.replace_extension(".raw");
    return p;
}

void write_volume(const fs::path& header, const Volume& v) {
    v.validate();
    std::vector<char> payload;
    append_floats(payload, v.data);
    write_files(header, VolumeKind::Real, v.dims, v.spacing, false, 0, payload);
}

void write_volume(const fs::path& header, const LabelVolume& v) {
    v.validate();
    std::vector<char> payload(v.data.begin(), v.data.end());
    write_files(header, VolumeKind::Label, v.dims, v.spacing, false, v.num_classes, payload);
}

void write_volume(const fs::path& header, const MetricVolume& v) {
    v.validate();
    std::vector<char> payload;
    append_floats(payload, v.data);
    payload.insert(payload.end(), v.mask.begin(), v.mask.end());
    write_files(header, VolumeKind::Metric, v.dims, v.spacing, true, 0, payload);
}

AnyVolume read_volume(const fs::path& header) {
    const Header h = parse_header(header);
    const std::size_t n = h.dims.count();
    switch (h.kind) {
        case VolumeKind::Real: {
            const auto bytes = read_payload(header, n * 4);
            Volume v(h.dims, h.spacing);
            read_floats(bytes.data(), v.data);
            v.validate();
            return v;
        }
        case VolumeKind::Label: {
            const auto bytes = read_payload(header, n);
            LabelVolume v(h.dims, h.spacing, h.num_classes);
            std::memcpy(v.data.data(), bytes.data(), n);
            v.validate();
            return v;
        }
        case VolumeKind::Metric: {
            const auto bytes = read_payload(header, n * 5);
            MetricVolume v(h.dims, h.spacing);
            read_floats(bytes.data(), v.data);
            std::memcpy(v.mask.data(), bytes.data() + n * 4, n);
            v.validate();
            return v;
        }
    }
    throw FormatError("unreachable volume kind");
}

namespace {
template <typename T>
T read_as(const fs::path& header, const char* expected) {
    AnyVolume any = read_volume(header);
    if (auto* v = std::get_if<T>(&any)) return std::move(*v);
    throw FormatError(header.string() + ": expected a " + expected + " volume");
}
}  // namespace

Volume read_real_volume(const fs::path& header) { return read_as<Volume>(header, "real"); }
LabelVolume read_label_volume(const fs::path& header) { return read_as<LabelVolume>(header, "label"); }
MetricVolume read_metric_volume(const fs::path& header) { return read_as<MetricVolume>(header, "metric"); }

}  // namespace cortexnet
