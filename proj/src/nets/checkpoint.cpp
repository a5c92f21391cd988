#include "cortexnet/nets/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "cortexnet/common/error.hpp"
#include "cortexnet/nets/model.hpp"

namespace cortexnet {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'X', 'N', 'C', 'K', 'P', 'T', '\0'};

template <typename U>
void put_le(std::vector<char>& buf, U v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        std::reverse(b, b + sizeof(U));
    }
    const auto* b = reinterpret_cast<const char*>(&v);
    buf.insert(buf.end(), b, b + sizeof(U));
}

template <typename U>
U get_le(const std::vector<char>& buf, std::size_t& pos, const std::string& what) {
    if (pos + sizeof(U) > buf.size()) throw FormatError("checkpoint truncated while reading " + what);
    U v;
    std::memcpy(&v, buf.data() + pos, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        std::reverse(b, b + sizeof(U));
    }
    pos += sizeof(U);
    return v;
}

}  // namespace

std::string checkpoint_label(ModelKind kind, RegressionLossKind loss) {
    const bool huber = loss == RegressionLossKind::Huber;
    switch (kind) {
        case ModelKind::UNet: return huber ? "UNetHuber" : "UNetMSE";
        case ModelKind::UNetDropBlock: return huber ? "UNetDropBlockHuber" : "UNetDropBlock";
        case ModelKind::PHiSeg: return "PHiSeg";
    }
    return "unknown";
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    json tensors = json::array();
    for (const auto& e : ckpt.params.entries()) tensors.push_back({{"name", e.name}, {"shape", e.shape}});
    json header = {{"model_kind", to_string(ckpt.kind)},
                   {"label", ckpt.label},
                   {"network", ckpt.config},
                   {"metadata", ckpt.metadata},
                   {"tensors", tensors}};
    const std::string text = header.dump();

    std::vector<char> buf(kMagic, kMagic + 8);
    put_le<std::uint32_t>(buf, kCheckpointVersion);
    put_le<std::uint64_t>(buf, text.size());
    buf.insert(buf.end(), text.begin(), text.end());
    for (const auto& e : ckpt.params.entries())
        for (float v : e.values) put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(v));

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 8) != 0)
        throw FormatError("not a checkpoint file: " + path.string());
    std::size_t pos = 8;
    const auto version = get_le<std::uint32_t>(buf, pos, "version");
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto header_len = get_le<std::uint64_t>(buf, pos, "header length");
    if (pos + header_len > buf.size()) throw FormatError("checkpoint truncated in header");

    Checkpoint ckpt;
    json tensors;
    try {
        const json header = json::parse(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                                        buf.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
        ckpt.kind = parse_model_kind(header.at("model_kind").get<std::string>());
        ckpt.label = header.at("label").get<std::string>();
        ckpt.config = header.at("network").get<NetworkConfig>();
        ckpt.metadata = header.at("metadata");
        tensors = header.at("tensors");
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed checkpoint header: ") + e.what());
    }
    pos += header_len;

    for (const auto& t : tensors) {
        const auto name = t.at("name").get<std::string>();
        const auto shape = t.at("shape").get<std::vector<std::size_t>>();
        std::size_t count = 1;
        for (auto s : shape) count *= s;
        std::vector<float> values(count);
        for (auto& v : values) v = std::bit_cast<float>(get_le<std::uint32_t>(buf, pos, "tensor " + name));
        ckpt.params.add(name, shape, std::move(values));
    }
    if (pos != buf.size()) throw FormatError("checkpoint has trailing bytes");

    ckpt.config.validate();
    const Model<float> model(ckpt.kind, ckpt.config);
    ckpt.params.check_layout(model.layout());
    if (!ckpt.params.all_finite()) throw InvariantError("checkpoint contains non-finite parameters");
    return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, ModelKind expected_kind, const NetworkConfig& expected) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.kind != expected_kind)
        throw ConfigError("checkpoint model kind '" + to_string(ckpt.kind) + "' differs from expected '" +
                          to_string(expected_kind) + "'");
    if (json(ckpt.config) != json(expected)) throw ConfigError("checkpoint network config differs from expected");
    return ckpt;
}

}  // namespace cortexnet
