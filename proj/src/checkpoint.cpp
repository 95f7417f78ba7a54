#include "glamor/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "glamor/errors.hpp"

namespace glamor {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'G', 'L', 'M', 'R'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                          static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const std::string& path, const char* what) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4)
        throw FormatError(path + ": truncated reading " + what + " at offset " +
                          std::to_string(static_cast<long long>(in.tellg())));
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

size_t dtype_size(const std::string& dtype, const std::string& path) {
    if (dtype == "f32")
        return 4;
    if (dtype == "f64")
        return 8;
    throw FormatError(path + ": unknown dtype '" + dtype + "'");
}

} // namespace

std::string config_hash(const std::string& text) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : text)
        h = (h ^ static_cast<uint8_t>(c)) * 0x100000001b3ull;
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void save_checkpoint_raw(const std::string& path, const CheckpointMeta& meta,
                         const std::vector<RawTensor>& tensors) {
    json table = json::array();
    for (const auto& t : tensors) {
        (void)dtype_size(t.dtype, path);
        table.push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", t.dtype}});
    }
    json j{{"epoch", meta.epoch},
           {"config_hash", meta.config_hash},
           {"extra", json::parse(meta.extra_json)},
           {"tensors", table}};
    const std::string meta_str = j.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError(path + ": cannot open for writing");
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(meta_str.size()));
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    for (const auto& t : tensors) {
        const size_t expect = static_cast<size_t>(shape_numel(t.shape)) * dtype_size(t.dtype, path);
        if (t.bytes.size() != expect)
            throw ValueError(path + ": tensor '" + t.name + "' buffer size " +
                             std::to_string(t.bytes.size()) + " != expected " +
                             std::to_string(expect));
        out.write(reinterpret_cast<const char*>(t.bytes.data()),
                  static_cast<std::streamsize>(t.bytes.size()));
    }
    if (!out)
        throw IoError(path + ": write failed");
}

LoadedCheckpoint load_checkpoint_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError(path + ": cannot open checkpoint");

    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path + ": bad magic at offset 0");
    const uint32_t version = get_u32(in, path, "version");
    if (version != kVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version) +
                          " at offset 4");
    const uint32_t meta_len = get_u32(in, path, "metadata length");
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), meta_len);
    if (static_cast<uint32_t>(in.gcount()) != meta_len)
        throw FormatError(path + ": truncated metadata at offset 12");

    json j;
    try {
        j = json::parse(meta_str);
    } catch (const json::exception& e) {
        throw FormatError(path + ": bad metadata JSON: " + e.what());
    }

    LoadedCheckpoint ck;
    try {
        ck.meta.epoch = j.at("epoch").get<int64_t>();
        ck.meta.config_hash = j.at("config_hash").get<std::string>();
        ck.meta.extra_json = j.at("extra").dump();
        for (const auto& entry : j.at("tensors")) {
            RawTensor t;
            t.name = entry.at("name").get<std::string>();
            t.shape = entry.at("shape").get<Shape>();
            t.dtype = entry.at("dtype").get<std::string>();
            check_shape_valid(t.shape);
            const size_t bytes = static_cast<size_t>(shape_numel(t.shape)) *
                                 dtype_size(t.dtype, path);
            t.bytes.resize(bytes);
            const auto offset = in.tellg();
            in.read(reinterpret_cast<char*>(t.bytes.data()), static_cast<std::streamsize>(bytes));
            if (static_cast<size_t>(in.gcount()) != bytes)
                throw FormatError(path + ": truncated tensor '" + t.name + "' at offset " +
                                  std::to_string(static_cast<long long>(offset)));
            ck.tensors.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw FormatError(path + ": bad metadata: " + e.what());
    }
    return ck;
}

} // namespace glamor
