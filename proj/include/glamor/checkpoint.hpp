#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glamor/layers.hpp"

namespace glamor {

// Checkpoint file layout (all integers little-endian):
//   bytes 0..3   magic "GLMR"
//   bytes 4..7   u32 format version (currently 1)
//   bytes 8..11  u32 metadata length L
//   bytes 12..   UTF-8 JSON metadata of length L: epoch, config hash, an
//                opaque "extra" object, and the tensor table (name, shape,
//                dtype) in file order
//   then         raw IEEE-754 buffers ("f32" or "f64") in table order

struct RawTensor {
    std::string name;
    Shape shape;
    std::string dtype; // "f32" | "f64"
    std::vector<uint8_t> bytes;
};

struct CheckpointMeta {
    int64_t epoch = 0;
    std::string config_hash;
    std::string extra_json = "{}"; // model configuration and friends
};

void save_checkpoint_raw(const std::string& path, const CheckpointMeta& meta,
                         const std::vector<RawTensor>& tensors);

struct LoadedCheckpoint {
    CheckpointMeta meta;
    std::vector<RawTensor> tensors;
};

LoadedCheckpoint load_checkpoint_raw(const std::string& path);

// FNV-1a hex digest used to stamp checkpoints with their effective config.
std::string config_hash(const std::string& text);

template <class T>
void save_params(const std::string& path, const ParamRefs<T>& params,
                 const CheckpointMeta& meta) {
    std::vector<RawTensor> tensors;
    tensors.reserve(params.size());
    for (const auto& p : params) {
        RawTensor rt;
        rt.name = p.name;
        rt.shape = p.value->shape();
        rt.dtype = Tensor<T>::precision() == Precision::F32 ? "f32" : "f64";
        rt.bytes.resize(static_cast<size_t>(p.value->size()) * sizeof(T));
        std::memcpy(rt.bytes.data(), p.value->data(), rt.bytes.size());
        tensors.push_back(std::move(rt));
    }
    save_checkpoint_raw(path, meta, tensors);
}

// Fills the given parameters from the file; names and shapes must agree.
template <class T>
CheckpointMeta load_params(const std::string& path, const ParamRefs<T>& params) {
    LoadedCheckpoint ck = load_checkpoint_raw(path);
    const char* want_dtype = Tensor<T>::precision() == Precision::F32 ? "f32" : "f64";
    if (ck.tensors.size() != params.size())
        throw FormatError(path + ": checkpoint has " + std::to_string(ck.tensors.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& rt = ck.tensors[i];
        const auto& p = params[i];
        if (rt.name != p.name)
            throw FormatError(path + ": tensor " + std::to_string(i) + " is '" + rt.name +
                              "', model expects '" + p.name + "'");
        if (rt.shape != p.value->shape())
            throw FormatError(path + ": tensor '" + rt.name + "' has shape " +
                              shape_str(rt.shape) + ", model expects " +
                              shape_str(p.value->shape()));
        if (rt.dtype != want_dtype)
            throw FormatError(path + ": tensor '" + rt.name + "' is " + rt.dtype +
                              ", model expects " + want_dtype);
        std::memcpy(p.value->data(), rt.bytes.data(), rt.bytes.size());
    }
    return ck.meta;
}

} // namespace glamor
