#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splitkit/tensor.hpp"

namespace splitkit {

// Named tensor store.  Keys are qualified "layer.param" names.
struct ParamStore {
    std::map<std::string, Tensor> tensors;
    std::int64_t version = 1;

    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);
    bool contains(const std::string& name) const;
};

// SPLK container layout:
//   magic "SPLK" (4 bytes)
//   u32 little-endian format version = 1
//   u64 little-endian JSON index length
//   UTF-8 JSON index: tensor name -> {dtype, shape, offset, length},
//     plus a reserved "__meta__" entry carrying the store version
//   raw little-endian tensor payloads, in index order, offsets relative
//     to the end of the index
std::vector<std::uint8_t> serialize_params(const ParamStore& params);
ParamStore deserialize_params(const std::uint8_t* data, std::size_t size);

void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

// SHA-256 of the serialized container; stable identity for frozen params.
std::string params_digest(const ParamStore& params);

}  // namespace splitkit
