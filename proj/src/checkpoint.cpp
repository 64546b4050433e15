#include "splitkit/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "splitkit/digest.hpp"
#include "splitkit/errors.hpp"

namespace splitkit {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'L', 'K'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr const char* kMetaKey = "__meta__";

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

std::uint32_t read_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
    return v;
}

std::uint64_t read_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
    return v;
}

}  // namespace

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
        throw InvalidArgument("param store has no tensor named " + name);
    }
    return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
        throw InvalidArgument("param store has no tensor named " + name);
    }
    return it->second;
}

bool ParamStore::contains(const std::string& name) const {
    return tensors.count(name) > 0;
}

std::vector<std::uint8_t> serialize_params(const ParamStore& params) {
    nlohmann::json index = nlohmann::json::object();
    index[kMetaKey] = {{"store_version", params.version}};

    std::vector<std::vector<std::uint8_t>> payloads;
    payloads.reserve(params.tensors.size());
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : params.tensors) {
        if (name == kMetaKey) {
            throw InvalidArgument("tensor name collides with reserved key " +
                                  std::string(kMetaKey));
        }
        auto bytes = tensor.to_bytes();
        index[name] = {{"dtype", dtype_name(tensor.dtype())},
                       {"shape", tensor.shape()},
                       {"offset", offset},
                       {"length", bytes.size()}};
        offset += bytes.size();
        payloads.push_back(std::move(bytes));
    }

    const std::string index_text = index.dump();
    std::vector<std::uint8_t> out;
    out.reserve(16 + index_text.size() + offset);
    out.insert(out.end(), kMagic, kMagic + 4);
    append_u32(out, kFormatVersion);
    append_u64(out, index_text.size());
    out.insert(out.end(), index_text.begin(), index_text.end());
    for (const auto& payload : payloads) {
        out.insert(out.end(), payload.begin(), payload.end());
    }
    return out;
}

ParamStore deserialize_params(const std::uint8_t* data, std::size_t size) {
    if (size < 16 || std::memcmp(data, kMagic, 4) != 0) {
        throw FormatError("checkpoint: bad magic bytes");
    }
    const std::uint32_t version = read_u32(data + 4);
    if (version != kFormatVersion) {
        throw FormatError("checkpoint: unsupported format version " +
                          std::to_string(version));
    }
    const std::uint64_t index_len = read_u64(data + 8);
    if (16 + index_len > size) {
        throw FormatError("checkpoint: index length exceeds file size");
    }

    nlohmann::json index;
    try {
        index = nlohmann::json::parse(data + 16, data + 16 + index_len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: malformed index: ") +
                          e.what());
    }
    if (!index.is_object()) {
        throw FormatError("checkpoint: index is not a JSON object");
    }

    ParamStore store;
    const std::uint8_t* payload = data + 16 + index_len;
    const std::size_t payload_size = size - 16 - index_len;
    for (const auto& [name, entry] : index.items()) {
        if (name == kMetaKey) {
            store.version = entry.at("store_version").get<std::int64_t>();
            continue;
        }
        TensorSpec spec;
        try {
            spec.dtype = dtype_from_name(entry.at("dtype").get<std::string>());
            spec.shape = entry.at("shape").get<std::vector<std::size_t>>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            const auto length = entry.at("length").get<std::uint64_t>();
            if (offset + length > payload_size) {
                throw FormatError("checkpoint: truncated payload for tensor " +
                                  name);
            }
            store.tensors.emplace(
                name, Tensor::from_bytes(spec, payload + offset, length));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("checkpoint: bad index entry for " + name +
                              ": " + e.what());
        }
    }
    return store;
}

void save_checkpoint(const ParamStore& params, const std::string& path) {
    const auto bytes = serialize_params(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open checkpoint for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing checkpoint: " + path);
}

ParamStore load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint for reading: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_params(bytes.data(), bytes.size());
}

std::string params_digest(const ParamStore& params) {
    const auto bytes = serialize_params(params);
    return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace splitkit
