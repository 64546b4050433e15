#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace splitkit {

// SHA-256 of a byte buffer, returned as lowercase hex.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::vector<std::uint8_t>& data);

// Incremental SHA-256 for hashing several buffers as one stream.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t size);
    std::string hex_digest();

private:
    void* ctx_;
};

}  // namespace splitkit
