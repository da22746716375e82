#pragma once

#include <cstdint>
#include <string>

#include "artadapter/tensor.hpp"

namespace artadapter {

// FNV-1a 64-bit. Used for parameter freeze checks, archive integrity and
// reference-image identities; not a cryptographic hash.
class Fnv1a64 {
public:
    void update(const void* data, size_t n);
    void update_u64(uint64_t v);
    void update_string(const std::string& s);
    void update_tensor(const Tensor& t);  // shape then raw element bytes
    uint64_t digest() const { return h_; }

private:
    uint64_t h_ = 0xcbf29ce484222325ULL;
};

uint64_t fnv1a64(const void* data, size_t n);
std::string hash_hex(uint64_t h);
uint64_t hash_tensor(const Tensor& t);
uint64_t hash_file_bytes(const std::string& path);  // throws IoError

}  // namespace artadapter
