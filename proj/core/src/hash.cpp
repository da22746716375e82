#include "artadapter/hash.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "artadapter/common.hpp"

namespace artadapter {

void Fnv1a64::update(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = h_;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    h_ = h;
}

void Fnv1a64::update_u64(uint64_t v) { update(&v, sizeof(v)); }

void Fnv1a64::update_string(const std::string& s) {
    update_u64(s.size());
    update(s.data(), s.size());
}

void Fnv1a64::update_tensor(const Tensor& t) {
    update_u64(static_cast<uint64_t>(t.rank()));
    for (int64_t d : t.shape()) update_u64(static_cast<uint64_t>(d));
    update(t.data(), static_cast<size_t>(t.numel()) * sizeof(scalar_t));
}

uint64_t fnv1a64(const void* data, size_t n) {
    Fnv1a64 h;
    h.update(data, n);
    return h.digest();
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

uint64_t hash_tensor(const Tensor& t) {
    Fnv1a64 h;
    h.update_tensor(t);
    return h.digest();
}

uint64_t hash_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    Fnv1a64 h;
    std::vector<char> buf(1 << 16);
    while (f) {
        f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(buf.data(), static_cast<size_t>(f.gcount()));
    }
    return h.digest();
}

}  // namespace artadapter
