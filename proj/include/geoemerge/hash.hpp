#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>

namespace geoemerge {

// 64-bit FNV-1a, used for output fingerprints and branch signatures.
class Fnv1a {
public:
    void add_bytes(const void* data, std::size_t n)
    {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
    }
    template <typename T>
    void add(const T& value) { add_bytes(&value, sizeof(T)); }
    template <typename T>
    void add_span(std::span<const T> values) { add_bytes(values.data(), values.size_bytes()); }
    void add_string(std::string_view s) { add_bytes(s.data(), s.size()); }

    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

} // namespace geoemerge
