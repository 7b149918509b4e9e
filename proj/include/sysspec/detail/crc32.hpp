#pragma once

// Reflected CRC-32, polynomial 0xEDB88320, init and final xor 0xFFFFFFFF
// (the zlib/PNG parameterization).

#include <array>
#include <cstdint>
#include <cstddef>

namespace sysspec::detail {

inline const std::array<uint32_t, 256>& crc32_table() {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    return table;
}

inline uint32_t crc32(const void* data, size_t len, uint32_t seed = 0) {
    const auto& table = crc32_table();
    uint32_t c = seed ^ 0xFFFFFFFFu;
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

}  // namespace sysspec::detail
