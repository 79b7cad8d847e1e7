#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

namespace percept {

// FIPS 180-4 SHA-256 of a byte buffer. Kept in-tree so the library has no
// crypto dependency just to fingerprint configs; this is integrity
// checking, not security.
std::array<std::uint8_t, 32> sha256(const void* data, std::size_t len);

inline std::array<std::uint8_t, 32> sha256(const std::string& s) {
    return sha256(s.data(), s.size());
}

}  // namespace percept
