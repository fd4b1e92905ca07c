#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace texr {

// 64-bit FNV-1a. Used for deterministic, platform-independent seeding and
// lightweight keying; never for integrity (that is sha256's job).
constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// SplitMix64 step; also the canonical way to fold values into a seed.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt, std::uint64_t extra);

// Hex-encoded SHA-256 of a byte string (OpenSSL).
std::string sha256_hex(std::string_view data);

// SHA-256 of a file's contents. Throws IntegrityError if unreadable.
std::string sha256_file(const std::string& path);

} // namespace texr
