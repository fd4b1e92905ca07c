#include "texr/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <vector>

#include "texr/errors.hpp"

namespace texr {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t s = seed ^ (salt + 0x9e3779b97f4a7c15ULL);
    return splitmix64(s);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(seed, a), b);
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt) {
    return mix_seed(seed, fnv1a64(salt));
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt, std::uint64_t extra) {
    return mix_seed(mix_seed(seed, fnv1a64(salt)), extra);
}

namespace {

std::string digest_hex(const unsigned char* md, unsigned int len) {
    static const char* hexdig = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hexdig[md[i] >> 4]);
        out.push_back(hexdig[md[i] & 0xf]);
    }
    return out;
}

} // namespace

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr)) {
        throw IntegrityError("sha256 digest failed");
    }
    return digest_hex(md, len);
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IntegrityError("cannot open file for hashing: " + path);
    }
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        std::streamsize got = in.gcount();
        if (got > 0) {
            EVP_DigestUpdate(ctx, buf.data(), static_cast<size_t>(got));
        }
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    return digest_hex(md, len);
}

} // namespace texr
