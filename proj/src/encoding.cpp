#include "texr/encoding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "texr/hash.hpp"

namespace texr {

std::vector<double> embed_text(const std::string& text, int dim) {
    std::vector<double> out(static_cast<size_t>(dim), 0.0);
    std::string token;
    bool any = false;
    auto flush = [&] {
        if (token.empty()) return;
        std::uint64_t h = fnv1a64(token);
        size_t bucket = static_cast<size_t>(h % static_cast<std::uint64_t>(dim));
        double sign = ((h >> 32) & 1u) ? 1.0 : -1.0;
        out[bucket] += sign;
        any = true;
        token.clear();
    };
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else {
            flush();
        }
    }
    flush();
    if (!any) return out;
    double norm = 0.0;
    for (double v : out) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (auto& v : out) v /= norm;
    }
    return out;
}

std::vector<double> fourier_encode(double value, double lo, double hi, int fourier) {
    double u = std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
    std::vector<double> out;
    out.reserve(static_cast<size_t>(2 * fourier));
    double freq = 1.0;
    for (int k = 0; k < fourier; ++k) {
        out.push_back(std::sin(M_PI * freq * u));
        out.push_back(std::cos(M_PI * freq * u));
        freq *= 2.0;
    }
    return out;
}

} // namespace texr
