#pragma once

// Fault-injecting wrapper: corrupts a deterministic fraction of responses so
// retry/fallback accounting can be exercised reproducibly.

#include <string>

#include "texr/hash.hpp"
#include "texr/text_backend.hpp"

namespace texr::testing {

class FaultInjectingBackend : public TextGenBackend {
public:
    FaultInjectingBackend(TextGenBackend& inner, double fault_rate, std::uint64_t salt = 0)
        : inner_(inner), fault_rate_(fault_rate), salt_(salt) {}

    std::string generate(const std::string& system_prompt, const std::string& user_prompt,
                         const DecodeConfig& decode) override {
        std::string text = inner_.generate(system_prompt, user_prompt, decode);
        std::uint64_t h = mix_seed(mix_seed(salt_, user_prompt),
                                   decode.seed ? *decode.seed : 0);
        double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        if (u >= fault_rate_) return text;
        switch (h % 3) {
            case 0: return text.substr(0, text.size() / 2);          // truncated JSON
            case 1: return "Sure! Here is the JSON:\n" + text;        // prose preamble
            default: return "{\"oops\": ";                            // garbage
        }
    }

    std::string backend_id() const override { return "fault(" + inner_.backend_id() + ")"; }

private:
    TextGenBackend& inner_;
    double fault_rate_;
    std::uint64_t salt_;
};

} // namespace texr::testing
