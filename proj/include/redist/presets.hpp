#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "redist/arch.hpp"

namespace redist {

struct NamedArch {
    std::string_view name;
    DetectorArch arch;
};

/// Hand-designed baselines for the 2.5, 10, 34 and 0.5 GF regimes.
/// ResNet34 x0.25 / x0.5, ResNet50 and MobileNetV1 x0.25 mapped onto four stages.
inline const std::array<NamedArch, 4>& baseline_archs() {
    static const std::array<NamedArch, 4> kBaselines = {{
        {"resnet-2.5gf",
         {{{{{3, 16}, {4, 32}, {6, 64}, {3, 128}}}, BlockKind::BasicResidual}, {48}, {96, 2, false}}},
        {"resnet-10gf",
         {{{{{3, 32}, {4, 64}, {6, 128}, {3, 256}}}, BlockKind::BasicResidual}, {128}, {160, 2, false}}},
        {"resnet-34gf",
         {{{{{3, 256}, {4, 512}, {6, 1024}, {3, 2048}}}, BlockKind::BottleneckResidual}, {128}, {256, 2, false}}},
        {"mobilenet-0.5gf",
         {{{{{2, 32}, {2, 64}, {6, 128}, {2, 256}}}, BlockKind::DepthwiseSeparable}, {32}, {80, 2, true}}},
    }};
    return kBaselines;
}

inline std::optional<DetectorArch> find_baseline(std::string_view name) {
    for (const auto& b : baseline_archs())
        if (b.name == name) return b.arch;
    return std::nullopt;
}

}  // namespace redist
