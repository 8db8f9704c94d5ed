#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "modrobust/errors.hpp"

namespace modrobust {

enum class Modality { language, audio, visual };

inline constexpr std::array<Modality, 3> kModalities{Modality::language, Modality::audio, Modality::visual};

constexpr std::size_t index_of(Modality m) noexcept { return static_cast<std::size_t>(m); }

inline std::string_view to_string(Modality m) {
    switch (m) {
        case Modality::language: return "language";
        case Modality::audio: return "audio";
        case Modality::visual: return "visual";
    }
    return "?";
}

inline Modality parse_modality(std::string_view text) {
    for (Modality m : kModalities) {
        if (to_string(m) == text) return m;
    }
    throw ContractError("unknown modality '" + std::string(text) + "'");
}

/// Where an intervention replaces a modality representation.
enum class HookPoint {
    pre_encoder,   // on the input features, before the modality encoder
    post_encoder,  // on the encoder output, before fusion
};

inline std::string_view to_string(HookPoint h) {
    return h == HookPoint::pre_encoder ? "pre" : "post";
}

inline HookPoint parse_hook(std::string_view text) {
    if (text == "pre") return HookPoint::pre_encoder;
    if (text == "post") return HookPoint::post_encoder;
    throw ContractError("unknown hook '" + std::string(text) + "' (expected pre|post)");
}

enum class PerturbationKind { missing, noise };

inline std::string_view to_string(PerturbationKind k) {
    return k == PerturbationKind::missing ? "missing" : "noise";
}

inline PerturbationKind parse_perturbation_kind(std::string_view text) {
    if (text == "missing") return PerturbationKind::missing;
    if (text == "noise") return PerturbationKind::noise;
    throw ContractError("unknown perturbation kind '" + std::string(text) + "'");
}

/// Perturbation recipe of a plan: a single kind, or half missing / half noise.
enum class PlanKind { missing, noise, balanced };

inline std::string_view to_string(PlanKind k) {
    switch (k) {
        case PlanKind::missing: return "missing";
        case PlanKind::noise: return "noise";
        case PlanKind::balanced: return "balanced";
    }
    return "?";
}

inline PlanKind parse_plan_kind(std::string_view text) {
    if (text == "missing") return PlanKind::missing;
    if (text == "noise") return PlanKind::noise;
    if (text == "balanced") return PlanKind::balanced;
    throw ContractError("unknown perturbation kind '" + std::string(text) + "' (expected balanced|missing|noise)");
}

constexpr PlanKind to_plan_kind(PerturbationKind k) noexcept {
    return k == PerturbationKind::missing ? PlanKind::missing : PlanKind::noise;
}

}  // namespace modrobust
