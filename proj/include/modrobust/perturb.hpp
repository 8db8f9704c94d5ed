#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "modrobust/errors.hpp"
#include "modrobust/rng.hpp"
#include "modrobust/types.hpp"

namespace modrobust {

/// f(x) = x * 0.
inline std::vector<double> apply_missing(std::span<const double> x) {
    return std::vector<double>(x.size(), 0.0);
}

/// f(x) = x + z with z_i ~ N(0, 1) drawn in order from `stream`.
inline std::vector<double> apply_noise(std::span<const double> x, Stream& stream) {
    std::vector<double> out(x.begin(), x.end());
    for (double& v : out) v += stream.normal();
    return out;
}

/// floor(p * n), guarded against products such as 0.29 * 100 = 28.999999999999996.
inline std::size_t mask_count(double p, std::size_t n) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("proportion must lie in [0, 1]");
    const auto k = static_cast<std::size_t>(std::floor(p * static_cast<double>(n) + 1e-9));
    return std::min(k, n);
}

/// Picks exactly floor(p * n) distinct elements by a seeded partial
/// Fisher-Yates shuffle. The result is in draw order.
template <typename T>
std::vector<T> sample_mask(std::span<const T> ids, double p, Stream& stream) {
    const std::size_t k = mask_count(p, ids.size());
    std::vector<T> pool(ids.begin(), ids.end());
    const std::size_t n = pool.size();
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(stream.below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

template <typename T>
std::vector<T> sample_mask(const std::vector<T>& ids, double p, Stream& stream) {
    return sample_mask(std::span<const T>(ids), p, stream);
}

/// First ceil(k/2) go to missing, the rest to noise.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> balanced_split(std::span<const T> mask) {
    const std::size_t half = (mask.size() + 1) / 2;
    return {std::vector<T>(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(half)),
            std::vector<T>(mask.begin() + static_cast<std::ptrdiff_t>(half), mask.end())};
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> balanced_split(const std::vector<T>& mask) {
    return balanced_split(std::span<const T>(mask));
}

struct PerturbationPlan {
    Modality modality = Modality::language;
    PlanKind kind = PlanKind::missing;
    double proportion = 0.3;
    HookPoint hook = HookPoint::post_encoder;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(proportion >= 0.0 && proportion <= 1.0)) {
            throw ContractError("perturbation plan: proportion must lie in [0, 1]");
        }
    }
};

/// Replace one modality representation of one sample within a batch.
struct Intervention {
    std::size_t sample = 0;
    Modality modality = Modality::language;
    PerturbationKind kind = PerturbationKind::missing;
    HookPoint hook = HookPoint::post_encoder;
    std::optional<Stream> noise;  // required for PerturbationKind::noise
};

inline constexpr std::uint64_t kMaskStreamKey = 0x6D61736B;  // "mask"

/// Positions (into `ids`) chosen for each kind under `plan`.
struct Selection {
    std::vector<std::size_t> missing;
    std::vector<std::size_t> noise;
};

/// Pure function of (plan, ids): the mask stream is keyed by the plan seed.
inline Selection select(const PerturbationPlan& plan, std::span<const std::string> ids) {
    plan.validate();
    std::vector<std::size_t> positions(ids.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
    Stream stream(plan.seed, kMaskStreamKey);
    auto mask = sample_mask(std::span<const std::size_t>(positions), plan.proportion, stream);

    Selection out;
    switch (plan.kind) {
        case PlanKind::missing: out.missing = std::move(mask); break;
        case PlanKind::noise: out.noise = std::move(mask); break;
        case PlanKind::balanced: {
            auto [missing, noise] = balanced_split(std::span<const std::size_t>(mask));
            out.missing = std::move(missing);
            out.noise = std::move(noise);
            break;
        }
    }
    return out;
}

/// Interventions realizing `plan` over samples named `ids`. Each noisy sample
/// draws from its own stream keyed by (plan seed, sample id).
inline std::vector<Intervention> plan_interventions(const PerturbationPlan& plan, std::span<const std::string> ids) {
    const Selection sel = select(plan, ids);
    std::vector<Intervention> out;
    out.reserve(sel.missing.size() + sel.noise.size());
    for (std::size_t pos : sel.missing) {
        out.push_back(Intervention{pos, plan.modality, PerturbationKind::missing, plan.hook, std::nullopt});
    }
    for (std::size_t pos : sel.noise) {
        out.push_back(Intervention{pos, plan.modality, PerturbationKind::noise, plan.hook,
                                   Stream(plan.seed, id_key(ids[pos]))});
    }
    return out;
}

}  // namespace modrobust
