#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "modrobust/data.hpp"
#include "modrobust/errors.hpp"
#include "modrobust/metrics.hpp"
#include "modrobust/model.hpp"
#include "modrobust/perturb.hpp"
#include "modrobust/types.hpp"

namespace modrobust {

struct DiagnosticConfig {
    std::vector<double> proportions{0.05, 0.10, 0.15, 0.30};
    std::vector<PerturbationKind> kinds{PerturbationKind::missing, PerturbationKind::noise};
    std::vector<Modality> modalities{Modality::language, Modality::audio, Modality::visual};
    HookPoint hook = HookPoint::post_encoder;
    std::vector<std::uint64_t> seeds{1, 2, 3};

    void validate() const {
        if (proportions.empty() || kinds.empty() || modalities.empty() || seeds.empty()) {
            throw ContractError("diagnostic config: proportions, kinds, modalities and seeds must be nonempty");
        }
        for (double p : proportions) {
            if (!(p >= 0.0 && p <= 1.0)) throw ContractError("diagnostic config: proportion outside [0, 1]");
        }
    }
};

struct DiagnosticKey {
    Modality modality = Modality::language;
    PerturbationKind kind = PerturbationKind::missing;
    double proportion = 0.0;

    friend bool operator==(const DiagnosticKey&, const DiagnosticKey&) = default;
};

inline std::string describe(const DiagnosticKey& key) {
    return std::string(to_string(key.modality)) + "/" + std::string(to_string(key.kind)) + "@" +
           nlohmann::json(key.proportion).dump();
}

namespace detail {

inline std::vector<double> gold_labels(const Dataset& dataset) {
    std::vector<double> gold;
    for (const FeatureRecord& r : dataset.split(Split::test)) gold.push_back(r.label);
    return gold;
}

inline std::vector<std::string> test_ids(const Dataset& dataset) {
    std::vector<std::string> ids;
    for (const FeatureRecord& r : dataset.split(Split::test)) ids.push_back(r.id);
    return ids;
}

inline DropReport diagnose_against(const Model& model, const Dataset& dataset, const PerturbationPlan& plan,
                                   const MetricSet& clean, std::span<const double> gold,
                                   std::span<const std::string> ids) {
    const auto interventions = plan_interventions(plan, ids);
    if (interventions.empty()) return compute_drop(clean, clean);
    const auto perturbed = predict(model, dataset, Split::test, interventions);
    return compute_drop(clean, evaluate(perturbed, gold));
}

}  // namespace detail

/// Clean vs perturbed metrics on the full test split. With proportion 1.0 this
/// is the remove-one-modality check.
inline DropReport run_diagnostic(const Model& model, const Dataset& dataset, const PerturbationPlan& plan) {
    plan.validate();
    if (dataset.split(Split::test).empty()) throw ContractError("run_diagnostic: test split is empty");
    const auto gold = detail::gold_labels(dataset);
    const auto ids = detail::test_ids(dataset);
    const MetricSet clean = evaluate(predict(model, dataset, Split::test), gold);
    return detail::diagnose_against(model, dataset, plan, clean, gold, ids);
}

struct SweepEntry {
    DiagnosticKey key;
    DropReport report;
};

/// Mask seed for one sweep cell.
inline std::uint64_t sweep_plan_seed(std::uint64_t seed, const DiagnosticKey& key) {
    return derive_seed(seed, index_of(key.modality), static_cast<std::uint64_t>(key.kind),
                       std::bit_cast<std::uint64_t>(key.proportion));
}

/// One diagnostic per (modality, kind, proportion), in that nesting order.
/// Clean metrics are computed once and shared by every cell.
inline std::vector<SweepEntry> sweep(const Model& model, const Dataset& dataset, const DiagnosticConfig& cfg,
                                     std::uint64_t seed) {
    cfg.validate();
    if (dataset.split(Split::test).empty()) throw ContractError("sweep: test split is empty");
    const auto gold = detail::gold_labels(dataset);
    const auto ids = detail::test_ids(dataset);
    const MetricSet clean = evaluate(predict(model, dataset, Split::test), gold);

    std::vector<SweepEntry> out;
    for (Modality m : cfg.modalities) {
        for (PerturbationKind k : cfg.kinds) {
            for (double p : cfg.proportions) {
                const DiagnosticKey key{m, k, p};
                const PerturbationPlan plan{m, to_plan_kind(k), p, cfg.hook, sweep_plan_seed(seed, key)};
                out.push_back({key, detail::diagnose_against(model, dataset, plan, clean, gold, ids)});
            }
        }
    }
    return out;
}

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single value

    friend bool operator==(const Summary&, const Summary&) = default;
};

inline Summary summarize(std::span<const double> values) {
    if (values.empty()) throw ContractError("summarize: no values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

struct MetricAggregate {
    Summary clean;
    Summary perturbed;
    Summary drop;

    friend bool operator==(const MetricAggregate&, const MetricAggregate&) = default;
};

struct AggregateEntry {
    DiagnosticKey key;
    std::array<MetricAggregate, 4> metrics;  // indexed by Metric
    std::size_t n_seeds = 0;

    const MetricAggregate& get(Metric m) const noexcept { return metrics[index_of(m)]; }

    friend bool operator==(const AggregateEntry&, const AggregateEntry&) = default;
};

struct AggregateReport {
    std::string variant = "standard";
    std::vector<AggregateEntry> entries;

    const AggregateEntry* find(const DiagnosticKey& key) const {
        for (const auto& e : entries) {
            if (e.key == key) return &e;
        }
        return nullptr;
    }

    friend bool operator==(const AggregateReport&, const AggregateReport&) = default;
};

/// Per-key mean and sample std across per-seed sweeps sharing one key set.
inline AggregateReport aggregate_seeds(std::span<const std::vector<SweepEntry>> runs, std::string variant = "standard") {
    if (runs.empty()) throw ContractError("aggregate_seeds: no runs");
    const auto& first = runs.front();
    for (const auto& run : runs) {
        if (run.size() != first.size()) throw ContractError("aggregate_seeds: runs have different key sets");
        for (std::size_t i = 0; i < run.size(); ++i) {
            if (!(run[i].key == first[i].key)) {
                throw ContractError("aggregate_seeds: key mismatch at " + describe(run[i].key));
            }
        }
    }

    AggregateReport out;
    out.variant = std::move(variant);
    for (std::size_t i = 0; i < first.size(); ++i) {
        AggregateEntry entry;
        entry.key = first[i].key;
        entry.n_seeds = runs.size();
        for (Metric m : kMetrics) {
            std::vector<double> clean, perturbed, drop;
            for (const auto& run : runs) {
                clean.push_back(run[i].report.clean.get(m));
                perturbed.push_back(run[i].report.perturbed.get(m));
                drop.push_back(run[i].report.get(m));
            }
            entry.metrics[index_of(m)] = {summarize(clean), summarize(perturbed), summarize(drop)};
        }
        out.entries.push_back(entry);
    }
    return out;
}

struct ComparisonEntry {
    DiagnosticKey key;
    std::array<std::optional<double>, 4> reduction;  // percent; empty when the standard drop is zero
    std::array<double, 4> clean_delta{};              // robust clean - standard clean

    friend bool operator==(const ComparisonEntry&, const ComparisonEntry&) = default;
};

inline std::vector<ComparisonEntry> compare(const AggregateReport& standard, const AggregateReport& robust) {
    if (standard.entries.size() != robust.entries.size()) throw ContractError("compare: reports have different key sets");
    std::vector<ComparisonEntry> out;
    for (const AggregateEntry& s : standard.entries) {
        const AggregateEntry* r = robust.find(s.key);
        if (r == nullptr) throw ContractError("compare: robust report lacks " + describe(s.key));
        ComparisonEntry c;
        c.key = s.key;
        for (Metric m : kMetrics) {
            const std::size_t i = index_of(m);
            const double base = s.metrics[i].drop.mean;
            if (base != 0.0) c.reduction[i] = relative_reduction(base, r->metrics[i].drop.mean);
            c.clean_delta[i] = r->metrics[i].clean.mean - s.metrics[i].clean.mean;
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace modrobust
