#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "modrobust/errors.hpp"

namespace modrobust {

/// Sentiment polarity after binarizing at zero; exact zeros are non-negative.
constexpr bool is_non_negative(double v) noexcept { return v >= 0.0; }

inline void require_same_length(std::span<const double> pred, std::span<const double> gold, const char* metric) {
    if (pred.size() != gold.size()) {
        throw ContractError(std::string(metric) + ": prediction length " + std::to_string(pred.size()) +
                            " differs from gold length " + std::to_string(gold.size()));
    }
}

inline double pearson_corr(std::span<const double> pred, std::span<const double> gold) {
    require_same_length(pred, gold, "pearson_corr");
    const std::size_t n = pred.size();
    if (n < 2) throw ContractError("pearson_corr: need at least 2 samples");
    double mp = 0.0, mg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mp += pred[i];
        mg += gold[i];
    }
    mp /= static_cast<double>(n);
    mg /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dp = pred[i] - mp;
        const double dg = gold[i] - mg;
        sxy += dp * dg;
        sxx += dp * dp;
        syy += dg * dg;
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedMetricError("pearson_corr: constant series");
    return sxy / std::sqrt(sxx * syy);
}

/// Support-weighted F1 over the {negative, non-negative} classes, in percent.
/// A class whose precision and recall are both zero scores 0.
inline double binary_f1(std::span<const double> pred, std::span<const double> gold) {
    require_same_length(pred, gold, "binary_f1");
    if (pred.empty()) throw ContractError("binary_f1: empty input");
    // counts[g][p]: gold class g predicted as p (0 = negative, 1 = non-negative)
    double counts[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        counts[is_non_negative(gold[i])][is_non_negative(pred[i])] += 1.0;
    }
    const double n = static_cast<double>(pred.size());
    double weighted = 0.0;
    for (int c = 0; c < 2; ++c) {
        const double tp = counts[c][c];
        const double support = counts[c][0] + counts[c][1];
        const double predicted = counts[0][c] + counts[1][c];
        const double precision = predicted > 0 ? tp / predicted : 0.0;
        const double recall = support > 0 ? tp / support : 0.0;
        const double f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        weighted += support / n * f1;
    }
    return 100.0 * weighted;
}

struct MaeAcc2 {
    double mae = 0.0;
    double acc2 = 0.0;
};

inline MaeAcc2 mae_acc2(std::span<const double> pred, std::span<const double> gold) {
    require_same_length(pred, gold, "mae_acc2");
    if (pred.empty()) throw ContractError("mae_acc2: empty input");
    double abs_sum = 0.0;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        abs_sum += std::abs(pred[i] - gold[i]);
        agree += is_non_negative(pred[i]) == is_non_negative(gold[i]) ? 1 : 0;
    }
    const double n = static_cast<double>(pred.size());
    return {abs_sum / n, 100.0 * static_cast<double>(agree) / n};
}

enum class Metric { corr, f1, acc2, mae };

inline constexpr std::array<Metric, 4> kMetrics{Metric::corr, Metric::f1, Metric::acc2, Metric::mae};

constexpr std::size_t index_of(Metric m) noexcept { return static_cast<std::size_t>(m); }

inline std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::corr: return "corr";
        case Metric::f1: return "f1";
        case Metric::acc2: return "acc2";
        case Metric::mae: return "mae";
    }
    return "?";
}

inline Metric parse_metric(std::string_view text) {
    for (Metric m : kMetrics) {
        if (to_string(m) == text) return m;
    }
    throw ContractError("unknown metric '" + std::string(text) + "'");
}

/// MAE is the only metric where lower is better.
constexpr bool higher_is_better(Metric m) noexcept { return m != Metric::mae; }

struct MetricSet {
    double corr = 0.0;
    double f1 = 0.0;
    double acc2 = 0.0;
    double mae = 0.0;
    std::size_t n = 0;

    double get(Metric m) const noexcept {
        switch (m) {
            case Metric::corr: return corr;
            case Metric::f1: return f1;
            case Metric::acc2: return acc2;
            case Metric::mae: return mae;
        }
        return 0.0;
    }

    friend bool operator==(const MetricSet&, const MetricSet&) = default;
};

inline MetricSet evaluate(std::span<const double> pred, std::span<const double> gold) {
    MetricSet s;
    s.corr = pearson_corr(pred, gold);
    s.f1 = binary_f1(pred, gold);
    const MaeAcc2 ma = mae_acc2(pred, gold);
    s.mae = ma.mae;
    s.acc2 = ma.acc2;
    s.n = pred.size();
    return s;
}

/// Degradation from clean to perturbed: clean - perturbed, except MAE which
/// is perturbed - clean. Positive always means "got worse".
struct DropReport {
    MetricSet clean;
    MetricSet perturbed;
    std::array<double, 4> drop{};  // indexed by Metric

    double get(Metric m) const noexcept { return drop[index_of(m)]; }

    friend bool operator==(const DropReport&, const DropReport&) = default;
};

inline DropReport compute_drop(const MetricSet& clean, const MetricSet& perturbed) {
    DropReport r{clean, perturbed, {}};
    for (Metric m : kMetrics) {
        r.drop[index_of(m)] = higher_is_better(m) ? clean.get(m) - perturbed.get(m) : perturbed.get(m) - clean.get(m);
    }
    return r;
}

/// Percentage by which robust training shrinks a drop.
inline double relative_reduction(double baseline_drop, double robust_drop) {
    if (baseline_drop == 0.0) throw UndefinedMetricError("relative_reduction: baseline drop is zero");
    return 100.0 * (baseline_drop - robust_drop) / baseline_drop;
}

}  // namespace modrobust
