#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "modrobust/diagnostics.hpp"
#include "modrobust/errors.hpp"
#include "modrobust/metrics.hpp"

namespace modrobust {

enum class ReportFormat { csv, markdown };

inline ReportFormat parse_report_format(std::string_view text) {
    if (text == "csv") return ReportFormat::csv;
    if (text == "markdown") return ReportFormat::markdown;
    throw ContractError("unknown report format '" + std::string(text) + "' (expected csv|markdown)");
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_exact(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline double parse_exact(std::string_view text, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ParseError(line, "bad number '" + std::string(text) + "'");
    }
    return v;
}

inline constexpr std::string_view kCsvHeader =
    "variant,modality,kind,proportion,metric,clean_mean,clean_std,perturbed_mean,perturbed_std,drop_mean,drop_std,"
    "n_seeds";

/// One row per (variant, modality, kind, proportion, metric), full precision.
inline std::string emit_csv(std::span<const AggregateReport> variants) {
    std::ostringstream out;
    out << kCsvHeader << '\n';
    for (const AggregateReport& report : variants) {
        for (const AggregateEntry& e : report.entries) {
            for (Metric m : kMetrics) {
                const MetricAggregate& a = e.get(m);
                out << report.variant << ',' << to_string(e.key.modality) << ',' << to_string(e.key.kind) << ','
                    << format_exact(e.key.proportion) << ',' << to_string(m) << ',' << format_exact(a.clean.mean)
                    << ',' << format_exact(a.clean.std) << ',' << format_exact(a.perturbed.mean) << ','
                    << format_exact(a.perturbed.std) << ',' << format_exact(a.drop.mean) << ','
                    << format_exact(a.drop.std) << ',' << e.n_seeds << '\n';
            }
        }
    }
    return out.str();
}

/// Inverse of emit_csv. Variants and keys keep their order of first appearance.
inline std::vector<AggregateReport> parse_csv(std::string_view text) {
    std::vector<AggregateReport> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != kCsvHeader) throw ParseError(line_no, "unexpected report header");
            header_seen = true;
            continue;
        }
        std::vector<std::string_view> cells;
        std::string_view rest = line;
        for (;;) {
            const auto comma = rest.find(',');
            cells.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (cells.size() != 12) throw ParseError(line_no, "expected 12 columns, got " + std::to_string(cells.size()));

        DiagnosticKey key;
        Metric metric{};
        try {
            key.modality = parse_modality(cells[1]);
            key.kind = parse_perturbation_kind(cells[2]);
            metric = parse_metric(cells[4]);
        } catch (const ContractError& e) {
            throw ParseError(line_no, e.what());
        }
        key.proportion = parse_exact(cells[3], line_no);

        AggregateReport* report = nullptr;
        for (auto& r : out) {
            if (r.variant == cells[0]) report = &r;
        }
        if (report == nullptr) {
            out.push_back(AggregateReport{std::string(cells[0]), {}});
            report = &out.back();
        }
        AggregateEntry* entry = nullptr;
        for (auto& e : report->entries) {
            if (e.key == key) entry = &e;
        }
        if (entry == nullptr) {
            report->entries.push_back(AggregateEntry{key, {}, 0});
            entry = &report->entries.back();
        }
        MetricAggregate& a = entry->metrics[index_of(metric)];
        a.clean = {parse_exact(cells[5], line_no), parse_exact(cells[6], line_no)};
        a.perturbed = {parse_exact(cells[7], line_no), parse_exact(cells[8], line_no)};
        a.drop = {parse_exact(cells[9], line_no), parse_exact(cells[10], line_no)};
        std::size_t n = 0;
        const auto res = std::from_chars(cells[11].data(), cells[11].data() + cells[11].size(), n);
        if (res.ec != std::errc() || res.ptr != cells[11].data() + cells[11].size()) {
            throw ParseError(line_no, "bad seed count");
        }
        entry->n_seeds = n;
    }
    if (!header_seen) throw ParseError(line_no, "empty report");
    return out;
}

/// Corr and MAE at 3 decimals, F1 and Acc-2 at 2.
inline int display_decimals(Metric m) noexcept {
    return (m == Metric::f1 || m == Metric::acc2) ? 2 : 3;
}

inline std::string format_fixed(double v, int decimals) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(decimals) << v;
    return s.str();
}

/// "↓ x" for a degradation, "↑ x" for an improvement, "→ 0" when unchanged.
inline std::string format_drop(double drop, Metric m) {
    const std::string magnitude = format_fixed(std::abs(drop), display_decimals(m));
    if (magnitude == format_fixed(0.0, display_decimals(m))) return "→ 0";
    return (drop > 0 ? "↓ " : "↑ ") + magnitude;
}

inline std::string format_percent_of(double proportion) {
    std::ostringstream s;
    s << std::setprecision(6) << proportion * 100.0 << '%';
    return s.str();
}

namespace detail {

inline std::string markdown_row(std::initializer_list<std::string> cells) {
    std::string row = "|";
    for (const auto& c : cells) row += " " + c + " |";
    return row + "\n";
}

inline const AggregateEntry* first_entry(const AggregateReport& r) {
    return r.entries.empty() ? nullptr : &r.entries.front();
}

}  // namespace detail

/// Table-shaped view: clean rows per variant, then one row per variant for
/// every diagnostic. When a robust variant is given, the larger drop of each
/// standard/robust pair is bold and a relative-reduction table follows.
inline std::string emit_markdown(const AggregateReport& standard, const AggregateReport* robust = nullptr) {
    std::vector<const AggregateReport*> variants{&standard};
    if (robust != nullptr) variants.push_back(robust);

    std::ostringstream out;
    out << detail::markdown_row({"Modality", "Diagnostic", "Training", "Corr", "F1", "Acc-2", "MAE"});
    out << "|---|---|---|---:|---:|---:|---:|\n";

    for (const AggregateReport* v : variants) {
        const AggregateEntry* e = detail::first_entry(*v);
        if (e == nullptr) continue;
        std::array<std::string, 4> cells;
        for (Metric m : kMetrics) cells[index_of(m)] = format_fixed(e->get(m).clean.mean, display_decimals(m));
        out << detail::markdown_row({"-", "clean", v->variant, cells[0], cells[1], cells[2], cells[3]});
    }

    for (const AggregateEntry& s : standard.entries) {
        const AggregateEntry* r = robust != nullptr ? robust->find(s.key) : nullptr;
        const std::string diagnostic = std::string(to_string(s.key.kind)) + " " + format_percent_of(s.key.proportion);
        for (const AggregateReport* v : variants) {
            const AggregateEntry* e = v == &standard ? &s : r;
            if (e == nullptr) continue;
            std::array<std::string, 4> cells;
            for (Metric m : kMetrics) {
                std::string cell = format_drop(e->get(m).drop.mean, m);
                if (r != nullptr) {
                    const double mine = e->get(m).drop.mean;
                    const double other = (e == &s ? r : &s)->get(m).drop.mean;
                    if (mine > other) cell = "**" + cell + "**";
                }
                cells[index_of(m)] = cell;
            }
            out << detail::markdown_row({std::string(to_string(s.key.modality)), diagnostic, v->variant, cells[0],
                                         cells[1], cells[2], cells[3]});
        }
    }

    if (robust != nullptr) {
        const auto comparison = compare(standard, *robust);
        out << "\nRelative drop reduction (" << robust->variant << " vs " << standard.variant << "):\n\n";
        out << detail::markdown_row({"Modality", "Diagnostic", "Corr", "F1", "Acc-2", "MAE"});
        out << "|---|---|---:|---:|---:|---:|\n";
        for (const ComparisonEntry& c : comparison) {
            std::array<std::string, 4> cells;
            for (Metric m : kMetrics) {
                const auto& red = c.reduction[index_of(m)];
                cells[index_of(m)] = red ? format_fixed(*red, 1) + "%" : "n/a";
            }
            out << detail::markdown_row({std::string(to_string(c.key.modality)),
                                         std::string(to_string(c.key.kind)) + " " + format_percent_of(c.key.proportion),
                                         cells[0], cells[1], cells[2], cells[3]});
        }
        if (!comparison.empty()) {
            const auto& d = comparison.front().clean_delta;
            out << "\nClean delta (" << robust->variant << " - " << standard.variant << "): Corr "
                << format_fixed(d[0], 3) << ", F1 " << format_fixed(d[1], 2) << ", Acc-2 " << format_fixed(d[2], 2)
                << ", MAE " << format_fixed(d[3], 3) << "\n";
        }
    }
    return out.str();
}

inline std::string emit_report(const AggregateReport& aggregate, const AggregateReport* comparison, ReportFormat format) {
    if (format == ReportFormat::markdown) return emit_markdown(aggregate, comparison);
    std::vector<AggregateReport> variants{aggregate};
    if (comparison != nullptr) variants.push_back(*comparison);
    return emit_csv(variants);
}

}  // namespace modrobust
