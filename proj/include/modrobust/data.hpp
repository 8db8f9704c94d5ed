#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "modrobust/errors.hpp"
#include "modrobust/rng.hpp"
#include "modrobust/types.hpp"

namespace modrobust {

enum class Split { train, valid, test };

inline constexpr std::array<Split, 3> kSplits{Split::train, Split::valid, Split::test};

constexpr std::size_t index_of(Split s) noexcept { return static_cast<std::size_t>(s); }

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "?";
}

inline Split parse_split(std::string_view text) {
    for (Split s : kSplits) {
        if (to_string(s) == text) return s;
    }
    throw ContractError("unknown split '" + std::string(text) + "'");
}

inline constexpr double kLabelBound = 3.0;

/// Feature dimensionality per modality.
struct Dims {
    std::size_t language = 0;
    std::size_t audio = 0;
    std::size_t visual = 0;

    std::size_t of(Modality m) const noexcept {
        switch (m) {
            case Modality::language: return language;
            case Modality::audio: return audio;
            case Modality::visual: return visual;
        }
        return 0;
    }

    friend bool operator==(const Dims&, const Dims&) = default;
};

struct FeatureRecord {
    std::string id;
    Split split = Split::train;
    double label = 0.0;
    std::vector<double> language;
    std::vector<double> audio;
    std::vector<double> visual;

    const std::vector<double>& features(Modality m) const {
        switch (m) {
            case Modality::language: return language;
            case Modality::audio: return audio;
            case Modality::visual: return visual;
        }
        return language;
    }

    std::vector<double>& features(Modality m) {
        return const_cast<std::vector<double>&>(std::as_const(*this).features(m));
    }

    friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

/// Immutable collection of records grouped by split, in insertion order.
class Dataset {
public:
    Dataset() = default;

    Dataset(Dims dims, std::vector<FeatureRecord> records) : dims_(dims) {
        if (dims.language == 0 || dims.audio == 0 || dims.visual == 0) {
            throw ContractError("dataset dims must be positive");
        }
        std::set<std::string> seen;
        for (auto& r : records) {
            for (Modality m : kModalities) {
                if (r.features(m).size() != dims.of(m)) {
                    throw SchemaError("record '" + r.id + "': " + std::string(to_string(m)) + " has length " +
                                      std::to_string(r.features(m).size()) + ", expected " +
                                      std::to_string(dims.of(m)));
                }
            }
            if (!(r.label >= -kLabelBound && r.label <= kLabelBound)) {
                throw SchemaError("record '" + r.id + "': label outside [-3, 3]");
            }
            if (!seen.insert(r.id).second) throw SchemaError("duplicate record id '" + r.id + "'");
            splits_[index_of(r.split)].push_back(std::move(r));
        }
    }

    const Dims& dims() const noexcept { return dims_; }

    const std::vector<FeatureRecord>& split(Split s) const noexcept { return splits_[index_of(s)]; }

    std::size_t size() const noexcept {
        return splits_[0].size() + splits_[1].size() + splits_[2].size();
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    Dims dims_;
    std::array<std::vector<FeatureRecord>, 3> splits_;
};

/// Recipe for a synthetic dataset whose label signal is shared unevenly
/// across modalities.
struct SyntheticSpec {
    std::array<std::size_t, 3> n_per_split{1000, 200, 500};
    Dims dims{16, 8, 8};
    std::array<double, 3> signal_weights{0.8, 0.1, 0.1};
    double feature_noise_sigma = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (dims.language == 0 || dims.audio == 0 || dims.visual == 0) {
            throw ContractError("synthetic spec: dims must be positive");
        }
        for (std::size_t n : n_per_split) {
            if (n == 0) throw ContractError("synthetic spec: every split count must be >= 1");
        }
        double total = 0.0;
        for (double w : signal_weights) {
            if (!(w >= 0.0)) throw ContractError("synthetic spec: signal weights must be nonnegative");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-9) throw ContractError("synthetic spec: signal weights must sum to 1");
        if (!(feature_noise_sigma >= 0.0)) throw ContractError("synthetic spec: noise sigma must be >= 0");
    }
};

inline nlohmann::ordered_json to_json(const SyntheticSpec& spec) {
    return nlohmann::ordered_json{
        {"n_train", spec.n_per_split[0]},
        {"n_valid", spec.n_per_split[1]},
        {"n_test", spec.n_per_split[2]},
        {"dims", {spec.dims.language, spec.dims.audio, spec.dims.visual}},
        {"signal_weights", spec.signal_weights},
        {"feature_noise_sigma", spec.feature_noise_sigma},
        {"seed", spec.seed},
    };
}

/// Missing keys keep their defaults.
inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
    SyntheticSpec spec;
    try {
        if (j.contains("n_train")) spec.n_per_split[0] = j.at("n_train").get<std::size_t>();
        if (j.contains("n_valid")) spec.n_per_split[1] = j.at("n_valid").get<std::size_t>();
        if (j.contains("n_test")) spec.n_per_split[2] = j.at("n_test").get<std::size_t>();
        if (j.contains("dims")) {
            const auto d = j.at("dims").get<std::array<std::size_t, 3>>();
            spec.dims = Dims{d[0], d[1], d[2]};
        }
        if (j.contains("signal_weights")) spec.signal_weights = j.at("signal_weights").get<std::array<double, 3>>();
        if (j.contains("feature_noise_sigma")) spec.feature_noise_sigma = j.at("feature_noise_sigma").get<double>();
        if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("synthetic spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

/// Draws latent s ~ U(-3, 3) per record; modality m carries s * w_m along a
/// fixed unit direction v_m plus i.i.d. Normal(0, sigma^2) noise; label = s.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Stream stream(spec.seed, 0);

    std::array<std::vector<double>, 3> directions;
    for (Modality m : kModalities) {
        auto& v = directions[index_of(m)];
        double norm = 0.0;
        while (norm == 0.0) {
            v.assign(spec.dims.of(m), 0.0);
            for (double& x : v) x = stream.normal();
            norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        }
        for (double& x : v) x /= norm;
    }

    std::vector<FeatureRecord> records;
    for (Split split : kSplits) {
        const std::size_t n = spec.n_per_split[index_of(split)];
        for (std::size_t i = 0; i < n; ++i) {
            FeatureRecord r;
            std::ostringstream id;
            id << to_string(split) << '-';
            id.width(6);
            id.fill('0');
            id << i;
            r.id = id.str();
            r.split = split;
            const double s = stream.uniform(-kLabelBound, kLabelBound);
            r.label = s;
            for (Modality m : kModalities) {
                const auto& v = directions[index_of(m)];
                const double w = spec.signal_weights[index_of(m)];
                auto& x = r.features(m);
                x.resize(v.size());
                for (std::size_t k = 0; k < v.size(); ++k) {
                    x[k] = s * w * v[k] + spec.feature_noise_sigma * stream.normal();
                }
            }
            records.push_back(std::move(r));
        }
    }
    return Dataset(spec.dims, std::move(records));
}

// Feature file: line 1 is {"d_l":..,"d_a":..,"d_v":..}; each further line is
// one record {"id","split","label","language","audio","visual"}. Doubles are
// written in shortest round-trip form, so save/load is bit-exact.

inline void write_features(const Dataset& dataset, std::ostream& out) {
    const Dims& d = dataset.dims();
    out << nlohmann::ordered_json{{"d_l", d.language}, {"d_a", d.audio}, {"d_v", d.visual}}.dump() << '\n';
    for (Split s : kSplits) {
        for (const FeatureRecord& r : dataset.split(s)) {
            nlohmann::ordered_json j{
                {"id", r.id},
                {"split", to_string(r.split)},
                {"label", r.label},
                {"language", r.language},
                {"audio", r.audio},
                {"visual", r.visual},
            };
            out << j.dump() << '\n';
        }
    }
}

inline Dataset read_features(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    Dims dims;
    bool have_header = false;
    std::vector<FeatureRecord> records;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");

        try {
            if (!have_header) {
                dims = Dims{j.at("d_l").get<std::size_t>(), j.at("d_a").get<std::size_t>(),
                            j.at("d_v").get<std::size_t>()};
                if (dims.language == 0 || dims.audio == 0 || dims.visual == 0) {
                    throw SchemaError("header dims must be positive");
                }
                have_header = true;
                continue;
            }
            FeatureRecord r;
            r.id = j.at("id").get<std::string>();
            const auto split_name = j.at("split").get<std::string>();
            try {
                r.split = parse_split(split_name);
            } catch (const ContractError&) {
                throw SchemaError("record '" + r.id + "': unknown split '" + split_name + "'");
            }
            r.label = j.at("label").get<double>();
            r.language = j.at("language").get<std::vector<double>>();
            r.audio = j.at("audio").get<std::vector<double>>();
            r.visual = j.at("visual").get<std::vector<double>>();
            for (Modality m : kModalities) {
                if (r.features(m).size() != dims.of(m)) {
                    throw SchemaError("record '" + r.id + "' (line " + std::to_string(line_no) + "): " +
                                      std::string(to_string(m)) + " has length " +
                                      std::to_string(r.features(m).size()) + ", expected " +
                                      std::to_string(dims.of(m)));
                }
            }
            records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("bad field: ") + e.what());
        }
    }
    if (records.empty()) throw EmptyDatasetError("feature file holds no records");
    return Dataset(dims, std::move(records));
}

inline void save_features(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    write_features(dataset, out);
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline Dataset load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open feature file '" + path.string() + "'");
    return read_features(in);
}

using Batch = std::vector<std::size_t>;

/// Seeded permutation of a split's record positions cut into consecutive
/// batches; the last batch may be short.
inline std::vector<Batch> batches(const Dataset& dataset, Split split, std::size_t batch_size, std::uint64_t seed,
                                  std::uint64_t epoch) {
    if (batch_size == 0) throw ContractError("batches: batch_size must be >= 1");
    const std::size_t n = dataset.split(split).size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Stream stream(derive_seed(seed, epoch), index_of(split));
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[stream.below(i)]);
    }
    std::vector<Batch> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

inline std::vector<Batch> batches(const Dataset& dataset, std::string_view split, std::size_t batch_size,
                                  std::uint64_t seed, std::uint64_t epoch) {
    return batches(dataset, parse_split(split), batch_size, seed, epoch);
}

}  // namespace modrobust
