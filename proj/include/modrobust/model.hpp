#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "modrobust/data.hpp"
#include "modrobust/errors.hpp"
#include "modrobust/perturb.hpp"
#include "modrobust/rng.hpp"
#include "modrobust/tensor.hpp"
#include "modrobust/types.hpp"

namespace modrobust {

enum class Fusion { concat_mlp };

struct ModelConfig {
    Dims dims{16, 8, 8};
    std::size_t hidden_dim = 16;
    std::size_t encoder_layers = 2;
    Fusion fusion = Fusion::concat_mlp;
    std::uint64_t init_seed = 0;

    void validate() const {
        if (dims.language == 0 || dims.audio == 0 || dims.visual == 0) {
            throw ContractError("model config: dims must be positive");
        }
        if (hidden_dim == 0) throw ContractError("model config: hidden_dim must be >= 1");
        if (encoder_layers == 0) throw ContractError("model config: encoder_layers must be >= 1");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Input matrices for one batch, one row per sample.
struct BatchInputs {
    std::array<Tensor, 3> features;  // indexed by Modality

    std::size_t size() const noexcept { return features[0].rows(); }
};

inline BatchInputs make_inputs(std::span<const FeatureRecord* const> records, const Dims& dims) {
    if (records.empty()) throw ContractError("batch must hold at least one record");
    BatchInputs in;
    for (Modality m : kModalities) {
        Tensor t(records.size(), dims.of(m));
        for (std::size_t r = 0; r < records.size(); ++r) {
            const auto& x = records[r]->features(m);
            if (x.size() != dims.of(m)) throw SchemaError("record '" + records[r]->id + "' does not match model dims");
            std::copy(x.begin(), x.end(), t.data().begin() + static_cast<std::ptrdiff_t>(r * dims.of(m)));
        }
        in.features[index_of(m)] = std::move(t);
    }
    return in;
}

/// One tanh MLP encoder per modality, a concat fusion layer (tanh) and a
/// linear output unit. Weights are stored input-major (fan_in x fan_out) and
/// applied as x * W + b.
class Model {
public:
    explicit Model(ModelConfig config) : config_(config) {
        config_.validate();
        build_layout();
        Stream stream(config_.init_seed, 0);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in_[i]));
            for (double& v : params_[i].data()) v = stream.uniform(-bound, bound);
        }
    }

    Model(ModelConfig config, std::span<const double> flat) : config_(config) {
        config_.validate();
        build_layout();
        if (flat.size() != parameter_count()) {
            throw SchemaError("checkpoint holds " + std::to_string(flat.size()) + " parameters, config needs " +
                              std::to_string(parameter_count()));
        }
        std::size_t offset = 0;
        for (Tensor& p : params_) {
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), p.size(), p.data().begin());
            offset += p.size();
        }
    }

    const ModelConfig& config() const noexcept { return config_; }

    std::span<Tensor> parameters() noexcept { return params_; }
    std::span<const Tensor> parameters() const noexcept { return params_; }
    const std::vector<std::string>& parameter_names() const noexcept { return names_; }

    /// Named access, e.g. "language.0.weight", "fusion.1.bias".
    Tensor& parameter(std::string_view name) { return params_[lookup(name)]; }
    const Tensor& parameter(std::string_view name) const { return params_[lookup(name)]; }

    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const Tensor& p : params_) n += p.size();
        return n;
    }

    std::vector<double> flat_parameters() const {
        std::vector<double> flat;
        flat.reserve(parameter_count());
        for (const Tensor& p : params_) flat.insert(flat.end(), p.data().begin(), p.data().end());
        return flat;
    }

    void zero_grad() {
        for (Tensor& p : params_) p.clear_grad();
    }

    /// Forward pass with parameters tracked for gradients.
    Var forward(Tape& tape, const BatchInputs& inputs, std::span<const Intervention> interventions) {
        return build(tape, inputs, interventions, [&](std::size_t i) { return tape.parameter(params_[i]); });
    }

    /// Forward pass with parameters recorded as constants.
    Var forward(Tape& tape, const BatchInputs& inputs, std::span<const Intervention> interventions) const {
        return build(tape, inputs, interventions, [&](std::size_t i) { return tape.constant(params_[i]); });
    }

    friend bool operator==(const Model& a, const Model& b) {
        return a.config_ == b.config_ && a.params_ == b.params_;
    }

private:
    void add_param(std::string name, std::size_t rows, std::size_t cols, std::size_t fan_in) {
        names_.push_back(std::move(name));
        params_.emplace_back(rows, cols);
        fan_in_.push_back(fan_in);
    }

    void build_layout() {
        const std::size_t h = config_.hidden_dim;
        for (Modality m : kModalities) {
            std::size_t in = config_.dims.of(m);
            for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
                const std::string prefix = std::string(to_string(m)) + "." + std::to_string(l);
                add_param(prefix + ".weight", in, h, in);
                add_param(prefix + ".bias", 1, h, in);
                in = h;
            }
        }
        add_param("fusion.0.weight", 3 * h, h, 3 * h);
        add_param("fusion.0.bias", 1, h, 3 * h);
        add_param("fusion.1.weight", h, 1, h);
        add_param("fusion.1.bias", 1, 1, h);
    }

    std::size_t lookup(std::string_view name) const {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i] == name) return i;
        }
        throw ContractError("no parameter named '" + std::string(name) + "'");
    }

    static std::vector<RowEdit> edits_for(std::span<const Intervention> interventions, Modality m, HookPoint hook,
                                          std::size_t width) {
        std::vector<RowEdit> edits;
        for (const Intervention& iv : interventions) {
            if (iv.modality != m || iv.hook != hook) continue;
            RowEdit e;
            e.row = iv.sample;
            if (iv.kind == PerturbationKind::missing) {
                e.scale = 0.0;
            } else {
                Stream stream = *iv.noise;
                e.offset.resize(width);
                for (double& z : e.offset) z = stream.normal();
            }
            edits.push_back(std::move(e));
        }
        return edits;
    }

    template <typename Leaf>
    Var build(Tape& tape, const BatchInputs& inputs, std::span<const Intervention> interventions, Leaf leaf) const {
        const std::size_t n = inputs.size();
        for (Modality m : kModalities) {
            const Tensor& x = inputs.features[index_of(m)];
            if (x.rows() != n || x.cols() != config_.dims.of(m)) {
                throw ShapeError("forward: " + std::string(to_string(m)) + " input " + x.shape() + " does not match");
            }
        }
        for (const Intervention& iv : interventions) {
            if (iv.sample >= n) {
                throw ContractError("intervention sample index " + std::to_string(iv.sample) +
                                    " outside batch of " + std::to_string(n));
            }
            if (iv.kind == PerturbationKind::noise && !iv.noise) {
                throw ContractError("noise intervention without a stream");
            }
        }

        std::size_t p = 0;
        std::array<Var, 3> encoded;
        for (Modality m : kModalities) {
            Var h = tape.constant(inputs.features[index_of(m)]);
            auto pre = edits_for(interventions, m, HookPoint::pre_encoder, config_.dims.of(m));
            if (!pre.empty()) h = tape.edit_rows(h, std::move(pre));
            for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
                Var w = leaf(p++);
                Var b = leaf(p++);
                h = tape.activation(tape.add_row(tape.matmul(h, w), b), Activation::tanh);
            }
            auto post = edits_for(interventions, m, HookPoint::post_encoder, config_.hidden_dim);
            if (!post.empty()) h = tape.edit_rows(h, std::move(post));
            encoded[index_of(m)] = h;
        }
        Var fused = tape.concat_cols(encoded);
        Var w0 = leaf(p++);
        Var b0 = leaf(p++);
        Var hidden = tape.activation(tape.add_row(tape.matmul(fused, w0), b0), Activation::tanh);
        Var w1 = leaf(p++);
        Var b1 = leaf(p++);
        return tape.add_row(tape.matmul(hidden, w1), b1);
    }

    ModelConfig config_;
    std::vector<Tensor> params_;
    std::vector<std::string> names_;
    std::vector<std::size_t> fan_in_;
};

struct ForwardResult {
    Tape tape;
    Var predictions;
};

/// Stateless forward on a const model; the returned tape is inference-only.
inline ForwardResult forward(const Model& model, const BatchInputs& inputs,
                             std::span<const Intervention> interventions = {}) {
    ForwardResult out;
    out.predictions = model.forward(out.tape, inputs, interventions);
    return out;
}

inline constexpr std::size_t kPredictBatch = 256;

/// Predictions for every record of `split`, in record order. Intervention
/// sample indices refer to positions within the split.
inline std::vector<double> predict(const Model& model, const Dataset& dataset, Split split,
                                   std::span<const Intervention> interventions = {}) {
    const auto& records = dataset.split(split);
    if (records.empty()) throw ContractError("predict: split '" + std::string(to_string(split)) + "' is empty");
    for (const Intervention& iv : interventions) {
        if (iv.sample >= records.size()) {
            throw ContractError("intervention sample index " + std::to_string(iv.sample) + " outside split of " +
                                std::to_string(records.size()));
        }
    }

    std::vector<double> out;
    out.reserve(records.size());
    for (std::size_t start = 0; start < records.size(); start += kPredictBatch) {
        const std::size_t end = std::min(records.size(), start + kPredictBatch);
        std::vector<const FeatureRecord*> chunk;
        for (std::size_t i = start; i < end; ++i) chunk.push_back(&records[i]);
        std::vector<Intervention> local;
        for (const Intervention& iv : interventions) {
            if (iv.sample >= start && iv.sample < end) {
                Intervention copy = iv;
                copy.sample -= start;
                local.push_back(std::move(copy));
            }
        }
        Tape tape;
        const Var pred = model.forward(tape, make_inputs(chunk, dataset.dims()), local);
        const auto values = tape.value(pred).data();
        out.insert(out.end(), values.begin(), values.end());
    }
    return out;
}

// Checkpoint: one JSON document holding the config and the flat parameter
// vector in parameter_names() order.

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
    return nlohmann::ordered_json{
        {"dims", {c.dims.language, c.dims.audio, c.dims.visual}},
        {"hidden_dim", c.hidden_dim},
        {"encoder_layers", c.encoder_layers},
        {"encoder_activation", "tanh"},
        {"fusion", "concat_mlp"},
        {"init_seed", c.init_seed},
    };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    const auto d = j.at("dims").get<std::array<std::size_t, 3>>();
    c.dims = Dims{d[0], d[1], d[2]};
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    if (j.value("fusion", std::string("concat_mlp")) != "concat_mlp") throw SchemaError("unsupported fusion");
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    c.validate();
    return c;
}

inline std::string checkpoint_json(const Model& model) {
    nlohmann::ordered_json j{
        {"format", "modrobust-checkpoint"},
        {"version", 1},
        {"config", to_json(model.config())},
        {"parameter_names", model.parameter_names()},
        {"parameters", model.flat_parameters()},
    };
    return j.dump() + "\n";
}

inline Model model_from_checkpoint_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format").get<std::string>() != "modrobust-checkpoint") throw SchemaError("not a checkpoint file");
        const auto flat = j.at("parameters").get<std::vector<double>>();
        return Model(model_config_from_json(j.at("config")), flat);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << checkpoint_json(model);
}

inline Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_checkpoint_json(text);
}

}  // namespace modrobust
