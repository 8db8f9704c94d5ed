#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "modrobust/data.hpp"
#include "modrobust/errors.hpp"
#include "modrobust/model.hpp"
#include "modrobust/perturb.hpp"
#include "modrobust/tensor.hpp"

namespace modrobust {

struct Sgd {
    double lr = 0.01;
};

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

using Optimizer = std::variant<Sgd, Adam>;

/// Modality perturbation applied inside each training batch.
struct RobustSpec {
    double proportion = 0.3;
    Modality modality = Modality::language;
    HookPoint hook = HookPoint::post_encoder;
    PlanKind kind = PlanKind::balanced;
};

struct TrainConfig {
    std::size_t epochs = 60;
    std::size_t batch_size = 32;
    Optimizer optimizer = Adam{};
    std::uint64_t seed = 0;
    std::optional<RobustSpec> robust;
    std::size_t patience = 0;  // epochs without validation-MAE improvement before stopping; 0 disables

    void validate() const {
        if (epochs == 0) throw ContractError("train config: epochs must be >= 1");
        if (batch_size == 0) throw ContractError("train config: batch_size must be >= 1");
        if (robust && !(robust->proportion >= 0.0 && robust->proportion <= 1.0)) {
            throw ContractError("train config: robust proportion must lie in [0, 1]");
        }
    }
};

/// First and second moment estimates for Adam; empty until the first step.
struct OptimizerState {
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> second;
    std::uint64_t step = 0;
};

/// Applies one update using each parameter's grad slot. Parameters without a
/// gradient are treated as having zero gradient.
inline void optimizer_step(std::span<Tensor> params, OptimizerState& state, const Optimizer& optimizer) {
    if (const auto* sgd = std::get_if<Sgd>(&optimizer)) {
        for (Tensor& p : params) {
            if (!p.has_grad()) continue;
            auto v = p.data();
            const auto g = p.grad();
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= sgd->lr * g[i];
        }
        return;
    }

    const Adam& adam = std::get<Adam>(optimizer);
    if (state.first.empty() && state.step == 0) {
        for (const Tensor& p : params) {
            state.first.emplace_back(p.size(), 0.0);
            state.second.emplace_back(p.size(), 0.0);
        }
    }
    if (state.first.size() != params.size() || state.second.size() != params.size()) {
        throw ContractError("optimizer state tracks " + std::to_string(state.first.size()) + " tensors, got " +
                            std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (state.first[k].size() != params[k].size() || state.second[k].size() != params[k].size()) {
            throw ContractError("optimizer state shape mismatch for parameter " + std::to_string(k));
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(adam.beta1, t);
    const double bias2 = 1.0 - std::pow(adam.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = params[k];
        if (!p.has_grad()) continue;
        auto v = p.data();
        const auto g = p.grad();
        auto& m1 = state.first[k];
        auto& m2 = state.second[k];
        for (std::size_t i = 0; i < v.size(); ++i) {
            m1[i] = adam.beta1 * m1[i] + (1.0 - adam.beta1) * g[i];
            m2[i] = adam.beta2 * m2[i] + (1.0 - adam.beta2) * g[i] * g[i];
            const double m_hat = m1[i] / bias1;
            const double v_hat = m2[i] / bias2;
            v[i] -= adam.lr * m_hat / (std::sqrt(v_hat) + adam.eps);
        }
    }
}

struct EpochTrace {
    std::size_t epoch = 0;  // 1-based
    double train_mse = 0.0;
    double valid_mae = 0.0;

    friend bool operator==(const EpochTrace&, const EpochTrace&) = default;
};

struct RunArtifacts {
    Model model;  // parameters from the epoch with the best validation MAE
    std::vector<EpochTrace> trace;
    TrainConfig config;
    std::size_t best_epoch = 0;
};

/// Hook called after each batch's forward pass; used by tests to inspect
/// which interventions were applied.
using BatchObserver = std::function<void(std::size_t epoch, std::size_t batch_index, const std::vector<std::size_t>& batch,
                                         std::span<const Intervention> interventions)>;

namespace detail {

inline double mean_absolute_error(std::span<const double> pred, const std::vector<FeatureRecord>& records) {
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(pred[i] - records[i].label);
    return total / static_cast<double>(pred.size());
}

inline RunArtifacts train(Model model, const Dataset& dataset, const TrainConfig& cfg, const BatchObserver& observer) {
    cfg.validate();
    const auto& train_records = dataset.split(Split::train);
    const auto& valid_records = dataset.split(Split::valid);
    if (train_records.empty()) throw ContractError("training split is empty");
    if (valid_records.empty()) throw ContractError("validation split is empty");
    if (dataset.dims() != model.config().dims) throw ContractError("dataset dims do not match model dims");

    RunArtifacts run{model, {}, cfg, 0};
    OptimizerState state;
    double best_mae = 0.0;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double squared_error = 0.0;
        const auto plan_batches = batches(dataset, Split::train, cfg.batch_size, cfg.seed, epoch);
        for (std::size_t b = 0; b < plan_batches.size(); ++b) {
            const auto& batch = plan_batches[b];
            std::vector<const FeatureRecord*> records;
            std::vector<std::string> ids;
            Tensor labels(batch.size(), 1);
            for (std::size_t i = 0; i < batch.size(); ++i) {
                const FeatureRecord& r = train_records[batch[i]];
                records.push_back(&r);
                ids.push_back(r.id);
                labels(i, 0) = r.label;
            }

            std::vector<Intervention> interventions;
            if (cfg.robust) {
                const PerturbationPlan plan{cfg.robust->modality, cfg.robust->kind, cfg.robust->proportion,
                                            cfg.robust->hook, derive_seed(cfg.seed, epoch, b)};
                interventions = plan_interventions(plan, ids);
            }

            model.zero_grad();
            Tape tape;
            const Var pred = model.forward(tape, make_inputs(records, dataset.dims()), interventions);
            if (observer) observer(epoch, b, batch, interventions);
            const Var loss = tape.mse(pred, tape.constant(labels));
            const double loss_value = tape.value(loss).item();
            if (!std::isfinite(loss_value)) throw TrainingError(epoch, "non-finite training loss");
            squared_error += loss_value * static_cast<double>(batch.size());
            tape.backward(loss);
            optimizer_step(model.parameters(), state, cfg.optimizer);
        }

        const double train_mse = squared_error / static_cast<double>(train_records.size());
        const double valid_mae = mean_absolute_error(predict(model, dataset, Split::valid), valid_records);
        if (!std::isfinite(valid_mae)) throw TrainingError(epoch, "non-finite validation error");
        run.trace.push_back({epoch, train_mse, valid_mae});

        if (run.best_epoch == 0 || valid_mae < best_mae) {
            best_mae = valid_mae;
            run.best_epoch = epoch;
            run.model = model;
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            break;
        }
    }
    run.model.zero_grad();
    return run;
}

}  // namespace detail

inline RunArtifacts train_standard(Model model, const Dataset& dataset, const TrainConfig& cfg,
                                   const BatchObserver& observer = {}) {
    if (cfg.robust) throw ContractError("train_standard: config carries a robust perturbation spec");
    return detail::train(std::move(model), dataset, cfg, observer);
}

/// Each batch of each epoch draws a fresh mask of floor(p * |batch|) samples
/// and perturbs the configured modality of those samples in the forward pass.
inline RunArtifacts train_robust(Model model, const Dataset& dataset, const TrainConfig& cfg,
                                 const BatchObserver& observer = {}) {
    if (!cfg.robust) throw ContractError("train_robust: config has no robust perturbation spec");
    return detail::train(std::move(model), dataset, cfg, observer);
}

inline nlohmann::ordered_json to_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    if (const auto* sgd = std::get_if<Sgd>(&cfg.optimizer)) {
        j["optimizer"] = {{"name", "sgd"}, {"lr", sgd->lr}};
    } else {
        const Adam& a = std::get<Adam>(cfg.optimizer);
        j["optimizer"] = {{"name", "adam"}, {"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
    }
    j["loss"] = "mse";
    j["seed"] = cfg.seed;
    if (cfg.robust) {
        j["robust"] = {{"proportion", cfg.robust->proportion},
                       {"modality", to_string(cfg.robust->modality)},
                       {"hook", to_string(cfg.robust->hook)},
                       {"kind", to_string(cfg.robust->kind)}};
    } else {
        j["robust"] = nullptr;
    }
    j["patience"] = cfg.patience;
    return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    const auto& opt = j.at("optimizer");
    if (opt.at("name").get<std::string>() == "sgd") {
        cfg.optimizer = Sgd{opt.at("lr").get<double>()};
    } else {
        cfg.optimizer = Adam{opt.at("lr").get<double>(), opt.at("beta1").get<double>(), opt.at("beta2").get<double>(),
                             opt.at("eps").get<double>()};
    }
    cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("robust") && !j.at("robust").is_null()) {
        const auto& r = j.at("robust");
        cfg.robust = RobustSpec{r.at("proportion").get<double>(), parse_modality(r.at("modality").get<std::string>()),
                                parse_hook(r.at("hook").get<std::string>()),
                                parse_plan_kind(r.at("kind").get<std::string>())};
    }
    cfg.patience = j.value("patience", std::size_t{0});
    cfg.validate();
    return cfg;
}

/// Writes checkpoint.json, config.json and trace.csv into `dir`.
inline void write_run(const RunArtifacts& run, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_checkpoint(run.model, dir / "checkpoint.json");
    {
        std::ofstream out(dir / "config.json", std::ios::binary);
        nlohmann::ordered_json j{{"model", to_json(run.model.config())},
                                 {"train", to_json(run.config)},
                                 {"best_epoch", run.best_epoch}};
        out << j.dump(2) << '\n';
    }
    std::ofstream out(dir / "trace.csv", std::ios::binary);
    out << "epoch,train_mse,valid_mae\n";
    for (const EpochTrace& t : run.trace) {
        out << t.epoch << ',' << nlohmann::json(t.train_mse).dump() << ',' << nlohmann::json(t.valid_mae).dump()
            << '\n';
    }
}

}  // namespace modrobust
