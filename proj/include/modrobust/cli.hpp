#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "modrobust/data.hpp"
#include "modrobust/diagnostics.hpp"
#include "modrobust/model.hpp"
#include "modrobust/report.hpp"
#include "modrobust/trainer.hpp"

namespace modrobust::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

namespace fs = std::filesystem;

inline std::string run_dir_name(std::uint64_t seed) { return "run-" + std::to_string(seed); }

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline Dataset load_dataset_or_throw(const std::string& path) {
    if (!fs::exists(path)) throw Error("data file '" + path + "' does not exist");
    return load_features(path);
}

struct GenDataArgs {
    std::string spec;
    std::string out;
    std::optional<std::uint64_t> seed;
};

struct TrainArgs {
    std::string data;
    std::string out;
    std::size_t hidden = 16;
    std::optional<double> robust;
    std::string robust_kind = "balanced";
    std::string hook = "post";
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::size_t epochs = 60;
    std::size_t batch = 32;
    double lr = 1e-3;
    std::string opt = "adam";
};

struct DiagnoseArgs {
    std::string runs;
    std::string data;
    std::string out;
    std::vector<double> proportions{0.05, 0.10, 0.15, 0.30};
    std::vector<std::string> kinds{"missing", "noise"};
    std::vector<std::string> modalities{"language", "audio", "visual"};
    std::string hook = "post";
    std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct ReportArgs {
    std::string in;
    std::string format;
    std::string compare;
};

inline int gen_data(const GenDataArgs& args, std::ostream& out) {
    SyntheticSpec spec;
    try {
        spec = synthetic_spec_from_json(nlohmann::json::parse(read_file(args.spec)));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("spec '" + args.spec + "': " + e.what());
    }
    if (args.seed) spec.seed = *args.seed;
    const Dataset dataset = generate_synthetic(spec);
    if (fs::path(args.out).has_parent_path()) fs::create_directories(fs::path(args.out).parent_path());
    save_features(dataset, args.out);
    out << "wrote " << dataset.size() << " records to " << args.out << '\n';
    return kExitOk;
}

inline TrainConfig make_train_config(const TrainArgs& args, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch;
    if (args.opt == "sgd") {
        cfg.optimizer = Sgd{args.lr};
    } else {
        cfg.optimizer = Adam{args.lr};
    }
    cfg.seed = seed;
    if (args.robust) {
        cfg.robust = RobustSpec{*args.robust, Modality::language, parse_hook(args.hook), parse_plan_kind(args.robust_kind)};
    }
    return cfg;
}

inline int train(const TrainArgs& args, std::ostream& out) {
    const Dataset dataset = load_dataset_or_throw(args.data);
    const fs::path root(args.out);
    fs::create_directories(root);

    nlohmann::ordered_json echo;
    echo["data"] = args.data;
    echo["seeds"] = args.seeds;
    echo["variant"] = args.robust ? "robust" : "standard";
    for (std::uint64_t seed : args.seeds) {
        ModelConfig mc;
        mc.dims = dataset.dims();
        mc.hidden_dim = args.hidden;
        mc.init_seed = seed;
        const TrainConfig tc = make_train_config(args, seed);
        if (!echo.contains("model")) {
            echo["model"] = to_json(mc);
            echo["train"] = to_json(tc);
        }
        RunArtifacts run = tc.robust ? train_robust(Model(mc), dataset, tc) : train_standard(Model(mc), dataset, tc);
        write_run(run, root / run_dir_name(seed));
        out << "seed " << seed << ": best epoch " << run.best_epoch << ", valid MAE "
            << run.trace[run.best_epoch - 1].valid_mae << '\n';
    }
    write_file(root / "experiment.json", echo.dump(2) + "\n");
    return kExitOk;
}

inline std::string run_variant(const fs::path& run_dir) {
    const auto j = nlohmann::json::parse(read_file(run_dir / "config.json"));
    const auto& robust = j.at("train").at("robust");
    return robust.is_null() ? "standard" : "robust";
}

inline int diagnose(const DiagnoseArgs& args, std::ostream& out) {
    const Dataset dataset = load_dataset_or_throw(args.data);
    DiagnosticConfig cfg;
    cfg.proportions = args.proportions;
    cfg.kinds.clear();
    for (const auto& k : args.kinds) cfg.kinds.push_back(parse_perturbation_kind(k));
    cfg.modalities.clear();
    for (const auto& m : args.modalities) cfg.modalities.push_back(parse_modality(m));
    cfg.hook = parse_hook(args.hook);
    cfg.seeds = args.seeds;
    cfg.validate();

    std::vector<std::vector<SweepEntry>> runs;
    std::optional<std::string> variant;
    for (std::uint64_t seed : cfg.seeds) {
        const fs::path dir = fs::path(args.runs) / run_dir_name(seed);
        if (!fs::exists(dir / "checkpoint.json")) throw Error("no checkpoint for seed " + std::to_string(seed) + " in '" + args.runs + "'");
        const std::string v = run_variant(dir);
        if (variant && *variant != v) throw Error("runs in '" + args.runs + "' mix standard and robust training");
        variant = v;
        const Model model = load_checkpoint(dir / "checkpoint.json");
        runs.push_back(sweep(model, dataset, cfg, seed));
    }
    const AggregateReport report = aggregate_seeds(runs, *variant);
    write_file(args.out, emit_report(report, nullptr, ReportFormat::csv));
    out << "wrote " << report.entries.size() << " diagnostics over " << cfg.seeds.size() << " seeds to " << args.out
        << '\n';
    return kExitOk;
}

inline AggregateReport read_report(const std::string& path) {
    auto variants = parse_csv(read_file(path));
    if (variants.empty()) throw Error("report '" + path + "' holds no rows");
    return std::move(variants.front());
}

inline int report(const ReportArgs& args, std::ostream& out) {
    const AggregateReport base = read_report(args.in);
    std::optional<AggregateReport> other;
    if (!args.compare.empty()) other = read_report(args.compare);
    out << emit_report(base, other ? &*other : nullptr, parse_report_format(args.format));
    return kExitOk;
}

/// Runs one subcommand. `args` excludes the program name.
/// Exit codes: 0 success, 1 usage error, 2 runtime error.
inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
    CLI::App app{"Modality robustness diagnostics and robust training", "modrobust"};
    app.require_subcommand(1);

    const auto seed_list = [](CLI::Option* opt) { return opt->delimiter(','); };

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic feature file");
    gen_cmd->add_option("--spec", gen.spec, "Synthetic spec (JSON)")->required();
    gen_cmd->add_option("--out", gen.out, "Output feature file")->required();
    gen_cmd->add_option("--seed", gen.seed, "Override the spec seed");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train one model per seed");
    train_cmd->add_option("--data", tr.data, "Feature file")->required();
    train_cmd->add_option("--out", tr.out, "Run directory")->required();
    train_cmd->add_option("--model-hidden", tr.hidden, "Hidden width")->required()->check(CLI::PositiveNumber);
    train_cmd->add_option("--robust", tr.robust, "Perturbed proportion of each batch")->check(CLI::Range(0.0, 1.0));
    train_cmd->add_option("--robust-kind", tr.robust_kind)->check(CLI::IsMember({"balanced", "missing", "noise"}));
    train_cmd->add_option("--hook", tr.hook)->check(CLI::IsMember({"pre", "post"}));
    seed_list(train_cmd->add_option("--seeds", tr.seeds, "Comma-separated seeds"));
    train_cmd->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", tr.lr)->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--opt", tr.opt)->check(CLI::IsMember({"sgd", "adam"}));

    DiagnoseArgs dg;
    auto* diag_cmd = app.add_subcommand("diagnose", "Run diagnostic sweeps over trained runs");
    diag_cmd->add_option("--runs", dg.runs, "Run directory written by train")->required();
    diag_cmd->add_option("--data", dg.data, "Feature file")->required();
    diag_cmd->add_option("--out", dg.out, "Aggregate report (CSV)")->required();
    diag_cmd->add_option("--proportions", dg.proportions)->delimiter(',')->check(CLI::Range(0.0, 1.0));
    diag_cmd->add_option("--kinds", dg.kinds)->delimiter(',')->check(CLI::IsMember({"missing", "noise"}));
    diag_cmd->add_option("--modalities", dg.modalities)
        ->delimiter(',')
        ->check(CLI::IsMember({"language", "audio", "visual"}));
    diag_cmd->add_option("--hook", dg.hook)->check(CLI::IsMember({"pre", "post"}));
    seed_list(diag_cmd->add_option("--seeds", dg.seeds, "Comma-separated seeds"));

    ReportArgs rp;
    auto* report_cmd = app.add_subcommand("report", "Render an aggregate report");
    report_cmd->add_option("--in", rp.in, "Aggregate report (CSV)")->required();
    report_cmd->add_option("--format", rp.format)->required()->check(CLI::IsMember({"csv", "markdown"}));
    report_cmd->add_option("--compare", rp.compare, "Robust-variant aggregate to compare against");

    // Unknown tokens are reported ahead of missing required options.
    for (CLI::App* sub : app.get_subcommands({})) sub->allow_extras();
    const auto unexpected = [&] {
        std::vector<std::string> extra;
        for (CLI::App* sub : app.get_subcommands({})) {
            for (const auto& token : sub->remaining()) extra.push_back(token);
        }
        return extra;
    };
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() != 0 && !unexpected().empty()) {
            err << "unexpected arguments: " << CLI::detail::join(unexpected(), " ") << "\n";
            return kExitUsage;
        }
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    if (const auto extra = unexpected(); !extra.empty()) {
        err << "unexpected arguments: " << CLI::detail::join(extra, " ") << "\n";
        return kExitUsage;
    }

    try {
        if (*gen_cmd) return gen_data(gen, out);
        if (*train_cmd) return train(tr, out);
        if (*diag_cmd) return diagnose(dg, out);
        if (*report_cmd) return report(rp, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace modrobust::cli
