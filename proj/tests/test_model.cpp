#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "modrobust/model.hpp"

using namespace modrobust;

namespace {

using Matrix = std::vector<std::vector<double>>;

ModelConfig small_config(std::uint64_t seed = 11) {
    ModelConfig c;
    c.dims = {4, 3, 2};
    c.hidden_dim = 5;
    c.init_seed = seed;
    return c;
}

Dataset small_dataset(std::size_t n_test = 6) {
    SyntheticSpec spec;
    spec.n_per_split = {8, 4, n_test};
    spec.dims = {4, 3, 2};
    spec.feature_noise_sigma = 0.5;
    spec.seed = 19;
    return generate_synthetic(spec);
}

BatchInputs inputs_of(const Dataset& ds, Split s) {
    std::vector<const FeatureRecord*> ptrs;
    for (const auto& r : ds.split(s)) ptrs.push_back(&r);
    return make_inputs(ptrs, ds.dims());
}

Matrix to_matrix(const Tensor& t) {
    Matrix m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t i = 0; i < t.rows(); ++i) {
        for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
    }
    return m;
}

// Plain-loop dense layer: tanh(x W + b) or x W + b.
Matrix dense(const Matrix& x, const Tensor& w, const Tensor& b, bool squash) {
    Matrix out(x.size(), std::vector<double>(w.cols()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
            double acc = b(0, j);
            for (std::size_t k = 0; k < w.rows(); ++k) acc += x[i][k] * w(k, j);
            out[i][j] = squash ? std::tanh(acc) : acc;
        }
    }
    return out;
}

// Reference forward pass. `zero_pre` / `zero_post` list (modality, row) pairs
// whose input or encoder output is replaced by zeros.
std::vector<double> reference_forward(const Model& model, const BatchInputs& in,
                                      const std::vector<std::pair<Modality, std::size_t>>& zero_pre,
                                      const std::vector<std::pair<Modality, std::size_t>>& zero_post) {
    const std::size_t n = in.size();
    const std::size_t layers = model.config().encoder_layers;
    Matrix fused(n);
    for (Modality m : kModalities) {
        Matrix h = to_matrix(in.features[index_of(m)]);
        for (const auto& [mm, row] : zero_pre) {
            if (mm == m) std::fill(h[row].begin(), h[row].end(), 0.0);
        }
        for (std::size_t l = 0; l < layers; ++l) {
            const std::string prefix = std::string(to_string(m)) + "." + std::to_string(l);
            h = dense(h, model.parameter(prefix + ".weight"), model.parameter(prefix + ".bias"), true);
        }
        for (const auto& [mm, row] : zero_post) {
            if (mm == m) std::fill(h[row].begin(), h[row].end(), 0.0);
        }
        for (std::size_t i = 0; i < n; ++i) fused[i].insert(fused[i].end(), h[i].begin(), h[i].end());
    }
    const Matrix hidden = dense(fused, model.parameter("fusion.0.weight"), model.parameter("fusion.0.bias"), true);
    const Matrix out = dense(hidden, model.parameter("fusion.1.weight"), model.parameter("fusion.1.bias"), false);
    std::vector<double> y;
    for (const auto& row : out) y.push_back(row[0]);
    return y;
}

std::vector<double> run(const Model& model, const BatchInputs& in, const std::vector<Intervention>& ivs = {}) {
    auto result = forward(model, in, ivs);
    const Tensor& t = result.tape.value(result.predictions);
    return {t.data().begin(), t.data().end()};
}

Intervention missing(std::size_t row, Modality m, HookPoint hook) {
    return Intervention{row, m, PerturbationKind::missing, hook, std::nullopt};
}

Intervention noise(std::size_t row, Modality m, HookPoint hook, std::uint64_t seed) {
    return Intervention{row, m, PerturbationKind::noise, hook, Stream(seed, row)};
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "row " << i;
}

}  // namespace

TEST(Model, LayoutAndCount) {
    const Model model(small_config());
    const auto& names = model.parameter_names();
    ASSERT_EQ(names.size(), 16u);
    EXPECT_EQ(names.front(), "language.0.weight");
    EXPECT_EQ(names.back(), "fusion.1.bias");
    // encoders: (4*5+5)+(5*5+5), (3*5+5)+30, (2*5+5)+30; fusion: 15*5+5, 5+1
    EXPECT_EQ(model.parameter_count(), 25u + 30 + 20 + 30 + 15 + 30 + 80 + 6);
    EXPECT_EQ(model.parameter("fusion.0.weight").rows(), 15u);
    EXPECT_THROW(model.parameter("nope"), ContractError);
}

TEST(Model, InitIsDeterministicAndBounded) {
    const Model a(small_config(3));
    const Model b(small_config(3));
    const Model c(small_config(4));
    EXPECT_EQ(a, b);
    EXPECT_NE(a.flat_parameters(), c.flat_parameters());
    const double bound = 1.0 / std::sqrt(4.0);
    for (double v : a.parameter("language.0.weight").data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Model, InvalidConfigIsContractError) {
    ModelConfig c = small_config();
    c.hidden_dim = 0;
    EXPECT_THROW(Model{c}, ContractError);
    c = small_config();
    c.encoder_layers = 0;
    EXPECT_THROW(Model{c}, ContractError);
}

TEST(Forward, MatchesReferenceImplementation) {
    const Dataset ds = small_dataset();
    const Model model(small_config());
    const BatchInputs in = inputs_of(ds, Split::test);
    expect_close(run(model, in), reference_forward(model, in, {}, {}), 1e-12);
}

TEST(Forward, EmptyInterventionsAreNoOp) {
    const Dataset ds = small_dataset();
    const Model model(small_config());
    const BatchInputs in = inputs_of(ds, Split::test);
    EXPECT_EQ(run(model, in, {}), predict(model, ds, Split::test));
}

TEST(Forward, MissingPostEqualsZeroRepresentation) {
    const Dataset ds = small_dataset();
    const Model model(small_config());
    const BatchInputs in = inputs_of(ds, Split::test);
    const std::vector<Intervention> ivs{missing(1, Modality::language, HookPoint::post_encoder),
                                        missing(4, Modality::audio, HookPoint::post_encoder)};
    expect_close(run(model, in, ivs),
                 reference_forward(model, in, {}, {{Modality::language, 1}, {Modality::audio, 4}}), 1e-12);
}

TEST(Forward, MissingPreEqualsZeroInput) {
    const Dataset ds = small_dataset();
    const Model model(small_config());
    const BatchInputs in = inputs_of(ds, Split::test);
    const std::vector<Intervention> ivs{missing(2, Modality::visual, HookPoint::pre_encoder)};
    expect_close(run(model, in, ivs), reference_forward(model, in, {{Modality::visual, 2}}, {}), 1e-12);
}

TEST(Forward, LanguageMissingLeavesOnlyBiasPathway) {
    const Dataset ds = small_dataset();
    Model model(small_config());
    // Zero the fusion rows reading audio and visual, so the only input to the
    // fusion layer is the language block.
    Tensor& w0 = model.parameter("fusion.0.weight");
    for (std::size_t r = 5; r < 15; ++r) {
        for (std::size_t c = 0; c < 5; ++c) w0(r, c) = 0.0;
    }
    const BatchInputs in = inputs_of(ds, Split::test);
    const std::vector<Intervention> ivs{missing(0, Modality::language, HookPoint::post_encoder)};
    const auto y = run(model, in, ivs);

    const Tensor& b0 = model.parameter("fusion.0.bias");
    const Tensor& w1 = model.parameter("fusion.1.weight");
    double expected = model.parameter("fusion.1.bias")(0, 0);
    for (std::size_t j = 0; j < 5; ++j) expected += std::tanh(b0(0, j)) * w1(j, 0);
    EXPECT_NEAR(y[0], expected, 1e-12);
}

TEST(Forward, PreAndPostHooksDiffer) {
    const Dataset ds = small_dataset();
    Model model(small_config());
    Tensor& b = model.parameter("language.0.bias");
    for (double& v : b.data()) v = 1.0;
    const BatchInputs in = inputs_of(ds, Split::test);
    const auto pre = run(model, in, {missing(0, Modality::language, HookPoint::pre_encoder)});
    const auto post = run(model, in, {missing(0, Modality::language, HookPoint::post_encoder)});
    EXPECT_GT(std::abs(pre[0] - post[0]), 1e-6);
    for (std::size_t i = 1; i < pre.size(); ++i) EXPECT_EQ(pre[i], post[i]);
}

TEST(Forward, InterventionsAreLocalToTheirSample) {
    const Dataset ds = small_dataset(12);
    const Model model(small_config());
    const BatchInputs in = inputs_of(ds, Split::test);
    const auto clean = run(model, in);
    for (std::size_t row = 0; row < in.size(); ++row) {
        for (Modality m : kModalities) {
            for (HookPoint hook : {HookPoint::pre_encoder, HookPoint::post_encoder}) {
                const auto y = run(model, in, {noise(row, m, hook, 5), missing((row + 1) % in.size(), m, hook)});
                for (std::size_t i = 0; i < y.size(); ++i) {
                    if (i != row && i != (row + 1) % in.size()) {
                        EXPECT_EQ(y[i], clean[i]);
                    }
                }
            }
        }
    }
}

TEST(Forward, NoiseIsDeterministic) {
    const Dataset ds = small_dataset();
    const Model model(small_config());
    const BatchInputs in = inputs_of(ds, Split::test);
    const std::vector<Intervention> ivs{noise(3, Modality::language, HookPoint::post_encoder, 9)};
    const auto a = run(model, in, ivs);
    EXPECT_EQ(a, run(model, in, ivs));
    EXPECT_NE(a[3], run(model, in)[3]);
}

TEST(Forward, InvalidInterventionsAreContractErrors) {
    const Dataset ds = small_dataset();
    const Model model(small_config());
    const BatchInputs in = inputs_of(ds, Split::test);
    EXPECT_THROW(run(model, in, {missing(6, Modality::audio, HookPoint::post_encoder)}), ContractError);
    Intervention bad = noise(0, Modality::audio, HookPoint::post_encoder, 1);
    bad.noise.reset();
    EXPECT_THROW(run(model, in, {bad}), ContractError);
}

TEST(Predict, ZeroOutputLayerGivesBias) {
    const Dataset ds = small_dataset();
    Model model(small_config());
    for (double& v : model.parameter("fusion.1.weight").data()) v = 0.0;
    model.parameter("fusion.1.bias")(0, 0) = 0.25;
    const auto y = predict(model, ds, Split::test);
    ASSERT_EQ(y.size(), ds.split(Split::test).size());
    for (double v : y) EXPECT_EQ(v, 0.25);
}

TEST(Predict, SpansMultipleInternalBatches) {
    const Dataset ds = small_dataset(kPredictBatch + 7);
    const Model model(small_config());
    const auto y = predict(model, ds, Split::test);
    ASSERT_EQ(y.size(), kPredictBatch + 7);
    expect_close(y, reference_forward(model, inputs_of(ds, Split::test), {}, {}), 1e-12);

    // split-wide indices reach into the second internal batch
    const std::vector<Intervention> ivs{missing(kPredictBatch + 2, Modality::language, HookPoint::post_encoder)};
    const auto perturbed = predict(model, ds, Split::test, ivs);
    expect_close(perturbed,
                 reference_forward(model, inputs_of(ds, Split::test), {}, {{Modality::language, kPredictBatch + 2}}),
                 1e-12);
}

TEST(Checkpoint, RoundTripIsExact) {
    const Model model(small_config(99));
    const std::string text = checkpoint_json(model);
    const Model back = model_from_checkpoint_json(text);
    EXPECT_EQ(back, model);
    EXPECT_EQ(checkpoint_json(back), text);

    const auto path = std::filesystem::temp_directory_path() / "modrobust_ckpt.json";
    save_checkpoint(model, path);
    EXPECT_EQ(load_checkpoint(path), model);
    std::filesystem::remove(path);
}

TEST(Checkpoint, WrongParameterCountIsSchemaError) {
    const std::vector<double> flat(10, 0.0);
    EXPECT_THROW(Model(small_config(), flat), SchemaError);
    EXPECT_THROW(model_from_checkpoint_json("{\"format\":\"other\"}"), SchemaError);
}

TEST(Gradients, LanguageMissingSampleSendsNothingToLanguageEncoder) {
    const Dataset ds = small_dataset();
    Model model(small_config());
    std::vector<const FeatureRecord*> one{&ds.split(Split::test)[0]};
    const BatchInputs in = make_inputs(one, ds.dims());
    const std::vector<Intervention> ivs{missing(0, Modality::language, HookPoint::post_encoder)};
    model.zero_grad();
    Tape tape;
    const Var pred = model.forward(tape, in, ivs);
    tape.backward(tape.mse(pred, tape.constant(Tensor::scalar(1.0))));
    for (std::size_t i = 0; i < model.parameter_names().size(); ++i) {
        const Tensor& p = model.parameters()[i];
        const bool language = model.parameter_names()[i].rfind("language.", 0) == 0;
        double norm = 0.0;
        if (p.has_grad()) {
            for (double g : p.grad()) norm += std::abs(g);
        }
        if (language) {
            EXPECT_EQ(norm, 0.0) << model.parameter_names()[i];
        } else if (model.parameter_names()[i] == "fusion.1.bias") {
            EXPECT_GT(norm, 0.0);
        }
    }
}

TEST(Gradients, FullModelMatchesFiniteDifferences) {
    const Dataset ds = small_dataset();
    Model model(small_config(7));
    const BatchInputs in = inputs_of(ds, Split::test);
    Tensor labels(in.size(), 1);
    for (std::size_t i = 0; i < in.size(); ++i) labels(i, 0) = ds.split(Split::test)[i].label;
    const std::vector<Intervention> ivs{noise(0, Modality::audio, HookPoint::pre_encoder, 2),
                                        missing(1, Modality::language, HookPoint::post_encoder)};
    std::vector<Tensor*> params;
    for (Tensor& p : model.parameters()) params.push_back(&p);
    const double err = gradient_check([&](Tape& t) {
        return t.mse(model.forward(t, in, ivs), t.constant(labels));
    }, params);
    EXPECT_LT(err, 1e-4);
}
