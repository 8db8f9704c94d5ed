#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "modrobust/perturb.hpp"

using namespace modrobust;

namespace {

std::vector<std::string> make_ids(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
    return ids;
}

}  // namespace

TEST(ApplyMissing, NullsEveryElement) {
    const std::vector<double> x{1.5, -2.0};
    EXPECT_EQ(apply_missing(x), (std::vector<double>{0.0, 0.0}));
    EXPECT_TRUE(apply_missing(std::vector<double>{}).empty());
    const std::vector<double> zeros{0, 0, 0};
    EXPECT_EQ(apply_missing(zeros), zeros);
    EXPECT_EQ(apply_missing(apply_missing(x)), apply_missing(x));
}

TEST(ApplyNoise, DeterministicPerSeedAndId) {
    const std::vector<double> x{0.3, -1.0, 2.5, 4.0};
    Stream a(17, id_key("clip-1"));
    Stream b(17, id_key("clip-1"));
    EXPECT_EQ(apply_noise(x, a), apply_noise(x, b));
    Stream c(17, id_key("clip-2"));
    Stream d(17, id_key("clip-1"));
    EXPECT_NE(apply_noise(x, c), apply_noise(x, d));
}

TEST(ApplyNoise, OffsetReproducesReferenceStream) {
    const std::vector<double> zeros(64, 0.0);
    Stream s(3, id_key("x"));
    const auto out = apply_noise(zeros, s);
    Stream ref(3, id_key("x"));
    for (double v : out) EXPECT_EQ(v, ref.normal());

    const std::vector<double> x{1.25, -0.5, 3.0};
    Stream s2(3, id_key("y"));
    const auto noisy = apply_noise(x, s2);
    Stream ref2(3, id_key("y"));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(noisy[i] - x[i], ref2.normal(), 1e-15);
}

TEST(ApplyNoise, StandardNormalMoments) {
    const std::vector<double> zeros(1'000'000, 0.0);
    Stream s(2024, 1);
    const auto z = apply_noise(zeros, s);
    const double n = static_cast<double>(z.size());
    const double mean = std::accumulate(z.begin(), z.end(), 0.0) / n;
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean);
    var /= n - 1.0;
    EXPECT_GE(mean, -0.01);
    EXPECT_LE(mean, 0.01);
    EXPECT_GE(var, 0.99);
    EXPECT_LE(var, 1.01);
}

TEST(SampleMask, CountIsFloorOfProportion) {
    Stream s(1, 0);
    EXPECT_EQ(sample_mask(make_ids(10), 0.3, s).size(), 3u);
    EXPECT_EQ(sample_mask(make_ids(7), 0.3, s).size(), 2u);
    EXPECT_TRUE(sample_mask(make_ids(10), 0.0, s).empty());
    EXPECT_EQ(sample_mask(make_ids(32), 0.3, s).size(), 9u);
    EXPECT_EQ(sample_mask(make_ids(100), 0.29, s).size(), 29u);
    EXPECT_THROW(sample_mask(make_ids(3), 1.5, s), ContractError);
}

TEST(SampleMask, FullProportionSelectsEverything) {
    Stream s(1, 0);
    const auto ids = make_ids(10);
    auto all = sample_mask(ids, 1.0, s);
    std::sort(all.begin(), all.end());
    auto sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(all, sorted);
}

TEST(SampleMask, DistinctAndDeterministic) {
    const auto ids = make_ids(50);
    Stream a(8, 0), b(8, 0);
    const auto ma = sample_mask(ids, 0.4, a);
    EXPECT_EQ(ma, sample_mask(ids, 0.4, b));
    EXPECT_EQ(std::set<std::string>(ma.begin(), ma.end()).size(), ma.size());
}

// Chi-square goodness of fit over the C(6,3) = 20 subsets; critical value of
// chi^2 with 19 degrees of freedom at alpha = 0.001 is 43.820.
TEST(SampleMask, UniformOverSubsets) {
    const std::vector<int> ids{0, 1, 2, 3, 4, 5};
    std::map<std::vector<int>, int> counts;
    const int draws = 10000;
    for (int d = 0; d < draws; ++d) {
        Stream s(static_cast<std::uint64_t>(d), kMaskStreamKey);
        auto subset = sample_mask(ids, 0.5, s);
        std::sort(subset.begin(), subset.end());
        ++counts[subset];
    }
    ASSERT_EQ(counts.size(), 20u);
    const double expected = draws / 20.0;
    double chi2 = 0.0;
    for (const auto& [subset, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
    EXPECT_LT(chi2, 43.820);
}

TEST(BalancedSplit, OddExtraGoesToMissing) {
    auto [m4, n4] = balanced_split(std::vector<int>{1, 2, 3, 4});
    EXPECT_EQ(m4, (std::vector<int>{1, 2}));
    EXPECT_EQ(n4, (std::vector<int>{3, 4}));
    auto [m5, n5] = balanced_split(std::vector<int>{1, 2, 3, 4, 5});
    EXPECT_EQ(m5.size(), 3u);
    EXPECT_EQ(n5.size(), 2u);
    auto [m0, n0] = balanced_split(std::vector<int>{});
    EXPECT_TRUE(m0.empty());
    EXPECT_TRUE(n0.empty());
}

TEST(Plan, SelectionIsPureFunctionOfPlanAndIds) {
    const auto ids = make_ids(32);
    const PerturbationPlan plan{Modality::language, PlanKind::balanced, 0.3, HookPoint::post_encoder, 77};
    const Selection a = select(plan, ids);
    const Selection b = select(plan, ids);
    EXPECT_EQ(a.missing, b.missing);
    EXPECT_EQ(a.noise, b.noise);
    EXPECT_EQ(a.missing.size(), 5u);
    EXPECT_EQ(a.noise.size(), 4u);
    std::set<std::size_t> all(a.missing.begin(), a.missing.end());
    all.insert(a.noise.begin(), a.noise.end());
    EXPECT_EQ(all.size(), 9u);
}

TEST(Plan, InterventionsCarryKindsAndStreams) {
    const auto ids = make_ids(20);
    PerturbationPlan plan{Modality::audio, PlanKind::noise, 0.5, HookPoint::pre_encoder, 3};
    const auto ivs = plan_interventions(plan, ids);
    ASSERT_EQ(ivs.size(), 10u);
    for (const auto& iv : ivs) {
        EXPECT_EQ(iv.kind, PerturbationKind::noise);
        EXPECT_EQ(iv.modality, Modality::audio);
        EXPECT_EQ(iv.hook, HookPoint::pre_encoder);
        ASSERT_TRUE(iv.noise.has_value());
        Stream copy = *iv.noise;
        Stream expected(3, id_key(ids[iv.sample]));
        EXPECT_EQ(copy.next(), expected.next());
    }
    plan.kind = PlanKind::missing;
    for (const auto& iv : plan_interventions(plan, ids)) EXPECT_FALSE(iv.noise.has_value());
    plan.proportion = -0.1;
    EXPECT_THROW(plan_interventions(plan, ids), ContractError);
}
