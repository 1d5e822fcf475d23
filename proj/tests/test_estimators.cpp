#include <doctest.h>

#include <cmath>
#include <vector>

#include "nestmc/estimators.hpp"
#include "nestmc/model_problem.hpp"
#include "support.hpp"

using namespace nestmc;
using nestmc::testing::ConstantInnerProblem;
using nestmc::testing::CountingProblem;

TEST_CASE("heaviside convention H(0) = 1") {
    CHECK(heaviside(0.0) == 1.0);
    CHECK(heaviside(-0.0) == 1.0);
    CHECK(heaviside(-0.5) == 0.0);
    CHECK(heaviside(2.3) == 1.0);
    CHECK(positive_part(-1.5) == 0.0);
    CHECK(positive_part(2.5) == 2.5);
    CHECK(positive_part(0.0) == 0.0);
}

TEST_CASE("inner estimate: mean and biased variance with divisor N") {
    const std::vector<double> constant{1.0, 1.0, 1.0};
    InnerEstimate e = inner_estimate(constant);
    CHECK(e.mean == 1.0);
    CHECK(e.var_biased == 0.0);
    CHECK(e.n == 3);

    const std::vector<double> two{0.0, 2.0};
    e = inner_estimate(two);
    CHECK(e.mean == doctest::Approx(1.0));
    CHECK(e.var_biased == doctest::Approx(1.0));
    CHECK(e.n == 2);

    const std::vector<double> four{-1.0, 0.0, 1.0, 2.0};
    e = inner_estimate(four);
    CHECK(e.mean == doctest::Approx(0.5));
    CHECK(e.var_biased == doctest::Approx(1.25)); // divisor N = 4
    CHECK(e.n == 4);

    CHECK_THROWS_AS((void)inner_estimate(std::vector<double>{}), Error);
    try {
        (void)inner_estimate(std::vector<double>{});
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::EmptySampleSet);
    }
}

TEST_CASE("inner estimate agrees with a two-pass oracle") {
    RngStream rng(5);
    std::vector<double> xs(1000);
    for (double& x : xs)
        x = rng.normal() * 3.0 + 1.0;
    const InnerEstimate e = inner_estimate(xs);
    double mean = 0.0;
    for (double x : xs)
        mean += x;
    mean /= xs.size();
    double var = 0.0;
    for (double x : xs)
        var += (x - mean) * (x - mean);
    var /= xs.size();
    CHECK(e.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(e.var_biased == doctest::Approx(var).epsilon(1e-9));
}

TEST_CASE("level 0 couplings: coarse term is the constant 0") {
    ModelProblem problem({0.02, 0.080477723746297747});
    RngStream rng(9);
    const OuterScenario s = problem.sample_outer(rng);

    const LevelDiffSample ind = level_diff_independent(
        s, 32, 0, Payoff::heaviside_step, problem, rng);
    CHECK(ind.coarse == 0.0);
    CHECK(ind.diff == ind.fine);
    CHECK(ind.inner_work == 32);

    const LevelDiffSample anti = level_diff_antithetic(
        s, 32, 0, Payoff::heaviside_step, problem, rng);
    CHECK(anti.coarse == 0.0);
    CHECK(anti.diff == anti.fine);
    CHECK(anti.inner_work == 32);
}

TEST_CASE("degenerate constant inner law: zero difference, payoff 1") {
    ConstantInnerProblem problem(0.7);
    RngStream rng(1);
    const OuterScenario s = problem.sample_outer(rng);
    for (auto [nf, nc] : {std::pair<std::int64_t, std::int64_t>{64, 32},
                          {32, 64},
                          {128, 128}}) {
        const LevelDiffSample ind = level_diff_independent(
            s, nf, nc, Payoff::heaviside_step, problem, rng);
        CHECK(ind.fine == 1.0);
        CHECK(ind.coarse == 1.0);
        CHECK(ind.diff == 0.0);
        CHECK(ind.inner_work == static_cast<std::uint64_t>(nf + nc));

        const LevelDiffSample anti = level_diff_antithetic(
            s, nf, nc, Payoff::heaviside_step, problem, rng);
        CHECK(anti.diff == 0.0);
        CHECK(anti.inner_work == static_cast<std::uint64_t>(std::max(nf, nc)));
    }
}

TEST_CASE("antithetic coupling rejects incompatible block sizes") {
    ConstantInnerProblem problem(1.0);
    RngStream rng(2);
    const OuterScenario s = problem.sample_outer(rng);
    CHECK_THROWS_AS((void)level_diff_antithetic(s, 48, 32, Payoff::heaviside_step,
                                                problem, rng),
                    Error);
}

TEST_CASE("antithetic sign-coherence: same-sign block means give zero diff") {
    // conditional mean 5 with sd 0.05: all block means of any granularity are
    // positive with overwhelming probability at these sizes
    nestmc::testing::GaussianInnerProblem positive(5.0, 0.0, 0.05);
    nestmc::testing::GaussianInnerProblem negative(-5.0, 0.0, 0.05);
    RngStream rng(3);
    for (int rep = 0; rep < 200; ++rep) {
        const OuterScenario s = positive.sample_outer(rng);
        for (Payoff payoff : {Payoff::heaviside_step, Payoff::positive_part}) {
            const LevelDiffSample up =
                level_diff_antithetic(s, 64, 32, payoff, positive, rng);
            CHECK(up.diff == 0.0);
            const LevelDiffSample down =
                level_diff_antithetic(s, 32, 64, payoff, negative, rng);
            CHECK(down.diff == 0.0);
        }
    }
}

TEST_CASE("antithetic: equal counts give identical fine and coarse") {
    ModelProblem problem({0.02, 0.080477723746297747});
    RngStream rng(4);
    for (int rep = 0; rep < 100; ++rep) {
        const OuterScenario s = problem.sample_outer(rng);
        const LevelDiffSample d =
            level_diff_antithetic(s, 64, 64, Payoff::heaviside_step, problem, rng);
        CHECK(d.fine == d.coarse);
        CHECK(d.diff == 0.0);
        CHECK(d.inner_work == 64);
    }
}

TEST_CASE("heaviside couplings produce block-fraction values") {
    ModelProblem problem({0.02, 0.0});
    RngStream rng(12);
    for (int rep = 0; rep < 200; ++rep) {
        const OuterScenario s = problem.sample_outer(rng);
        const LevelDiffSample ind = level_diff_independent(
            s, 64, 32, Payoff::heaviside_step, problem, rng);
        CHECK((ind.fine == 0.0 || ind.fine == 1.0));
        CHECK((ind.coarse == 0.0 || ind.coarse == 1.0));

        const LevelDiffSample anti = level_diff_antithetic(
            s, 32, 128, Payoff::heaviside_step, problem, rng);
        // coarse is one block, fine averages 4 blocks of 32
        CHECK((anti.coarse == 0.0 || anti.coarse == 1.0));
        const double scaled = anti.fine * 4.0;
        CHECK(scaled == doctest::Approx(std::round(scaled)).epsilon(1e-12));
    }
}

TEST_CASE("antithetic blocks stay aligned when blocks exceed the batch size") {
    // non-power-of-two base count: block edges fall between batch boundaries
    nestmc::testing::GaussianInnerProblem problem(0.02, 0.3, 1.0);
    RngStream rng(7);
    const OuterScenario s = problem.sample_outer(rng);
    const std::int64_t nf = 1536, nc = 3072; // blocks of 1536 inside 3072 draws

    RngStream coupled = rng.derive(99);
    const LevelDiffSample d = level_diff_antithetic(
        s, nf, nc, Payoff::heaviside_step, problem, coupled);

    // replay the identical draw sequence and form the blocks directly
    RngStream replay = rng.derive(99);
    std::vector<double> xs(static_cast<std::size_t>(nc));
    problem.sample_inner_batch(s, xs, replay);
    double b1 = 0.0, b2 = 0.0;
    for (std::int64_t i = 0; i < nf; ++i)
        b1 += xs[static_cast<std::size_t>(i)];
    for (std::int64_t i = nf; i < nc; ++i)
        b2 += xs[static_cast<std::size_t>(i)];
    const double fine_expect =
        0.5 * (heaviside(b1 / nf) + heaviside(b2 / nf));
    double all = 0.0;
    for (double x : xs)
        all += x;
    const double coarse_expect = heaviside(all / nc);
    CHECK(d.fine == fine_expect);
    CHECK(d.coarse == coarse_expect);
    CHECK(d.inner_work == 3072);
}

TEST_CASE("work accounting verified by a counting wrapper") {
    ModelProblem base({0.02, 0.080477723746297747});
    CountingProblem counted(base);
    RngStream rng(6);
    const OuterScenario s = counted.sample_outer(rng);

    counted.reset();
    const LevelDiffSample ind =
        level_diff_independent(s, 96, 48, Payoff::heaviside_step, counted, rng);
    CHECK(counted.count() == 96 + 48);
    CHECK(ind.inner_work == counted.count());

    counted.reset();
    const LevelDiffSample anti =
        level_diff_antithetic(s, 48, 96, Payoff::heaviside_step, counted, rng);
    CHECK(counted.count() == 96);
    CHECK(anti.inner_work == counted.count());

    counted.reset();
    const NestedMcResult mc =
        nested_mc_estimate(50, 20, Payoff::heaviside_step, counted, rng, 1);
    CHECK(counted.count() == 1000);
    CHECK(mc.inner_work == 1000);
}

TEST_CASE("nested MC on deterministic inner laws") {
    ConstantInnerProblem neg(-1.0);
    ConstantInnerProblem pos(1.0);
    RngStream rng(8);
    const NestedMcResult down =
        nested_mc_estimate(100, 10, Payoff::heaviside_step, neg, rng, 1);
    CHECK(down.estimate == 0.0);
    CHECK(down.stderr_ == 0.0);
    const NestedMcResult up =
        nested_mc_estimate(100, 10, Payoff::heaviside_step, pos, rng, 1);
    CHECK(up.estimate == 1.0);
    CHECK(up.stderr_ == 0.0);
}

TEST_CASE("distributional identity: fine at (l, N) matches coarse at (l+1, N)") {
    ModelProblem problem({0.02, 0.080477723746297747});
    RngStream rng(14);
    const std::int64_t n = 128, m = 4000;
    std::vector<double> fines, coarses;
    for (int i = 0; i < m; ++i) {
        RngStream sf = rng.derive(1, i);
        const OuterScenario s1 = problem.sample_outer(sf);
        fines.push_back(level_diff_independent(s1, n, n / 2,
                                               Payoff::heaviside_step, problem, sf)
                            .fine);
        RngStream sc = rng.derive(2, i);
        const OuterScenario s2 = problem.sample_outer(sc);
        coarses.push_back(level_diff_independent(s2, 2 * n, n,
                                                 Payoff::heaviside_step, problem, sc)
                              .coarse);
    }
    const double gap = nestmc::testing::mean_of(fines) -
                       nestmc::testing::mean_of(coarses);
    const double se = std::sqrt(nestmc::testing::var_of(fines) / m +
                                nestmc::testing::var_of(coarses) / m);
    CHECK(std::abs(gap) < 3.0 * se);
}
