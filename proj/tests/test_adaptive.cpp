#include <doctest.h>

#include <cmath>
#include <limits>

#include "nestmc/adaptive.hpp"
#include "nestmc/model_problem.hpp"
#include "support.hpp"

using namespace nestmc;
using nestmc::testing::CountingProblem;
using nestmc::testing::GaussianInnerProblem;

namespace {
const AdaptiveConfig kDefault{}; // N0 = 32, C = 3, r = 1.5
constexpr double kInf = std::numeric_limits<double>::infinity();
} // namespace

TEST_CASE("target_samples hits the caps at the delta limits") {
    for (int level : {0, 1, 3, 6}) {
        const double cap = 32.0 * std::pow(4.0, level);
        const double floor_ = 32.0 * std::pow(2.0, level);
        CHECK(target_samples(level, 0.0, kDefault) == cap);
        CHECK(target_samples(level, kInf, kDefault) == floor_);
        CHECK(target_samples(level, 1e-12, kDefault) == cap);
        CHECK(target_samples(level, 1e12, kDefault) == floor_);
    }
}

TEST_CASE("target_samples matches an independent high-precision evaluation") {
    // level=4, N0=32, C=3, r=1.5, delta=0.1: nu = sqrt(32)*16*0.1/3,
    // target = 8192 * nu^-1.5
    const double value = target_samples(4, 0.1, kDefault);
    CHECK(value == doctest::Approx(1563.25334983831339).epsilon(1e-12));
}

TEST_CASE("target_samples monotonicity in delta and confidence") {
    RngStream rng(77);
    for (int trial = 0; trial < 2000; ++trial) {
        const int level = static_cast<int>(rng.next_u64() % 8);
        AdaptiveConfig cfg;
        cfg.n0 = 2 << (rng.next_u64() % 5);
        cfg.confidence = 1.0 + 4.0 * rng.uniform();
        cfg.r = 1.05 + 0.9 * rng.uniform();
        const double d1 = 10.0 * rng.uniform();
        const double d2 = d1 + 10.0 * rng.uniform();
        CHECK(target_samples(level, d1, cfg) >= target_samples(level, d2, cfg));

        AdaptiveConfig wider = cfg;
        wider.confidence = cfg.confidence + 2.0 * rng.uniform();
        const double delta = 10.0 * rng.uniform();
        CHECK(target_samples(level, delta, wider) >=
              target_samples(level, delta, cfg));

        const double t = target_samples(level, delta, cfg);
        CHECK(t >= static_cast<double>(cfg.n0) * std::pow(2.0, level));
        CHECK(t <= static_cast<double>(cfg.n0) * std::pow(4.0, level));
    }
}

TEST_CASE("level 0 and 1: the cap fires before any estimation") {
    ModelProblem problem({0.02, 0.080477723746297747});
    RngStream rng(1);
    const OuterScenario s = problem.sample_outer(rng);

    const AdaptiveOutcome l0 = determine_inner_samples(0, s, kDefault, problem, rng);
    CHECK(l0.n_final == 32);
    CHECK(l0.pilot_work == 0);
    CHECK(l0.capped);
    CHECK_FALSE(l0.estimated);

    const AdaptiveOutcome l1 = determine_inner_samples(1, s, kDefault, problem, rng);
    CHECK(l1.n_final == 128);
    CHECK(l1.pilot_work == 0);
    CHECK(l1.capped);
}

TEST_CASE("large delta terminates at the first test with high probability") {
    GaussianInnerProblem problem(10.0, 0.0, 1.0); // delta = 10
    RngStream rng(2);
    const int runs = 1000, level = 4;
    int first_exit = 0;
    for (int i = 0; i < runs; ++i) {
        RngStream stream = rng.derive(i);
        const OuterScenario s = problem.sample_outer(stream);
        const AdaptiveOutcome out =
            determine_inner_samples(level, s, kDefault, problem, stream);
        first_exit += (out.n_final == 32 * 16 && out.pilot_work == 32 * 16);
    }
    CHECK(first_exit >= 990);
}

TEST_CASE("d = 0 drives the count to the upper cap") {
    GaussianInnerProblem problem(0.0, 0.0, 1.0); // symmetric inner law
    RngStream rng(3);
    const int runs = 200, level = 6;
    int capped = 0;
    for (int i = 0; i < runs; ++i) {
        RngStream stream = rng.derive(i);
        const OuterScenario s = problem.sample_outer(stream);
        const AdaptiveOutcome out =
            determine_inner_samples(level, s, kDefault, problem, stream);
        capped += out.capped;
    }
    CHECK(capped >= 190); // >= 95%
}

TEST_CASE("sigma_hat = 0 stops the loop at the current count") {
    nestmc::testing::ConstantInnerProblem problem(0.5); // exactly representable
    RngStream rng(4);
    const OuterScenario s = problem.sample_outer(rng);
    const AdaptiveOutcome out = determine_inner_samples(5, s, kDefault, problem, rng);
    CHECK(out.n_final == 32 * 32); // N0 * 2^5, the first estimating iteration
    CHECK(out.pilot_work == 32 * 32);
    CHECK(out.sigma_hat == 0.0);
    CHECK(out.estimated);
    CHECK_FALSE(out.capped);
}

TEST_CASE("pilot work is counted exactly, never reused, and below 2 n_final") {
    ModelProblem base({0.02, 0.080477723746297747});
    CountingProblem counted(base);
    RngStream rng(5);
    for (int i = 0; i < 300; ++i) {
        RngStream stream = rng.derive(i);
        const OuterScenario s = counted.sample_outer(stream);
        const int level = static_cast<int>(stream.next_u64() % 7);
        counted.reset();
        const AdaptiveOutcome out =
            determine_inner_samples(level, s, kDefault, counted, stream);
        CHECK(out.pilot_work == counted.count());
        CHECK(out.pilot_work < 2 * static_cast<std::uint64_t>(out.n_final));
    }
}

TEST_CASE("outcome invariants over random scenarios and levels") {
    ModelProblem problem({0.02, 0.080477723746297747});
    RngStream rng(6);
    int estimate_exits = 0;
    int band_holds = 0;
    for (int i = 0; i < 2000; ++i) {
        RngStream stream = rng.derive(i);
        const OuterScenario s = problem.sample_outer(stream);
        const int level = static_cast<int>(stream.next_u64() % 8);
        const AdaptiveOutcome out =
            determine_inner_samples(level, s, kDefault, problem, stream);

        const std::int64_t lo = 32LL << level;
        const std::int64_t hi = 32LL << (2 * level);
        CHECK(out.n_final >= lo);
        CHECK(out.n_final <= hi);
        const std::int64_t k = out.n_final / 32;
        CHECK((k & (k - 1)) == 0); // power of two multiple of N0
        CHECK(out.pilot_work < 2 * static_cast<std::uint64_t>(out.n_final));

        if (!out.capped && out.estimated) {
            ++estimate_exits;
            const double delta_hat =
                out.sigma_hat > 0.0 ? out.d_hat / out.sigma_hat : kInf;
            const double target = target_samples(level, delta_hat, kDefault);
            // the termination test guarantees the lower bound
            CHECK(static_cast<double>(out.n_final) >= target - 1e-9);
            // the two-sided band of the returned count holds up to
            // re-estimation noise between iterations
            band_holds += static_cast<double>(out.n_final) < 2.0 * target;
        }
    }
    CHECK(estimate_exits > 200);
    CHECK(band_holds > static_cast<int>(0.90 * estimate_exits));
}
