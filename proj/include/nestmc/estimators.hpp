#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>

#include "nestmc/errors.hpp"
#include "nestmc/problem.hpp"
#include "nestmc/rng.hpp"

namespace nestmc {

enum class Payoff {
    heaviside_step, // indicator of a nonnegative conditional loss
    positive_part,  // max(x, 0), used for CVaR
};

/// Heaviside step with the convention H(0) = 1.
inline double heaviside(double x) {
    assert(std::isfinite(x));
    return x >= 0.0 ? 1.0 : 0.0;
}

inline double positive_part(double x) {
    assert(std::isfinite(x));
    return x > 0.0 ? x : 0.0;
}

inline double apply_payoff(Payoff payoff, double x) {
    return payoff == Payoff::heaviside_step ? heaviside(x) : positive_part(x);
}

/// Sample mean and biased variance (divisor N) of an inner Monte Carlo batch.
struct InnerEstimate {
    double mean = 0.0;
    double var_biased = 0.0;
    std::int64_t n = 0;
};

/// Single-pass accumulator behind every inner estimate: sum and sum of
/// squares, O(1) memory per scenario.
class InnerAccumulator {
public:
    void add(double x) {
        sum_ += x;
        sum_sq_ += x * x;
        ++n_;
    }

    void add(std::span<const double> xs) {
        for (double x : xs)
            add(x);
    }

    std::int64_t count() const { return n_; }

    InnerEstimate estimate() const {
        if (n_ == 0)
            fail(ErrorCode::EmptySampleSet, "inner estimate over empty sample set");
        const double mean = sum_ / static_cast<double>(n_);
        double var = sum_sq_ / static_cast<double>(n_) - mean * mean;
        if (var < 0.0)
            var = 0.0; // round-off on (near-)constant samples
        return InnerEstimate{mean, var, n_};
    }

private:
    double sum_ = 0.0;
    double sum_sq_ = 0.0;
    std::int64_t n_ = 0;
};

inline InnerEstimate inner_estimate(std::span<const double> samples) {
    InnerAccumulator acc;
    acc.add(samples);
    return acc.estimate();
}

/// One coupled fine/coarse draw of a level difference.
struct LevelDiffSample {
    double fine = 0.0;
    double coarse = 0.0;
    double diff = 0.0;             // fine - coarse, exactly
    std::uint64_t inner_work = 0;  // inner payoff draws consumed
};

/// Fine and coarse inner estimates from disjoint fresh draws, conditional on
/// the same scenario. n_coarse = 0 encodes the base level, where the coarse
/// term is the constant 0.
LevelDiffSample level_diff_independent(const OuterScenario& scenario,
                                       std::int64_t n_fine, std::int64_t n_coarse,
                                       Payoff payoff, const NestedProblem& problem,
                                       RngStream& rng);

/// Antithetic coupling: max(n_fine, n_coarse) shared draws, split into blocks
/// of each granularity in natural sample order. Requires one count to divide
/// the other (both are N0*2^k in every sampling mode).
LevelDiffSample level_diff_antithetic(const OuterScenario& scenario,
                                      std::int64_t n_fine, std::int64_t n_coarse,
                                      Payoff payoff, const NestedProblem& problem,
                                      RngStream& rng);

/// Plain nested Monte Carlo: M outer scenarios, N inner draws each. The
/// brute-force oracle for the multilevel estimators.
struct NestedMcResult {
    double estimate = 0.0;
    double stderr_ = 0.0;
    std::uint64_t inner_work = 0;
};

NestedMcResult nested_mc_estimate(std::int64_t m_outer, std::int64_t n_inner,
                                  Payoff payoff, const NestedProblem& problem,
                                  RngStream& rng, int threads = 0);

} // namespace nestmc
