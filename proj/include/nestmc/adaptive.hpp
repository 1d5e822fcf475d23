#pragma once

#include <cstdint>

#include "nestmc/problem.hpp"
#include "nestmc/rng.hpp"

namespace nestmc {

/// Parameters of the adaptive inner-sample selector.
struct AdaptiveConfig {
    std::int64_t n0 = 32;    // base inner-sample count
    double confidence = 3.0; // C >= 1
    double r = 1.5;          // adaptivity exponent, 1 < r < 2

    void validate() const;
};

/// Result of one adaptive selection run.
struct AdaptiveOutcome {
    std::int64_t n_final = 0;    // N0*2^k with level <= k <= 2*level
    std::uint64_t pilot_work = 0; // inner draws consumed by the selection loop
    double d_hat = 0.0;           // final estimates at termination
    double sigma_hat = 0.0;
    bool estimated = false; // false when the cap fired before any estimation
    bool capped = false;    // true when the upper cap N0*4^level was returned
};

/// Target sample count for a known delta = d/sigma:
///   N0 * 4^level * max(2^-level, min(1, (C^-1 * sqrt(N0) * 2^level * delta)^-r)).
/// delta = +infinity is allowed and means sigma = 0.
double target_samples(int level, double delta, const AdaptiveConfig& cfg);

/// Iterative doubling selector. Starts at N0*2^level; each iteration either
/// returns the cap N0*4^level (when doubling would reach it) or draws N fresh
/// pilot samples, estimates d and sigma, and stops once
///   N >= N0*4^level * (C^-1 * sqrt(N0) * 2^level * d_hat/sigma_hat)^-r.
/// Pilot draws are discarded; callers must use fresh samples for the payoff
/// estimate. sigma_hat = 0 terminates immediately (conditionally deterministic
/// inner law); d_hat = 0 with sigma_hat > 0 keeps doubling toward the cap.
AdaptiveOutcome determine_inner_samples(int level, const OuterScenario& scenario,
                                        const AdaptiveConfig& cfg,
                                        const NestedProblem& problem, RngStream& rng);

} // namespace nestmc
