#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "nestmc/mlmc.hpp"
#include "nestmc/problem.hpp"

namespace nestmc {

struct RootFindConfig {
    double eta_target = 0.025;
    double eps = 1e-3;     // final half-bracket tolerance on the loss level
    double lambda0 = 0.0;  // initial RMS budget per probability estimate;
                           // 0 picks eta_target / 4
    double l0 = 0.0;       // initial guess
    double h0 = 0.1;       // initial step, h0 >= eps/2
    std::uint64_t work_budget = UINT64_C(4'000'000'000'000);

    void validate() const;
};

struct VarTracePoint {
    double l_hat = 0.0;
    double eta_hat = 0.0;
    double lambda = 0.0;
    double h = 0.0;
};

struct VarResult {
    double l_eta_hat = 0.0;
    int iterations = 0;
    std::uint64_t total_work = 0;
    std::vector<VarTracePoint> trace;
};

/// A probability estimate P(L > threshold) with RMS error <= rms, plus the
/// inner-draw work it consumed.
struct ProbeResult {
    double estimate = 0.0;
    std::uint64_t work = 0;
};

using ProbEstimator = std::function<ProbeResult(double threshold, double rms)>;

/// Stochastic root finding for the loss level with P(L > L_eta) = eta:
/// step by h, flip and halve h when the estimate crosses the target, halve
/// the probe tolerance when the estimate is within 3 lambda of the target,
/// stop once 2|h| <= eps.
VarResult var_root_find(const RootFindConfig& cfg, const ProbEstimator& estimator);

/// Probability estimator backed by the multilevel driver: each probe runs
/// estimate() on the problem shifted by the threshold, Heaviside payoff, with
/// tol = rms and a fresh stream.
ProbEstimator make_mlmc_prob_estimator(MlmcConfig cfg, const NestedProblem& problem,
                                       const RngStream& rng);

/// CVaR via the max-reformulation evaluated at x = l_eta_hat:
///   x + (1/eta) * E[max(E[X|Y] - x, 0)]
/// with the inner expectation estimated by MLMC at RMS tol*eta (so the
/// quotient carries RMS tol). `problem` is the threshold-free loss problem.
struct CvarResult {
    double value = 0.0;
    std::uint64_t total_work = 0;
    MlmcResult mlmc;
};

CvarResult cvar_estimate(double l_eta_hat, double eta, double tol, MlmcConfig cfg,
                         const NestedProblem& problem, RngStream& rng);

} // namespace nestmc
