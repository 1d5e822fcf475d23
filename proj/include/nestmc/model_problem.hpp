#pragma once

#include "nestmc/problem.hpp"

namespace nestmc {

/// Parameters of the analytic test case: a delta-hedged single-option
/// portfolio with quadratic payoff over a short risk horizon tau. l_eta = 0
/// gives the threshold-free loss L = tau*(Y^2 - 1) used by the risk measures.
struct ModelParams {
    double tau = 0.02;
    double l_eta = 0.080477723746297747; // loss threshold, eta = 0.025

    void validate() const;
};

/// The model problem: Y standard normal and, given Y = y,
///   X = tau*(y^2 - Yt^2) + 2*sqrt(tau*(1-tau))*y*Z - l_eta
/// with fresh standard normals Yt, Z per draw (shared inner samples plus an
/// antithetic control variate in the underlying portfolio identity). Exact:
///   E[X|Y=y]   = tau*(y^2 - 1) - l_eta
///   Var[X|Y=y] = 2*tau^2 + 4*tau*(1-tau)*y^2
class ModelProblem final : public NestedProblem {
public:
    explicit ModelProblem(ModelParams params);

    OuterScenario sample_outer(RngStream& rng) const override;
    double sample_inner(const OuterScenario& scenario, RngStream& rng) const override;
    void sample_inner_batch(const OuterScenario& scenario, std::span<double> out,
                            RngStream& rng) const override;

    OuterScenario scenario_at(double y) const;
    double conditional_mean(double y) const;
    double conditional_sd(double y) const;

    const ModelParams& params() const { return params_; }

private:
    ModelParams params_;
    double inner_scale_; // 2*sqrt(tau*(1-tau))
};

/// eta = P(E[X|Y] >= 0) = 2*Phi(-sqrt(1 + l_eta/tau)). With `permissive`,
/// l_eta < -tau returns 1 (full support); strict mode rejects it.
double analytic_eta(const ModelParams& params, bool permissive = false);

/// Loss level with P(E[X|Y] >= 0) = eta: l_eta = tau*((Phi^-1(eta/2))^2 - 1).
double l_eta_from_eta(double eta, double tau);

/// CDF of E[X|Y]: 1 - 2*Phi(-sqrt(1 + (x + l_eta)/tau)), 0 below the support
/// edge x = -tau - l_eta.
double analytic_cdf(double x, const ModelParams& params);

/// CVaR of the threshold-free loss L = tau*(Y^2-1) above l_eta. With
/// a = sqrt(1 + l_eta/tau):
///   E[L | L > l_eta] = tau * a * pdf(a) / (1 - Phi(a)).
double analytic_cvar(const ModelParams& params);

} // namespace nestmc
