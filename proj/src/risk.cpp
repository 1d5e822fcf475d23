#include "nestmc/risk.hpp"

#include <cmath>
#include <memory>

#include "nestmc/errors.hpp"

namespace nestmc {

namespace {

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

} // namespace

void RootFindConfig::validate() const {
    if (!(eta_target > 0.0 && eta_target < 1.0))
        fail(ErrorCode::InvalidConfig, "eta_target must lie in (0, 1)");
    if (!(eps > 0.0))
        fail(ErrorCode::InvalidConfig, "eps must be positive");
    if (lambda0 < 0.0)
        fail(ErrorCode::InvalidConfig, "lambda0 must be positive (or 0 for auto)");
    if (!(h0 >= eps / 2.0))
        fail(ErrorCode::InvalidConfig, "h0 must be at least eps/2");
}

VarResult var_root_find(const RootFindConfig& cfg, const ProbEstimator& estimator) {
    cfg.validate();
    const double eta = cfg.eta_target;
    double lambda = cfg.lambda0 > 0.0 ? cfg.lambda0 : eta / 4.0;

    VarResult out;
    out.l_eta_hat = cfg.l0;

    auto probe = [&](double threshold, double rms) {
        const ProbeResult p = estimator(threshold, rms);
        out.total_work += p.work;
        if (out.total_work > cfg.work_budget)
            fail(ErrorCode::BudgetExceeded, "root finding passed its work budget");
        return p.estimate;
    };

    double eta_hat = probe(out.l_eta_hat, lambda);
    double h = cfg.h0 * sign_of(eta_hat - eta);
    out.trace.push_back({out.l_eta_hat, eta_hat, lambda, h});

    while (2.0 * std::abs(h) > cfg.eps) {
        out.l_eta_hat += h;
        eta_hat = probe(out.l_eta_hat, lambda);
        if (h * sign_of(eta_hat - eta) < 0.0)
            h = -h / 2.0;
        if (std::abs(eta_hat - eta) < 3.0 * lambda)
            lambda /= 2.0;
        ++out.iterations;
        out.trace.push_back({out.l_eta_hat, eta_hat, lambda, h});
    }
    return out;
}

ProbEstimator make_mlmc_prob_estimator(MlmcConfig cfg, const NestedProblem& problem,
                                       const RngStream& rng) {
    cfg.payoff = Payoff::heaviside_step;
    auto counter = std::make_shared<std::uint64_t>(0);
    return [cfg, &problem, rng, counter](double threshold, double rms) {
        MlmcConfig probe_cfg = cfg;
        probe_cfg.tol = rms;
        const ShiftedProblem shifted(problem, threshold);
        RngStream probe_rng = rng.derive(0x70726f62ULL, (*counter)++);
        const MlmcResult res = estimate(probe_cfg, shifted, probe_rng);
        return ProbeResult{res.estimate, res.total_inner_work};
    };
}

CvarResult cvar_estimate(double l_eta_hat, double eta, double tol, MlmcConfig cfg,
                         const NestedProblem& problem, RngStream& rng) {
    if (!(eta > 0.0 && eta <= 1.0))
        fail(ErrorCode::InvalidConfig, "eta must lie in (0, 1]");
    if (!(tol > 0.0))
        fail(ErrorCode::InvalidConfig, "tol must be positive");
    cfg.payoff = Payoff::positive_part;
    cfg.tol = tol * eta; // the division by eta scales the RMS back to tol
    const ShiftedProblem shifted(problem, l_eta_hat);
    const MlmcResult res = estimate(cfg, shifted, rng);

    CvarResult out;
    out.value = l_eta_hat + res.estimate / eta;
    out.total_work = res.total_inner_work;
    out.mlmc = res;
    return out;
}

} // namespace nestmc
