#include "nestmc/model_problem.hpp"

#include <cmath>

#include "nestmc/errors.hpp"
#include "nestmc/normal.hpp"

namespace nestmc {

void ModelParams::validate() const {
    if (!(tau > 0.0 && tau < 1.0))
        fail(ErrorCode::InvalidConfig, "model problem needs 0 < tau < 1");
}

ModelProblem::ModelProblem(ModelParams params) : params_(params) {
    params_.validate();
    inner_scale_ = 2.0 * std::sqrt(params_.tau * (1.0 - params_.tau));
}

double ModelProblem::conditional_mean(double y) const {
    return params_.tau * (y * y - 1.0) - params_.l_eta;
}

double ModelProblem::conditional_sd(double y) const {
    return std::sqrt(2.0 * params_.tau * params_.tau +
                     4.0 * params_.tau * (1.0 - params_.tau) * y * y);
}

OuterScenario ModelProblem::scenario_at(double y) const {
    return OuterScenario{y, std::abs(conditional_mean(y)), conditional_sd(y)};
}

OuterScenario ModelProblem::sample_outer(RngStream& rng) const {
    return scenario_at(rng.normal());
}

double ModelProblem::sample_inner(const OuterScenario& scenario,
                                  RngStream& rng) const {
    // same expression order as the batch path, so the two are bit-identical
    const double y = scenario.y;
    const double base = params_.tau * y * y - params_.l_eta;
    const double yt = rng.normal();
    const double z = rng.normal();
    return base - params_.tau * yt * yt + inner_scale_ * y * z;
}

void ModelProblem::sample_inner_batch(const OuterScenario& scenario,
                                      std::span<double> out, RngStream& rng) const {
    const double y = scenario.y;
    const double base = params_.tau * y * y - params_.l_eta;
    const double yz_scale = inner_scale_ * y;
    const double tau = params_.tau;
    for (double& v : out) {
        const double yt = rng.normal();
        const double z = rng.normal();
        v = base - tau * yt * yt + yz_scale * z;
    }
}

double analytic_eta(const ModelParams& params, bool permissive) {
    params.validate();
    if (params.l_eta < -params.tau) {
        if (permissive)
            return 1.0;
        fail(ErrorCode::BelowSupport,
             "l_eta below the support edge -tau; eta would be 1");
    }
    return 2.0 * normal_cdf(-std::sqrt(1.0 + params.l_eta / params.tau));
}

double l_eta_from_eta(double eta, double tau) {
    if (!(eta > 0.0 && eta < 1.0))
        fail(ErrorCode::InvalidConfig, "eta must lie in (0, 1)");
    const double q = normal_quantile(0.5 * eta);
    return tau * (q * q - 1.0);
}

double analytic_cdf(double x, const ModelParams& params) {
    params.validate();
    const double arg = 1.0 + (x + params.l_eta) / params.tau;
    if (arg <= 0.0)
        return 0.0;
    return 1.0 - 2.0 * normal_cdf(-std::sqrt(arg));
}

double analytic_cvar(const ModelParams& params) {
    params.validate();
    if (params.l_eta < -params.tau)
        fail(ErrorCode::BelowSupport, "l_eta below the support edge -tau");
    const double a = std::sqrt(1.0 + params.l_eta / params.tau);
    if (a == 0.0)
        return 0.0; // conditioning on the full support: E[L] = 0
    return params.tau * a * normal_pdf(a) / normal_cdf_upper(a);
}

} // namespace nestmc
