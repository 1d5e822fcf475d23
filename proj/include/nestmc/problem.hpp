#pragma once

#include <span>

#include "nestmc/rng.hpp"

namespace nestmc {

/// One outer draw. `d` and `sigma` hold the conditional |mean| and standard
/// deviation of the inner law when the problem knows them analytically; the
/// samplers never read them, they exist for diagnostics and tests.
struct OuterScenario {
    double y = 0.0;
    double d = 0.0;
    double sigma = 0.0;
};

/// A nested-expectation problem: an outer law for Y and a conditional inner
/// law for X given Y. Implementations must be stateless after construction;
/// concurrent calls are safe as long as each caller owns its RngStream.
class NestedProblem {
public:
    virtual ~NestedProblem() = default;

    virtual OuterScenario sample_outer(RngStream& rng) const = 0;
    virtual double sample_inner(const OuterScenario& scenario, RngStream& rng) const = 0;

    /// Bulk inner draws; override when a tight loop pays off.
    virtual void sample_inner_batch(const OuterScenario& scenario,
                                    std::span<double> out, RngStream& rng) const {
        for (double& v : out)
            v = sample_inner(scenario, rng);
    }
};

/// View of a problem with the inner payoff shifted by a constant threshold,
/// i.e. X' = X - shift. Used to re-point probability and CVaR estimates at a
/// runtime loss level without rebuilding the problem.
class ShiftedProblem final : public NestedProblem {
public:
    ShiftedProblem(const NestedProblem& base, double shift)
        : base_(base), shift_(shift) {}

    OuterScenario sample_outer(RngStream& rng) const override {
        OuterScenario s = base_.sample_outer(rng);
        s.d = 0.0; // conditional stats of the base no longer apply
        s.sigma = 0.0;
        return s;
    }

    double sample_inner(const OuterScenario& scenario, RngStream& rng) const override {
        return base_.sample_inner(scenario, rng) - shift_;
    }

    void sample_inner_batch(const OuterScenario& scenario, std::span<double> out,
                            RngStream& rng) const override {
        base_.sample_inner_batch(scenario, out, rng);
        for (double& v : out)
            v -= shift_;
    }

private:
    const NestedProblem& base_;
    double shift_;
};

} // namespace nestmc
