#include "nestmc/adaptive.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "nestmc/errors.hpp"
#include "nestmc/estimators.hpp"

namespace nestmc {

void AdaptiveConfig::validate() const {
    if (n0 < 2)
        fail(ErrorCode::InvalidConfig, "adaptive n0 must be at least 2");
    if (!(confidence >= 1.0))
        fail(ErrorCode::InvalidConfig, "adaptive confidence must be >= 1");
    if (!(r > 1.0 && r < 2.0))
        fail(ErrorCode::InvalidConfig, "adaptive exponent r must satisfy 1 < r < 2");
}

double target_samples(int level, double delta, const AdaptiveConfig& cfg) {
    assert(level >= 0 && delta >= 0.0);
    const double cap = static_cast<double>(cfg.n0) * std::pow(4.0, level);
    double shrink; // (C^-1 sqrt(N0) 2^l delta)^-r, with the delta = 0/inf limits
    if (delta == 0.0) {
        shrink = std::numeric_limits<double>::infinity();
    } else if (std::isinf(delta)) {
        shrink = 0.0;
    } else {
        const double nu = std::sqrt(static_cast<double>(cfg.n0)) *
                          std::ldexp(delta, level) / cfg.confidence;
        shrink = std::pow(nu, -cfg.r);
    }
    return cap * std::max(std::ldexp(1.0, -level), std::min(1.0, shrink));
}

AdaptiveOutcome determine_inner_samples(int level, const OuterScenario& scenario,
                                        const AdaptiveConfig& cfg,
                                        const NestedProblem& problem,
                                        RngStream& rng) {
    assert(level >= 0);
    const std::int64_t cap = cfg.n0 << (2 * level);
    const double cap_d = static_cast<double>(cap);
    const double scale =
        std::sqrt(static_cast<double>(cfg.n0)) * std::ldexp(1.0, level) /
        cfg.confidence;

    AdaptiveOutcome out;
    std::int64_t n = cfg.n0 << level;
    std::array<double, 1024> buf;
    for (;;) {
        if (2 * n >= cap) {
            out.n_final = cap;
            out.capped = true;
            return out;
        }
        InnerAccumulator acc;
        for (std::int64_t done = 0; done < n;) {
            const std::int64_t take =
                std::min<std::int64_t>(static_cast<std::int64_t>(buf.size()), n - done);
            std::span<double> chunk(buf.data(), static_cast<std::size_t>(take));
            problem.sample_inner_batch(scenario, chunk, rng);
            acc.add(chunk);
            done += take;
        }
        out.pilot_work += static_cast<std::uint64_t>(n);
        const InnerEstimate est = acc.estimate();
        out.d_hat = std::abs(est.mean);
        out.sigma_hat = std::sqrt(est.var_biased);
        out.estimated = true;

        bool done;
        if (out.sigma_hat == 0.0) {
            done = true; // delta_hat = +inf: target collapses to the lower cap
        } else {
            const double target =
                cap_d * std::pow(scale * out.d_hat / out.sigma_hat, -cfg.r);
            done = static_cast<double>(n) >= target;
        }
        if (done) {
            out.n_final = n;
            return out;
        }
        n *= 2;
    }
}

} // namespace nestmc
