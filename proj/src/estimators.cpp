#include "nestmc/estimators.hpp"

#include <algorithm>
#include <array>

#include "nestmc/parallel.hpp"

namespace nestmc {

namespace {

constexpr std::int64_t kBatch = 1024;

// mean of n fresh inner draws, consumed through the batch interface
double fresh_inner_mean(const OuterScenario& scenario, std::int64_t n,
                        const NestedProblem& problem, RngStream& rng) {
    std::array<double, kBatch> buf;
    double sum = 0.0;
    for (std::int64_t done = 0; done < n;) {
        const std::int64_t take = std::min(kBatch, n - done);
        std::span<double> chunk(buf.data(), static_cast<std::size_t>(take));
        problem.sample_inner_batch(scenario, chunk, rng);
        for (double x : chunk)
            sum += x;
        done += take;
    }
    return sum / static_cast<double>(n);
}

} // namespace

LevelDiffSample level_diff_independent(const OuterScenario& scenario,
                                       std::int64_t n_fine, std::int64_t n_coarse,
                                       Payoff payoff, const NestedProblem& problem,
                                       RngStream& rng) {
    assert(n_fine >= 1 && n_coarse >= 0);
    LevelDiffSample out;
    out.fine = apply_payoff(payoff, fresh_inner_mean(scenario, n_fine, problem, rng));
    out.coarse = n_coarse > 0
                     ? apply_payoff(payoff,
                                    fresh_inner_mean(scenario, n_coarse, problem, rng))
                     : 0.0;
    out.diff = out.fine - out.coarse;
    out.inner_work = static_cast<std::uint64_t>(n_fine + n_coarse);
    return out;
}

LevelDiffSample level_diff_antithetic(const OuterScenario& scenario,
                                      std::int64_t n_fine, std::int64_t n_coarse,
                                      Payoff payoff, const NestedProblem& problem,
                                      RngStream& rng) {
    assert(n_fine >= 1 && n_coarse >= 0);
    LevelDiffSample out;
    if (n_coarse == 0) {
        out.fine = apply_payoff(payoff,
                                fresh_inner_mean(scenario, n_fine, problem, rng));
        out.coarse = 0.0;
        out.diff = out.fine;
        out.inner_work = static_cast<std::uint64_t>(n_fine);
        return out;
    }
    if (n_fine % n_coarse != 0 && n_coarse % n_fine != 0)
        fail(ErrorCode::IncompatibleLevelSizes,
             "antithetic coupling needs one inner count to divide the other");

    const std::int64_t total = std::max(n_fine, n_coarse);
    const std::int64_t grain = std::min(n_fine, n_coarse);

    // One pass over the shared samples, closing fine/coarse blocks as their
    // boundaries align with the finest granularity. Chunks never cross a
    // grain boundary, so the equality checks below see every block edge.
    std::array<double, kBatch> buf;
    double fine_block = 0.0, coarse_block = 0.0;
    double fine_sum = 0.0, coarse_sum = 0.0;
    std::int64_t in_fine = 0, in_coarse = 0;
    for (std::int64_t done = 0; done < total;) {
        const std::int64_t take =
            std::min({kBatch, total - done, grain - done % grain});
        std::span<double> chunk(buf.data(), static_cast<std::size_t>(take));
        problem.sample_inner_batch(scenario, chunk, rng);
        double chunk_sum = 0.0;
        for (double x : chunk)
            chunk_sum += x;
        done += take;

        fine_block += chunk_sum;
        coarse_block += chunk_sum;
        in_fine += take;
        in_coarse += take;
        if (in_fine == n_fine) {
            fine_sum += apply_payoff(payoff, fine_block / static_cast<double>(n_fine));
            fine_block = 0.0;
            in_fine = 0;
        }
        if (in_coarse == n_coarse) {
            coarse_sum +=
                apply_payoff(payoff, coarse_block / static_cast<double>(n_coarse));
            coarse_block = 0.0;
            in_coarse = 0;
        }
    }
    out.fine = fine_sum * static_cast<double>(n_fine) / static_cast<double>(total);
    out.coarse =
        coarse_sum * static_cast<double>(n_coarse) / static_cast<double>(total);
    out.diff = out.fine - out.coarse;
    out.inner_work = static_cast<std::uint64_t>(total);
    return out;
}

NestedMcResult nested_mc_estimate(std::int64_t m_outer, std::int64_t n_inner,
                                  Payoff payoff, const NestedProblem& problem,
                                  RngStream& rng, int threads) {
    assert(m_outer >= 1 && n_inner >= 1);
    struct Partial {
        double sum = 0.0;
        double sum_sq = 0.0;
    };
    const RngStream base = rng.derive(0x6e6d63, 0); // scenario streams keyed by index
    auto partials = parallel_blocks<Partial>(
        m_outer, 64, threads, [&](std::int64_t, std::int64_t begin, std::int64_t end) {
            Partial p;
            for (std::int64_t i = begin; i < end; ++i) {
                RngStream stream = base.derive(static_cast<std::uint64_t>(i));
                const OuterScenario scenario = problem.sample_outer(stream);
                const double value = apply_payoff(
                    payoff, fresh_inner_mean(scenario, n_inner, problem, stream));
                p.sum += value;
                p.sum_sq += value * value;
            }
            return p;
        });
    double sum = 0.0, sum_sq = 0.0;
    for (const Partial& p : partials) {
        sum += p.sum;
        sum_sq += p.sum_sq;
    }
    const double m = static_cast<double>(m_outer);
    NestedMcResult out;
    out.estimate = sum / m;
    const double var =
        m > 1 ? std::max(0.0, (sum_sq - sum * sum / m) / (m - 1.0)) : 0.0;
    out.stderr_ = std::sqrt(var / m);
    out.inner_work = static_cast<std::uint64_t>(m_outer) *
                     static_cast<std::uint64_t>(n_inner);
    return out;
}

} // namespace nestmc
