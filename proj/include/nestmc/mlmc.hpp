#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nestmc/adaptive.hpp"
#include "nestmc/estimators.hpp"
#include "nestmc/problem.hpp"

namespace nestmc {

/// Per-level accumulators of a multilevel run. Mergeable: merging two records
/// equals one record over the union of their samples (up to float reordering).
struct LevelRecord {
    int level = 0;
    std::int64_t m_outer = 0;
    double sum_diff = 0.0;
    double sum_diff_sq = 0.0;
    double sum_fine = 0.0;
    double sum_fine_sq = 0.0;
    std::uint64_t total_inner_work = 0; // pilot draws included
    double wall_time = 0.0;             // seconds, additive, not reproducible

    void add(const LevelDiffSample& s);
    void merge(const LevelRecord& other);

    double mean_diff() const;
    double var_diff() const; // population variance of the differences
    double mean_fine() const;
    double var_fine() const;
    double work_per_sample() const; // W_l = total_inner_work / m_outer
};

struct Det2Mode {};                       // N_l = N0 * 2^l
struct Det4Mode {};                       // N_l = N0 * 4^l
using SamplingMode = std::variant<Det2Mode, Det4Mode, AdaptiveConfig>;

enum class Coupling { independent, antithetic };

struct MlmcConfig {
    double tol = 1e-3;          // target RMS error
    SamplingMode sampling_mode = AdaptiveConfig{};
    Coupling coupling = Coupling::antithetic;
    Payoff payoff = Payoff::heaviside_step;
    std::int64_t n0 = 32;       // base inner count for the deterministic modes
    double alpha_bias = 1.0;    // weak rate used in the bias stop
    double error_split = 0.5;   // fraction of tol^2 given to the variance
    // Initial outer samples per level. Rare payoffs (Heaviside far in the
    // tail, positive part) need enough pilots that an all-zero draw, which
    // would zero the variance estimate and stop the run instantly, cannot
    // realistically happen.
    std::int64_t m_pilot = 1000;
    int max_level = 20;
    int first_level = 0;          // starting candidate for l0
    bool search_start_level = true; // probe R_{l0}, discard l0 while R > 1
    std::int64_t m_probe = 200;   // outer samples per start-level probe
    int threads = 0;              // 0: NESTMC_THREADS or hardware

    std::int64_t base_n0() const;
    void validate() const;
};

struct MlmcResult {
    double estimate = 0.0;
    std::vector<LevelRecord> levels;
    int first_level = 0;
    double stat_error = 0.0;    // sqrt(sum V_l / M_l)
    double bias_estimate = 0.0;
    std::uint64_t total_inner_work = 0; // every draw consumed, probes included
};

/// Samples m outer scenarios of the level-l difference. The coarse term is
/// the constant 0 at level 0; estimate() treats its own first level the same
/// way internally.
LevelRecord run_level(int level, std::int64_t m, const MlmcConfig& cfg,
                      const NestedProblem& problem, RngStream& rng);

/// Full multilevel estimate: pilot levels l0..l0+2, optimal sample allocation
/// M_l proportional to sqrt(V_l/W_l), level extension until the weak-rate bias
/// estimate fits in the error split, with the starting level promoted while
/// R_{l0} > 1.
MlmcResult estimate(const MlmcConfig& cfg, const NestedProblem& problem,
                    RngStream& rng);

/// Smallest l0 with R_{l0} <= 1, probing upward with m_probe scenarios per
/// level.
int select_start_level(const MlmcConfig& cfg, const NestedProblem& problem,
                       std::int64_t m_probe, RngStream& rng);

/// One row of a convergence table.
struct LevelStats {
    int level = 0;
    std::int64_t m = 0;
    double e = 0.0;  // |mean diff|
    double v = 0.0;  // var diff
    double ef = 0.0; // |mean fine|
    double vf = 0.0; // var fine
    double w = 0.0;  // average inner work per outer sample
    double r = 0.0;  // starting-level ratio, NaN on the last row
    double wall_time = 0.0;
};

LevelStats summarize(const LevelRecord& record);

/// Runs run_level for l = first..last at fixed m and fills the R column.
std::vector<LevelStats> convergence_study(int first, int last, std::int64_t m,
                                          const MlmcConfig& cfg,
                                          const NestedProblem& problem,
                                          RngStream& rng);

/// Least-squares slopes of log2 E, log2 V, log2 W against the level.
/// Rates follow the usual sign convention: E ~ 2^(-alpha l), V ~ 2^(-beta l),
/// W ~ 2^(gamma l).
struct RateFit {
    double alpha = 0.0, alpha_se = 0.0;
    double beta = 0.0, beta_se = 0.0;
    double gamma = 0.0, gamma_se = 0.0;
};

RateFit fit_rates(const std::vector<LevelStats>& table, int skip_levels = 0);

/// CSV emission, schema: level,M,E,V,Ef,Vf,W,R,wall_time. `header_comment`
/// lines are written first, each prefixed with "# ".
void write_level_csv(std::ostream& out, const std::vector<LevelStats>& table,
                     const std::vector<std::string>& header_comment);

} // namespace nestmc
