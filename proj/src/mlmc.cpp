#include "nestmc/mlmc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "nestmc/errors.hpp"
#include "nestmc/parallel.hpp"

namespace nestmc {

namespace {

constexpr std::int64_t kMinOuterSamples = 32; // keeps variance estimates usable
constexpr std::int64_t kScenarioBlock = 64;   // fixed: reduction order must not
                                              // depend on the worker count
constexpr std::uint64_t kSaltLevel = 0x6c65766cULL;
constexpr std::uint64_t kSaltAttempt = 0x61747074ULL;

double safe_ratio(double num, double den) {
    if (den == 0.0)
        return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return num / den;
}

struct LevelCounts {
    std::int64_t n_fine = 0;
    std::int64_t n_coarse = 0;
    std::uint64_t pilot_work = 0;
};

LevelCounts pick_counts(int level, bool base, const OuterScenario& scenario,
                        const MlmcConfig& cfg, const NestedProblem& problem,
                        RngStream& rng) {
    LevelCounts counts;
    if (const auto* adaptive = std::get_if<AdaptiveConfig>(&cfg.sampling_mode)) {
        const AdaptiveOutcome fine =
            determine_inner_samples(level, scenario, *adaptive, problem, rng);
        counts.n_fine = fine.n_final;
        counts.pilot_work = fine.pilot_work;
        if (!base) {
            // independent second run at level-1 on the same scenario
            const AdaptiveOutcome coarse =
                determine_inner_samples(level - 1, scenario, *adaptive, problem, rng);
            counts.n_coarse = coarse.n_final;
            counts.pilot_work += coarse.pilot_work;
        }
    } else {
        const int factor = std::holds_alternative<Det4Mode>(cfg.sampling_mode) ? 2 : 1;
        counts.n_fine = cfg.n0 << (factor * level);
        counts.n_coarse = base ? 0 : cfg.n0 << (factor * (level - 1));
    }
    return counts;
}

// Samples scenario indices [begin, begin+count) of the level-l difference.
// Stream derivation is keyed by (level stream, scenario index), so results are
// reproducible for any worker count and extensions can continue the index
// range without re-touching earlier scenarios.
LevelRecord run_level_range(int level, bool base, std::int64_t begin,
                            std::int64_t count, const MlmcConfig& cfg,
                            const NestedProblem& problem,
                            const RngStream& level_rng) {
    const auto t0 = std::chrono::steady_clock::now();
    auto partials = parallel_blocks<LevelRecord>(
        count, kScenarioBlock, cfg.threads,
        [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
            LevelRecord rec;
            rec.level = level;
            for (std::int64_t i = lo; i < hi; ++i) {
                RngStream stream =
                    level_rng.derive(static_cast<std::uint64_t>(begin + i));
                const OuterScenario scenario = problem.sample_outer(stream);
                const LevelCounts counts =
                    pick_counts(level, base, scenario, cfg, problem, stream);
                LevelDiffSample sample =
                    cfg.coupling == Coupling::antithetic
                        ? level_diff_antithetic(scenario, counts.n_fine,
                                                counts.n_coarse, cfg.payoff,
                                                problem, stream)
                        : level_diff_independent(scenario, counts.n_fine,
                                                 counts.n_coarse, cfg.payoff,
                                                 problem, stream);
                sample.inner_work += counts.pilot_work;
                rec.add(sample);
            }
            return rec;
        });
    LevelRecord merged;
    merged.level = level;
    for (const LevelRecord& p : partials)
        merged.merge(p);
    merged.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return merged;
}

double start_level_ratio(const LevelRecord& base_rec, const LevelRecord& diff_rec) {
    const double num = std::sqrt(base_rec.var_fine() * base_rec.work_per_sample()) +
                       std::sqrt(diff_rec.var_diff() * diff_rec.work_per_sample());
    const double den =
        std::sqrt(diff_rec.var_fine() * diff_rec.work_per_sample());
    return safe_ratio(num, den);
}

// Probe levels upward with m_probe scenarios each until R_{l0} <= 1, i.e.
// keeping l0 as the base costs no more than starting from l0 + 1. The probe
// records are discarded; their draws are charged to probe_work.
int scan_start_level(const MlmcConfig& cfg, const NestedProblem& problem,
                     std::int64_t m_probe, const RngStream& rng,
                     std::uint64_t& probe_work) {
    for (int l0 = cfg.first_level; l0 < cfg.max_level; ++l0) {
        const RngStream probe_rng =
            rng.derive(kSaltAttempt, static_cast<std::uint64_t>(l0));
        const LevelRecord base_rec = run_level_range(
            l0, true, 0, m_probe, cfg, problem,
            probe_rng.derive(kSaltLevel, static_cast<std::uint64_t>(l0)));
        const LevelRecord diff_rec = run_level_range(
            l0 + 1, false, 0, m_probe, cfg, problem,
            probe_rng.derive(kSaltLevel, static_cast<std::uint64_t>(l0 + 1)));
        probe_work += base_rec.total_inner_work + diff_rec.total_inner_work;
        if (start_level_ratio(base_rec, diff_rec) <= 1.0)
            return l0;
    }
    fail(ErrorCode::MaxLevelExceeded, "no start level with R <= 1 below max_level");
}

} // namespace

void LevelRecord::add(const LevelDiffSample& s) {
    ++m_outer;
    sum_diff += s.diff;
    sum_diff_sq += s.diff * s.diff;
    sum_fine += s.fine;
    sum_fine_sq += s.fine * s.fine;
    total_inner_work += s.inner_work;
}

void LevelRecord::merge(const LevelRecord& other) {
    assert(level == other.level);
    m_outer += other.m_outer;
    sum_diff += other.sum_diff;
    sum_diff_sq += other.sum_diff_sq;
    sum_fine += other.sum_fine;
    sum_fine_sq += other.sum_fine_sq;
    total_inner_work += other.total_inner_work;
    wall_time += other.wall_time;
}

double LevelRecord::mean_diff() const {
    return m_outer > 0 ? sum_diff / static_cast<double>(m_outer) : 0.0;
}

double LevelRecord::var_diff() const {
    if (m_outer == 0)
        return 0.0;
    const double m = static_cast<double>(m_outer);
    const double mean = sum_diff / m;
    return std::max(0.0, sum_diff_sq / m - mean * mean);
}

double LevelRecord::mean_fine() const {
    return m_outer > 0 ? sum_fine / static_cast<double>(m_outer) : 0.0;
}

double LevelRecord::var_fine() const {
    if (m_outer == 0)
        return 0.0;
    const double m = static_cast<double>(m_outer);
    const double mean = sum_fine / m;
    return std::max(0.0, sum_fine_sq / m - mean * mean);
}

double LevelRecord::work_per_sample() const {
    return m_outer > 0 ? static_cast<double>(total_inner_work) /
                             static_cast<double>(m_outer)
                       : 0.0;
}

std::int64_t MlmcConfig::base_n0() const {
    if (const auto* adaptive = std::get_if<AdaptiveConfig>(&sampling_mode))
        return adaptive->n0;
    return n0;
}

void MlmcConfig::validate() const {
    if (!(tol > 0.0))
        fail(ErrorCode::InvalidConfig, "tol must be positive");
    if (!(error_split > 0.0 && error_split < 1.0))
        fail(ErrorCode::InvalidConfig, "error_split must lie in (0, 1)");
    if (n0 < 1)
        fail(ErrorCode::InvalidConfig, "n0 must be positive");
    if (m_pilot < 2)
        fail(ErrorCode::InvalidConfig, "m_pilot must be at least 2");
    if (max_level < first_level)
        fail(ErrorCode::InvalidConfig, "max_level below first_level");
    if (alpha_bias <= 0.0)
        fail(ErrorCode::InvalidConfig, "alpha_bias must be positive");
    if (const auto* adaptive = std::get_if<AdaptiveConfig>(&sampling_mode))
        adaptive->validate();
}

LevelRecord run_level(int level, std::int64_t m, const MlmcConfig& cfg,
                      const NestedProblem& problem, RngStream& rng) {
    assert(m >= 1 && level >= 0);
    const RngStream level_rng =
        rng.derive(kSaltLevel, static_cast<std::uint64_t>(level));
    return run_level_range(level, level == 0, 0, m, cfg, problem, level_rng);
}

MlmcResult estimate(const MlmcConfig& cfg, const NestedProblem& problem,
                    RngStream& rng) {
    cfg.validate();
    const double var_budget = cfg.error_split * cfg.tol * cfg.tol;
    const double bias_budget = std::sqrt(1.0 - cfg.error_split) * cfg.tol;

    std::uint64_t probe_work = 0;
    int l0 = cfg.first_level;
    if (cfg.search_start_level)
        l0 = scan_start_level(cfg, problem, cfg.m_probe, rng, probe_work);
    if (l0 + 2 > cfg.max_level)
        fail(ErrorCode::MaxLevelExceeded, "start level leaves no room for pilots");

    const RngStream attempt_rng =
        rng.derive(kSaltAttempt, 0x72756eULL + static_cast<std::uint64_t>(l0));

    std::vector<LevelRecord> levels;  // index k holds level l0 + k
    std::vector<RngStream> level_rngs;
    std::vector<std::int64_t> next_index;
    auto add_level = [&](int level) {
        level_rngs.push_back(
            attempt_rng.derive(kSaltLevel, static_cast<std::uint64_t>(level)));
        next_index.push_back(0);
        levels.push_back(run_level_range(level, level == l0, 0, cfg.m_pilot,
                                         cfg, problem, level_rngs.back()));
        next_index.back() = cfg.m_pilot;
    };
    for (int l = l0; l <= l0 + 2; ++l)
        add_level(l);

    std::vector<double> bias_history;
    for (int round = 0;; ++round) {
        if (round > 1000)
            fail(ErrorCode::NonconvergentBias, "sample allocation failed to settle");
        // optimal allocation: M_l ~ sqrt(V_l / W_l) * sum_k sqrt(V_k W_k)
        double s = 0.0;
        for (const LevelRecord& rec : levels)
            s += std::sqrt(rec.var_diff() * rec.work_per_sample());
        bool drew = false;
        for (std::size_t k = 0; k < levels.size(); ++k) {
            const double v = levels[k].var_diff();
            const double w = levels[k].work_per_sample();
            double target = kMinOuterSamples;
            if (v > 0.0 && w > 0.0)
                target =
                    std::max(target, std::ceil(std::sqrt(v / w) * s / var_budget));
            const std::int64_t want = static_cast<std::int64_t>(target);
            const std::int64_t have = levels[k].m_outer;
            if (want > have) {
                const int level = l0 + static_cast<int>(k);
                LevelRecord extra =
                    run_level_range(level, level == l0, next_index[k],
                                    want - have, cfg, problem, level_rngs[k]);
                next_index[k] = want;
                levels[k].merge(extra);
                drew = true;
            }
        }
        if (drew)
            continue; // re-check with the updated variance estimates

        // weak-rate bias from the last two difference levels
        const double factor = std::exp2(cfg.alpha_bias) - 1.0;
        const double e_top = std::abs(levels.back().mean_diff());
        const double e_prev = std::abs(levels[levels.size() - 2].mean_diff());
        const double bias =
            std::max(e_top, e_prev * std::exp2(-cfg.alpha_bias)) / factor;
        if (bias <= bias_budget)
            break;

        bias_history.push_back(bias);
        if (bias_history.size() >= 4) {
            const std::size_t n = bias_history.size();
            if (bias_history[n - 1] >= bias_history[n - 2] &&
                bias_history[n - 2] >= bias_history[n - 3] &&
                bias_history[n - 3] >= bias_history[n - 4])
                fail(ErrorCode::NonconvergentBias,
                     "bias estimate failed to decrease over 3 extensions");
        }
        const int new_level = l0 + static_cast<int>(levels.size());
        if (new_level > cfg.max_level)
            fail(ErrorCode::MaxLevelExceeded,
                 "bias stop needs a level beyond max_level");
        add_level(new_level);
    }

    MlmcResult result;
    result.first_level = l0;
    result.levels = std::move(levels);
    double stat_var = 0.0;
    for (const LevelRecord& rec : result.levels) {
        result.estimate += rec.mean_diff();
        stat_var += rec.var_diff() / static_cast<double>(rec.m_outer);
        result.total_inner_work += rec.total_inner_work;
    }
    result.total_inner_work += probe_work;
    result.stat_error = std::sqrt(stat_var);
    const double factor = std::exp2(cfg.alpha_bias) - 1.0;
    const std::size_t n = result.levels.size();
    result.bias_estimate =
        std::max(std::abs(result.levels[n - 1].mean_diff()),
                 std::abs(result.levels[n - 2].mean_diff()) *
                     std::exp2(-cfg.alpha_bias)) /
        factor;
    return result;
}

int select_start_level(const MlmcConfig& cfg, const NestedProblem& problem,
                       std::int64_t m_probe, RngStream& rng) {
    if (m_probe < 2)
        fail(ErrorCode::InvalidConfig, "m_probe must be at least 2");
    cfg.validate();
    std::uint64_t probe_work = 0;
    return scan_start_level(cfg, problem, m_probe, rng, probe_work);
}

LevelStats summarize(const LevelRecord& record) {
    LevelStats row;
    row.level = record.level;
    row.m = record.m_outer;
    row.e = std::abs(record.mean_diff());
    row.v = record.var_diff();
    row.ef = std::abs(record.mean_fine());
    row.vf = record.var_fine();
    row.w = record.work_per_sample();
    row.r = std::numeric_limits<double>::quiet_NaN();
    row.wall_time = record.wall_time;
    return row;
}

std::vector<LevelStats> convergence_study(int first, int last, std::int64_t m,
                                          const MlmcConfig& cfg,
                                          const NestedProblem& problem,
                                          RngStream& rng) {
    assert(first >= 0 && last >= first && m >= 1);
    cfg.validate();
    std::vector<LevelStats> table;
    table.reserve(static_cast<std::size_t>(last - first + 1));
    for (int l = first; l <= last; ++l)
        table.push_back(summarize(run_level(l, m, cfg, problem, rng)));
    for (std::size_t i = 0; i + 1 < table.size(); ++i) {
        const LevelStats& cur = table[i];
        const LevelStats& next = table[i + 1];
        table[i].r = safe_ratio(std::sqrt(cur.vf * cur.w) + std::sqrt(next.v * next.w),
                                std::sqrt(next.vf * next.w));
    }
    return table;
}

namespace {

struct SlopeFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double se = std::numeric_limits<double>::quiet_NaN();
};

SlopeFit log2_slope(const std::vector<LevelStats>& table, int skip,
                    double (*value)(const LevelStats&)) {
    std::vector<double> xs, ys;
    for (std::size_t i = static_cast<std::size_t>(skip); i < table.size(); ++i) {
        const double v = value(table[i]);
        if (v > 0.0) {
            xs.push_back(static_cast<double>(table[i].level));
            ys.push_back(std::log2(v));
        }
    }
    SlopeFit fit;
    const std::size_t n = xs.size();
    if (n < 2)
        return fit;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0)
        return fit;
    fit.slope = sxy / sxx;
    if (n > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double resid = ys[i] - my - fit.slope * (xs[i] - mx);
            rss += resid * resid;
        }
        fit.se = std::sqrt(rss / (static_cast<double>(n) - 2.0) / sxx);
    } else {
        fit.se = 0.0;
    }
    return fit;
}

} // namespace

RateFit fit_rates(const std::vector<LevelStats>& table, int skip_levels) {
    if (table.size() < 3)
        fail(ErrorCode::InsufficientLevels, "rate fit needs at least 3 levels");
    if (table.size() - static_cast<std::size_t>(skip_levels) < 2)
        fail(ErrorCode::InsufficientLevels, "rate fit skip leaves fewer than 2 rows");
    RateFit out;
    const SlopeFit e = log2_slope(table, skip_levels,
                                  [](const LevelStats& s) { return s.e; });
    const SlopeFit v = log2_slope(table, skip_levels,
                                  [](const LevelStats& s) { return s.v; });
    const SlopeFit w = log2_slope(table, skip_levels,
                                  [](const LevelStats& s) { return s.w; });
    out.alpha = -e.slope;
    out.alpha_se = e.se;
    out.beta = -v.slope;
    out.beta_se = v.se;
    out.gamma = w.slope;
    out.gamma_se = w.se;
    return out;
}

void write_level_csv(std::ostream& out, const std::vector<LevelStats>& table,
                     const std::vector<std::string>& header_comment) {
    for (const std::string& line : header_comment)
        out << "# " << line << "\n";
    out << "level,M,E,V,Ef,Vf,W,R,wall_time\n";
    char buf[512];
    for (const LevelStats& row : table) {
        std::snprintf(buf, sizeof(buf),
                      "%d,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n",
                      row.level, static_cast<long long>(row.m), row.e, row.v,
                      row.ef, row.vf, row.w, row.r, row.wall_time);
        out << buf;
    }
}

} // namespace nestmc
