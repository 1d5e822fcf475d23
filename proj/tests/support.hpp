#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nestmc/problem.hpp"

namespace nestmc::testing {

/// Degenerate inner law X|Y == c.
class ConstantInnerProblem final : public NestedProblem {
public:
    explicit ConstantInnerProblem(double c) : c_(c) {}

    OuterScenario sample_outer(RngStream& rng) const override {
        return OuterScenario{rng.normal(), std::abs(c_), 0.0};
    }
    double sample_inner(const OuterScenario&, RngStream&) const override { return c_; }

private:
    double c_;
};

/// X|Y=y ~ N(mean_shift + slope*y, sd), a controllable synthetic law.
class GaussianInnerProblem final : public NestedProblem {
public:
    GaussianInnerProblem(double mean_shift, double slope, double sd)
        : mean_shift_(mean_shift), slope_(slope), sd_(sd) {}

    OuterScenario sample_outer(RngStream& rng) const override {
        const double y = rng.normal();
        return OuterScenario{y, std::abs(mean_shift_ + slope_ * y), sd_};
    }
    double sample_inner(const OuterScenario& s, RngStream& rng) const override {
        return mean_shift_ + slope_ * s.y + sd_ * rng.normal();
    }

private:
    double mean_shift_;
    double slope_;
    double sd_;
};

/// Decorator counting every inner draw, for work-accounting checks.
class CountingProblem final : public NestedProblem {
public:
    explicit CountingProblem(const NestedProblem& base) : base_(base) {}

    OuterScenario sample_outer(RngStream& rng) const override {
        return base_.sample_outer(rng);
    }
    double sample_inner(const OuterScenario& s, RngStream& rng) const override {
        count_.fetch_add(1, std::memory_order_relaxed);
        return base_.sample_inner(s, rng);
    }
    void sample_inner_batch(const OuterScenario& s, std::span<double> out,
                            RngStream& rng) const override {
        count_.fetch_add(out.size(), std::memory_order_relaxed);
        base_.sample_inner_batch(s, out, rng);
    }

    std::uint64_t count() const { return count_.load(); }
    void reset() { count_.store(0); }

private:
    const NestedProblem& base_;
    mutable std::atomic<std::uint64_t> count_{0};
};

inline double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs)
        s += x;
    return s / static_cast<double>(xs.size());
}

inline double var_of(const std::vector<double>& xs) {
    const double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs)
        s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

} // namespace nestmc::testing
