#pragma once

#include <stdexcept>
#include <string>

namespace nestmc {

enum class ErrorCode {
    EmptySampleSet,
    IncompatibleLevelSizes,
    MaxLevelExceeded,
    NonconvergentBias,
    InsufficientLevels,
    BelowSupport,
    BudgetExceeded,
    InvalidConfig,
};

/// Library error carrying a machine-checkable code alongside the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

} // namespace nestmc
