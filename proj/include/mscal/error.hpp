#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mscal {

enum class ErrorCode {
    MalformedHistory,
    IllegalTransition,
    CovariateConflict,
    InvalidStructure,
    InvalidArgument,
    DimensionMismatch,
    EmptyCohort,
    NoRiskSet,
    FitSingular,
    FitDiverged,
    DivergedToInfinity,
    TooFewDistinct,
    GroupTooSmall,
    BootstrapUnstable,
    ToleranceNotMet,
    EmptyBand,
    Io,
};

const char* to_string(ErrorCode code);

/// Exit-code class of an error: data-integrity problems (3) or numerical
/// failures (4). Anything else is a usage/config error (2).
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code)
    {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace mscal
