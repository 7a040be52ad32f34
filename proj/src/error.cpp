#include "mscal/error.hpp"

namespace mscal {

const char* to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::MalformedHistory: return "MalformedHistory";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::CovariateConflict: return "CovariateConflict";
    case ErrorCode::InvalidStructure: return "InvalidStructure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyCohort: return "EmptyCohort";
    case ErrorCode::NoRiskSet: return "NoRiskSet";
    case ErrorCode::FitSingular: return "FitSingular";
    case ErrorCode::FitDiverged: return "FitDiverged";
    case ErrorCode::DivergedToInfinity: return "DivergedToInfinity";
    case ErrorCode::TooFewDistinct: return "TooFewDistinct";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::BootstrapUnstable: return "BootstrapUnstable";
    case ErrorCode::ToleranceNotMet: return "ToleranceNotMet";
    case ErrorCode::EmptyBand: return "EmptyBand";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

int exit_code_for(ErrorCode code)
{
    switch (code) {
    case ErrorCode::MalformedHistory:
    case ErrorCode::IllegalTransition:
    case ErrorCode::CovariateConflict:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::EmptyCohort:
        return 3;
    case ErrorCode::NoRiskSet:
    case ErrorCode::FitSingular:
    case ErrorCode::FitDiverged:
    case ErrorCode::DivergedToInfinity:
    case ErrorCode::TooFewDistinct:
    case ErrorCode::GroupTooSmall:
    case ErrorCode::BootstrapUnstable:
    case ErrorCode::ToleranceNotMet:
    case ErrorCode::EmptyBand:
        return 4;
    default:
        return 2;
    }
}

}  // namespace mscal
