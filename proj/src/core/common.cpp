#include "common.hpp"

namespace ipa {

const char* err_name(ErrCode code) {
    switch (code) {
        case ErrCode::ShapeMismatch: return "ShapeMismatch";
        case ErrCode::NotScalar: return "NotScalar";
        case ErrCode::MissingGradient: return "MissingGradient";
        case ErrCode::BadT: return "BadT";
        case ErrCode::BadTimestep: return "BadTimestep";
        case ErrCode::BadTimestepOrder: return "BadTimestepOrder";
        case ErrCode::BadSteps: return "BadSteps";
        case ErrCode::TooLong: return "TooLong";
        case ErrCode::NotFrozen: return "NotFrozen";
        case ErrCode::BadRange: return "BadRange";
        case ErrCode::BatchTooSmall: return "BatchTooSmall";
        case ErrCode::DidNotConverge: return "DidNotConverge";
        case ErrCode::MissingImageStream: return "MissingImageStream";
        case ErrCode::ModeConditionMismatch: return "ModeConditionMismatch";
        case ErrCode::OddDim: return "OddDim";
        case ErrCode::Disabled: return "Disabled";
        case ErrCode::MissingBaseWeights: return "MissingBaseWeights";
        case ErrCode::BadMagic: return "BadMagic";
        case ErrCode::VersionUnsupported: return "VersionUnsupported";
        case ErrCode::TruncatedFile: return "TruncatedFile";
        case ErrCode::ShapeTableMismatch: return "ShapeTableMismatch";
        case ErrCode::ShapeIncompatible: return "ShapeIncompatible";
        case ErrCode::FreezeViolation: return "FreezeViolation";
        case ErrCode::BudgetMismatch: return "BudgetMismatch";
        case ErrCode::InvalidRequest: return "InvalidRequest";
        case ErrCode::IoError: return "IoError";
        case ErrCode::BadArg: return "BadArg";
        case ErrCode::Internal: return "Internal";
    }
    return "Unknown";
}

}  // namespace ipa
