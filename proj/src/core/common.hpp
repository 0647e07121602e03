#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipa {

using Shape = std::vector<int64_t>;

enum class ErrCode {
    ShapeMismatch,
    NotScalar,
    MissingGradient,
    BadT,
    BadTimestep,
    BadTimestepOrder,
    BadSteps,
    TooLong,
    NotFrozen,
    BadRange,
    BatchTooSmall,
    DidNotConverge,
    MissingImageStream,
    ModeConditionMismatch,
    OddDim,
    Disabled,
    MissingBaseWeights,
    BadMagic,
    VersionUnsupported,
    TruncatedFile,
    ShapeTableMismatch,
    ShapeIncompatible,
    FreezeViolation,
    BudgetMismatch,
    InvalidRequest,
    IoError,
    BadArg,
    Internal,
};

const char* err_name(ErrCode code);

class Error : public std::runtime_error {
public:
    Error(ErrCode code, const std::string& msg)
        : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}
    ErrCode code() const { return code_; }

private:
    ErrCode code_;
};

[[noreturn]] inline void fail(ErrCode code, const std::string& msg) {
    throw Error(code, msg);
}

inline void require(bool cond, ErrCode code, const std::string& msg) {
    if (!cond) {
        fail(code, msg);
    }
}

inline int64_t numel_of(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << "]";
    return os.str();
}

}  // namespace ipa
