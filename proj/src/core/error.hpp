#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace lslu {

enum class ErrorCode {
    ShapeMismatch,
    DomainError,
    InvalidAxis,
    NotScalar,
    TapeConsumed,
    DegenerateBatch,
    InvalidRate,
    LabelOutOfRange,
    ChannelMismatch,
    UnpopulatedStats,
    GeometryUnsupported,
    NotFoldable,
    MissingGrad,
    FileMissing,
    CorruptRecord,
    BadMagic,
    DimensionMismatch,
    VersionMismatch,
    Corrupt,
    InvalidDepth,
    InvalidConfig,
    UnresolvedShape,
    NoSeriesLayers,
    InsufficientHistory,
    SingleClass,
    InsufficientIters,
    Io,
    Internal,
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

namespace detail {
inline void fmt_into(std::ostringstream&) {}
template <class T, class... Rest>
void fmt_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    fmt_into(os, rest...);
}
}  // namespace detail

template <class... Args>
[[noreturn]] void fail(ErrorCode code, const Args&... args) {
    std::ostringstream os;
    detail::fmt_into(os, args...);
    throw Error(code, os.str());
}

template <class... Args>
void check(bool cond, ErrorCode code, const Args&... args) {
    if (!cond) fail(code, args...);
}

}  // namespace lslu
