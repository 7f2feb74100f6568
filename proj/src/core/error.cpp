#include "core/error.hpp"

namespace lslu {

const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::DomainError: return "DomainError";
        case ErrorCode::InvalidAxis: return "InvalidAxis";
        case ErrorCode::NotScalar: return "NotScalar";
        case ErrorCode::TapeConsumed: return "TapeConsumed";
        case ErrorCode::DegenerateBatch: return "DegenerateBatch";
        case ErrorCode::InvalidRate: return "InvalidRate";
        case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorCode::ChannelMismatch: return "ChannelMismatch";
        case ErrorCode::UnpopulatedStats: return "UnpopulatedStats";
        case ErrorCode::GeometryUnsupported: return "GeometryUnsupported";
        case ErrorCode::NotFoldable: return "NotFoldable";
        case ErrorCode::MissingGrad: return "MissingGrad";
        case ErrorCode::FileMissing: return "FileMissing";
        case ErrorCode::CorruptRecord: return "CorruptRecord";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::Corrupt: return "Corrupt";
        case ErrorCode::InvalidDepth: return "InvalidDepth";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::UnresolvedShape: return "UnresolvedShape";
        case ErrorCode::NoSeriesLayers: return "NoSeriesLayers";
        case ErrorCode::InsufficientHistory: return "InsufficientHistory";
        case ErrorCode::SingleClass: return "SingleClass";
        case ErrorCode::InsufficientIters: return "InsufficientIters";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Internal: return "Internal";
    }
    return "Unknown";
}

}  // namespace lslu
