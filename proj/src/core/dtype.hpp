#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace lslu {

enum class DType : uint8_t { F32 = 0, F64 = 1 };

inline size_t dtype_size(DType dt) { return dt == DType::F32 ? 4 : 8; }

inline const char* dtype_name(DType dt) { return dt == DType::F32 ? "f32" : "f64"; }

// Invokes f with a value of the scalar type selected by dt.
template <class F>
decltype(auto) dispatch_dtype(DType dt, F&& f) {
    if (dt == DType::F32) return f(float{});
    return f(double{});
}

}  // namespace lslu
