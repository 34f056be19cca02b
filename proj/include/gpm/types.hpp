#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace gpm {

enum class Architecture { Ampere, Ada, Hopper };

enum class DType { FP16, BF16, TF32, FP8_E4M3, FP8_E5M2, INT8, INT4, Binary, FP32, INT32, FP64 };

enum class TcApi { Mma, Wgmma };

std::string_view to_string(Architecture a);
std::string_view to_string(DType t);
std::string_view to_string(TcApi api);

std::optional<Architecture> parse_architecture(std::string_view s);
// Accepts the enum spellings plus "FP8" (read as E4M3).
std::optional<DType> parse_dtype(std::string_view s);
std::optional<TcApi> parse_api(std::string_view s);

// Key used for peaks and calibration lookups: both FP8 encodings collapse to "FP8".
std::string_view dtype_key(DType t);

bool is_integer_dtype(DType t);

} // namespace gpm
