#include "gpm/types.hpp"

#include <array>
#include <utility>

namespace gpm {

namespace {

constexpr std::array<std::pair<DType, std::string_view>, 11> kDTypes{{
    {DType::FP16, "FP16"},
    {DType::BF16, "BF16"},
    {DType::TF32, "TF32"},
    {DType::FP8_E4M3, "FP8_E4M3"},
    {DType::FP8_E5M2, "FP8_E5M2"},
    {DType::INT8, "INT8"},
    {DType::INT4, "INT4"},
    {DType::Binary, "Binary"},
    {DType::FP32, "FP32"},
    {DType::INT32, "INT32"},
    {DType::FP64, "FP64"},
}};

} // namespace

std::string_view to_string(Architecture a) {
    switch (a) {
    case Architecture::Ampere: return "Ampere";
    case Architecture::Ada: return "Ada";
    case Architecture::Hopper: return "Hopper";
    }
    return "?";
}

std::string_view to_string(DType t) {
    for (const auto& [d, s] : kDTypes)
        if (d == t) return s;
    return "?";
}

std::string_view to_string(TcApi api) { return api == TcApi::Mma ? "mma" : "wgmma"; }

std::optional<Architecture> parse_architecture(std::string_view s) {
    if (s == "Ampere") return Architecture::Ampere;
    if (s == "Ada") return Architecture::Ada;
    if (s == "Hopper") return Architecture::Hopper;
    return std::nullopt;
}

std::optional<DType> parse_dtype(std::string_view s) {
    if (s == "FP8") return DType::FP8_E4M3;
    if (s == "E4M3") return DType::FP8_E4M3;
    if (s == "E5M2") return DType::FP8_E5M2;
    for (const auto& [d, name] : kDTypes)
        if (name == s) return d;
    return std::nullopt;
}

std::optional<TcApi> parse_api(std::string_view s) {
    if (s == "mma") return TcApi::Mma;
    if (s == "wgmma") return TcApi::Wgmma;
    return std::nullopt;
}

std::string_view dtype_key(DType t) {
    if (t == DType::FP8_E4M3 || t == DType::FP8_E5M2) return "FP8";
    return to_string(t);
}

bool is_integer_dtype(DType t) {
    return t == DType::INT8 || t == DType::INT4 || t == DType::Binary || t == DType::INT32;
}

} // namespace gpm
