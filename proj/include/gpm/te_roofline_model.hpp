#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpm/calibration_store.hpp"
#include "gpm/device_catalog.hpp"

namespace gpm {

// FP16 stands for the 16-bit path (FP16 or BF16); the engine treats them alike.
enum class TePrecision { FP32, FP16, FP8 };

std::string_view to_string(TePrecision p);
std::optional<TePrecision> parse_te_precision(std::string_view s);

struct TeLinearPoint {
    long long n = 1024;
    TePrecision dtype = TePrecision::FP16;
};

// time(N) = conv * 2N^2 [FP8 only] + 2N^3 / P + ramp * N   (seconds)
// ramp*N folds launch and tile under-fill into a utilisation util(N) that rises with N.
struct TeLinearParams {
    double conv_s_per_elem = 0.0;
    double ramp_s_per_n = 0.0;
};

struct LayerConfig {
    int hidden = 1024;
    int ffn = 2816;
    int heads = 8;
    int batch = 4;
    int seq_len = 512;
};

const std::vector<LayerConfig>& table_layer_configs();
// Throws ValidationError unless the triple is one of the table rows.
void validate_layer(const LayerConfig& c);
std::optional<LayerConfig> layer_for_hidden(int hidden);

enum class LlmDType { FP32, BF16, FP8 };
std::string_view to_string(LlmDType t);
std::optional<LlmDType> parse_llm_dtype(std::string_view s);

struct LlmModelDesc {
    std::string name;
    double param_count = 0.0;
    int batch = 8;
    int max_in_len = 128;
    int max_out_len = 128;

    // bytes read per decode step
    double weight_bytes(LlmDType t) const;
    // bytes held on the device; FP8 keeps the FP32 master copy next to the FP8 copy
    double resident_bytes(LlmDType t) const;
};

const std::vector<LlmModelDesc>& llama_models();
std::optional<LlmModelDesc> find_llama(std::string_view name);

struct LlmBound {
    bool out_of_memory = false;
    double resident_bytes = 0.0;
    double step_floor_s = 0.0;
    double step_bound_tokens_s = 0.0;   // batch / step floor
    double bound_tokens_s = 0.0;        // (in + out) / time semantics
    std::optional<bool> measured_ok;
};

class TeModel {
public:
    explicit TeModel(const CalibrationStore& cs) : cs_(cs) {}

    // Peak used for a precision, TFLOPS. GEMMs accumulate in FP32; FP32 GEMMs run on TF32 tensor cores.
    double precision_peak(const DeviceSpec& d, TePrecision p) const;
    TeLinearParams linear_params(const DeviceSpec& d) const;
    double te_linear_time(const DeviceSpec& d, const TeLinearPoint& pt) const;
    double te_linear_throughput(const DeviceSpec& d, const TeLinearPoint& pt) const;  // GFLOPS
    double linear_utilisation(const DeviceSpec& d, const TeLinearPoint& pt) const;

    // FP8 cast cost per token*hidden element, seconds
    double layer_cast_cost(const DeviceSpec& d) const;
    double transformer_layer_latency(const DeviceSpec& d, const LayerConfig& c, TePrecision p) const;  // ms

    LlmBound llm_decode_throughput(const DeviceSpec& d, const LlmModelDesc& m, LlmDType t,
                                   std::optional<double> measured = std::nullopt) const;

private:
    double gemm_time(const DeviceSpec& d, double m, double k, double n, TePrecision p) const;
    const CalibrationStore& cs_;
};

// Fit targets for the linear-layer overhead terms.
inline constexpr long long kTeLargeN = 16384;
inline constexpr double kTeLargeRatio = 1.85;
inline constexpr long long kTeSmallN = 1024;
inline constexpr double kTeSmallRatio = 0.9;

enum class Fp8Format { E4M3, E5M2 };

double fp8_max(Fp8Format f);
// spacing of representable values around |x|
double fp8_step(double x, Fp8Format f);
// round to nearest even, saturating at the format's max finite value
double round_to_fp8(double x, Fp8Format f);

struct Fp8Tensor {
    std::vector<double> values;  // representable FP8 values
    double scale = 1.0;          // x ~= value * scale
    Fp8Format format = Fp8Format::E4M3;
};

// scale = max|x| / fp8_max, so the largest element lands on the format's top value.
Fp8Tensor quantize_fp8(std::span<const double> x, Fp8Format f);
std::vector<double> dequantize_fp8(const Fp8Tensor& t);

} // namespace gpm
