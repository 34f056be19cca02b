#include "gpm/te_roofline_model.hpp"

#include <algorithm>
#include <cmath>

#include "gpm/error.hpp"

namespace gpm {

std::string_view to_string(TePrecision p) {
    switch (p) {
    case TePrecision::FP32: return "FP32";
    case TePrecision::FP16: return "FP16";
    case TePrecision::FP8: return "FP8";
    }
    return "?";
}

std::optional<TePrecision> parse_te_precision(std::string_view s) {
    if (s == "FP32") return TePrecision::FP32;
    if (s == "FP16" || s == "BF16") return TePrecision::FP16;
    if (s == "FP8") return TePrecision::FP8;
    return std::nullopt;
}

std::string_view to_string(LlmDType t) {
    switch (t) {
    case LlmDType::FP32: return "FP32";
    case LlmDType::BF16: return "BF16";
    case LlmDType::FP8: return "FP8";
    }
    return "?";
}

std::optional<LlmDType> parse_llm_dtype(std::string_view s) {
    if (s == "FP32") return LlmDType::FP32;
    if (s == "BF16") return LlmDType::BF16;
    if (s == "FP8") return LlmDType::FP8;
    return std::nullopt;
}

const std::vector<LayerConfig>& table_layer_configs() {
    static const std::vector<LayerConfig> rows{
        {1024, 2816, 8}, {2048, 5632, 16}, {4096, 11008, 32}, {5120, 13824, 40}, {8192, 22016, 64}};
    return rows;
}

void validate_layer(const LayerConfig& c) {
    for (const auto& r : table_layer_configs())
        if (r.hidden == c.hidden && r.ffn == c.ffn && r.heads == c.heads && r.batch == c.batch &&
            r.seq_len == c.seq_len)
            return;
    throw ValidationError("layer config (hidden " + std::to_string(c.hidden) + ", ffn " + std::to_string(c.ffn) +
                          ", heads " + std::to_string(c.heads) + ") is not one of the parameterised rows");
}

std::optional<LayerConfig> layer_for_hidden(int hidden) {
    for (const auto& r : table_layer_configs())
        if (r.hidden == hidden) return r;
    return std::nullopt;
}

double LlmModelDesc::weight_bytes(LlmDType t) const {
    switch (t) {
    case LlmDType::FP32: return 4.0 * param_count;
    case LlmDType::BF16: return 2.0 * param_count;
    case LlmDType::FP8: return 1.0 * param_count;
    }
    return 0.0;
}

double LlmModelDesc::resident_bytes(LlmDType t) const {
    return t == LlmDType::FP8 ? 5.0 * param_count : weight_bytes(t);
}

const std::vector<LlmModelDesc>& llama_models() {
    static const std::vector<LlmModelDesc> m{{"llama-3B", 3e9}, {"llama-7B", 7e9}, {"llama-13B", 13e9}};
    return m;
}

std::optional<LlmModelDesc> find_llama(std::string_view name) {
    for (const auto& m : llama_models())
        if (m.name == name) return m;
    return std::nullopt;
}

double TeModel::precision_peak(const DeviceSpec& d, TePrecision p) const {
    switch (p) {
    case TePrecision::FP8:
        if (!d.features.fp8_tc) throw UnsupportedDtypeError(d.name + " has no FP8 tensor cores");
        return peak_tc_throughput_fp32_acc(d, DType::FP8_E4M3);
    case TePrecision::FP16: return peak_tc_throughput_fp32_acc(d, DType::FP16);
    case TePrecision::FP32: return peak_tc_throughput(d, DType::TF32, false);
    }
    return 0.0;
}

TeLinearParams TeModel::linear_params(const DeviceSpec& d) const {
    const double p16 = precision_peak(d, TePrecision::FP16) * 1e12;
    // parts without FP8 still need the ramp term; fit it as if FP8 doubled FP16
    const double p8 = (d.features.fp8_tc ? precision_peak(d, TePrecision::FP8) : 2.0 * precision_peak(d, TePrecision::FP16)) * 1e12;
    const double a16 = 2.0 / p16, a8 = 2.0 / p8;
    // t16 = a16 N^3 + tau N,  t8 = 2c N^2 + a8 N^3 + tau N,  t16 = r t8 at two anchors:
    //   2 r N^2 c + (r - 1) N tau = N^3 (a16 - r a8)
    auto row = [&](double n, double r) {
        return std::array<double, 3>{2.0 * r * n * n, (r - 1.0) * n, n * n * n * (a16 - r * a8)};
    };
    const auto e1 = row(static_cast<double>(kTeLargeN), kTeLargeRatio);
    const auto e2 = row(static_cast<double>(kTeSmallN), kTeSmallRatio);
    const double det = e1[0] * e2[1] - e1[1] * e2[0];
    TeLinearParams out;
    out.conv_s_per_elem = (e1[2] * e2[1] - e1[1] * e2[2]) / det;
    out.ramp_s_per_n = (e1[0] * e2[2] - e1[2] * e2[0]) / det;
    if (!(out.conv_s_per_elem > 0) || !(out.ramp_s_per_n > 0))
        throw ValidationError("TE linear overhead fit is not positive for " + d.name);
    return out;
}

double TeModel::te_linear_time(const DeviceSpec& d, const TeLinearPoint& pt) const {
    if (pt.n <= 0) throw ValidationError("N must be > 0");
    const double n = static_cast<double>(pt.n);
    const auto prm = linear_params(d);
    double t = 2.0 * n * n * n / (precision_peak(d, pt.dtype) * 1e12) + prm.ramp_s_per_n * n;
    if (pt.dtype == TePrecision::FP8) t += prm.conv_s_per_elem * 2.0 * n * n;  // input and weight cast
    return t;
}

double TeModel::te_linear_throughput(const DeviceSpec& d, const TeLinearPoint& pt) const {
    const double n = static_cast<double>(pt.n);
    return 2.0 * n * n * n / te_linear_time(d, pt) / 1e9;
}

double TeModel::linear_utilisation(const DeviceSpec& d, const TeLinearPoint& pt) const {
    const double n = static_cast<double>(pt.n);
    const double gemm = 2.0 * n * n * n / (precision_peak(d, pt.dtype) * 1e12);
    return gemm / (gemm + linear_params(d).ramp_s_per_n * n);
}

double TeModel::gemm_time(const DeviceSpec& d, double m, double k, double n, TePrecision p) const {
    return 2.0 * m * k * n / (precision_peak(d, p) * 1e12) + linear_params(d).ramp_s_per_n * std::cbrt(m * k * n);
}

namespace {

struct Gemm {
    double m, k, n;
};

std::vector<Gemm> layer_gemms(const LayerConfig& c) {
    const double t = static_cast<double>(c.batch) * c.seq_len;
    const double h = c.hidden, f = c.ffn;
    return {{t, h, 3 * h}, {t, h, h}, {t, h, 2 * f}, {t, f, h}};
}

// GEMM seconds saved per token*hidden element by running FP8 instead of FP16
double fp8_saving_per_elem(const DeviceSpec& d, const TeModel& te, const LayerConfig& c) {
    const double inv = 1.0 / (te.precision_peak(d, TePrecision::FP16) * 1e12) -
                       1.0 / (te.precision_peak(d, TePrecision::FP8) * 1e12);
    double flops = 0.0;
    for (const auto& g : layer_gemms(c)) flops += 2.0 * g.m * g.k * g.n;
    return flops * inv / (static_cast<double>(c.batch) * c.seq_len * c.hidden);
}

} // namespace

double TeModel::layer_cast_cost(const DeviceSpec& d) const {
    // put the FP8/FP16 break-even between the 4096 and 5120 rows
    return std::sqrt(fp8_saving_per_elem(d, *this, *layer_for_hidden(4096)) *
                     fp8_saving_per_elem(d, *this, *layer_for_hidden(5120)));
}

double TeModel::transformer_layer_latency(const DeviceSpec& d, const LayerConfig& c, TePrecision p) const {
    validate_layer(c);
    precision_peak(d, p);  // rejects FP8 where unsupported
    const double tokens = static_cast<double>(c.batch) * c.seq_len;
    double t = 0.0;
    for (const auto& g : layer_gemms(c)) t += gemm_time(d, g.m, g.k, g.n, p);

    // attention, softmax and activations are not quantised: 16-bit unless the layer is FP32
    const TePrecision other = p == TePrecision::FP32 ? TePrecision::FP32 : TePrecision::FP16;
    const double attn_flops = 4.0 * c.batch * static_cast<double>(c.seq_len) * c.seq_len * c.hidden;
    t += attn_flops / (precision_peak(d, other) * 1e12);
    const double elem = other == TePrecision::FP32 ? 4.0 : 2.0;
    const double moved = elem * (10.0 * tokens * c.hidden + 3.0 * tokens * c.ffn +
                                 3.0 * c.batch * static_cast<double>(c.heads) * c.seq_len * c.seq_len);
    t += moved / (d.mem_bandwidth_gbs * 1e9);

    if (p == TePrecision::FP8) t += layer_cast_cost(d) * tokens * c.hidden;
    return t * 1e3;
}

LlmBound TeModel::llm_decode_throughput(const DeviceSpec& d, const LlmModelDesc& m, LlmDType t,
                                        std::optional<double> measured) const {
    if (t == LlmDType::FP8 && !d.features.fp8_tc) throw UnsupportedDtypeError(d.name + " has no FP8 support");
    LlmBound b;
    b.resident_bytes = m.resident_bytes(t);
    if (b.resident_bytes > d.mem_bytes()) {
        b.out_of_memory = true;
        return b;
    }
    b.step_floor_s = m.weight_bytes(t) / (d.mem_bandwidth_gbs * 1e9);
    b.step_bound_tokens_s = m.batch / b.step_floor_s;
    b.bound_tokens_s = b.step_bound_tokens_s * (m.max_in_len + m.max_out_len) / m.max_out_len;
    if (measured) b.measured_ok = *measured <= b.bound_tokens_s;
    return b;
}

// ---------------------------------------------------------------------------

namespace {

struct Fp8Shape {
    int mantissa_bits;
    int min_exp;  // exponent of the smallest normal
    double max;
};

Fp8Shape shape_of(Fp8Format f) {
    return f == Fp8Format::E4M3 ? Fp8Shape{3, -6, 448.0} : Fp8Shape{2, -14, 57344.0};
}

} // namespace

double fp8_max(Fp8Format f) { return shape_of(f).max; }

double fp8_step(double x, Fp8Format f) {
    const auto s = shape_of(f);
    const double a = std::abs(x);
    const int e = a > 0 ? std::max(std::ilogb(a), s.min_exp) : s.min_exp;
    return std::ldexp(1.0, e - s.mantissa_bits);
}

double round_to_fp8(double x, Fp8Format f) {
    if (std::isnan(x)) return x;
    const auto s = shape_of(f);
    const double a = std::abs(x);
    if (a >= s.max) return std::copysign(s.max, x);
    const double step = fp8_step(a, f);
    double q = std::nearbyint(a / step) * step;  // ties to even under the default rounding mode
    q = std::min(q, s.max);
    return std::copysign(q, x);
}

Fp8Tensor quantize_fp8(std::span<const double> x, Fp8Format f) {
    Fp8Tensor t;
    t.format = f;
    double amax = 0.0;
    for (double v : x) amax = std::max(amax, std::abs(v));
    t.scale = amax > 0 ? amax / fp8_max(f) : 1.0;
    t.values.reserve(x.size());
    for (double v : x) t.values.push_back(round_to_fp8(v / t.scale, f));
    return t;
}

std::vector<double> dequantize_fp8(const Fp8Tensor& t) {
    std::vector<double> out;
    out.reserve(t.values.size());
    for (double v : t.values) out.push_back(v * t.scale);
    return out;
}

} // namespace gpm
