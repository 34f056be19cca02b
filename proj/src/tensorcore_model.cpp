#include "gpm/tensorcore_model.hpp"

#include <algorithm>
#include <vector>

#include "gpm/error.hpp"

namespace gpm {

std::string_view to_string(OperandSource s) {
    switch (s) {
    case OperandSource::RR: return "RR";
    case OperandSource::SS: return "SS";
    case OperandSource::RS: return "RS";
    }
    return "?";
}

std::string_view to_string(Init i) { return i == Init::Zero ? "Zero" : "Rand"; }

std::optional<OperandSource> parse_source(std::string_view s) {
    if (s == "RR") return OperandSource::RR;
    if (s == "SS") return OperandSource::SS;
    if (s == "RS") return OperandSource::RS;
    return std::nullopt;
}

std::optional<Init> parse_init(std::string_view s) {
    if (s == "Zero") return Init::Zero;
    if (s == "Rand") return Init::Rand;
    return std::nullopt;
}

std::string_view to_string(LoweringResult::Kind k) {
    switch (k) {
    case LoweringResult::Kind::TensorCoreSass: return "TensorCoreSass";
    case LoweringResult::Kind::CudaCoreFallback: return "CudaCoreFallback";
    case LoweringResult::Kind::Unsupported: return "Unsupported";
    }
    return "?";
}

namespace {


bool accum_ok(DType a, DType cd) {
    switch (a) {
    case DType::FP16: return cd == DType::FP16 || cd == DType::FP32;
    case DType::BF16:
    case DType::TF32: return cd == DType::FP32;
    case DType::FP8_E4M3:
    case DType::FP8_E5M2: return cd == DType::FP16 || cd == DType::FP32;
    case DType::INT8:
    case DType::INT4:
    case DType::Binary: return cd == DType::INT32;
    default: return false;
    }
}

// dense k values of mma.m16n8kK per input type
std::vector<int> mma_dense_ks(DType a) {
    switch (a) {
    case DType::FP16:
    case DType::BF16: return {8, 16};
    case DType::TF32: return {4, 8};
    case DType::INT8: return {16, 32};
    case DType::FP8_E4M3:
    case DType::FP8_E5M2: return {32};
    case DType::INT4: return {32, 64};
    case DType::Binary: return {128, 256};
    default: return {};
    }
}

std::string mnk(const Shape& s) { return std::to_string(s.m) + std::to_string(s.n) + std::to_string(s.k); }

std::string fp8_name(DType t) { return t == DType::FP8_E5M2 ? "E5M2" : "E4M3"; }

std::string shape_text(const Shape& s) {
    return "m" + std::to_string(s.m) + "n" + std::to_string(s.n) + "k" + std::to_string(s.k);
}

LoweringResult sass(std::string name) { return {LoweringResult::Kind::TensorCoreSass, std::move(name)}; }

} // namespace

int wgmma_dense_k(DType a) {
    switch (a) {
    case DType::FP16:
    case DType::BF16: return 16;
    case DType::TF32: return 8;
    case DType::FP8_E4M3:
    case DType::FP8_E5M2:
    case DType::INT8: return 32;
    case DType::Binary: return 256;
    default: return 0;
    }
}

TcInstrDesc TcInstrDesc::mma(DType a, DType cd, Shape s, bool sparse) {
    return {TcApi::Mma, sparse, s, a, cd, OperandSource::RR};
}

TcInstrDesc TcInstrDesc::wgmma(DType a, DType cd, int n, OperandSource src, bool sparse) {
    return {TcApi::Wgmma, sparse, {64, n, wgmma_dense_k(a) * (sparse ? 2 : 1)}, a, cd, src};
}

std::string TcInstrDesc::label() const {
    std::string s(to_string(api));
    if (sparse) s += ".sp";
    s += "." + shape_text(shape) + "." + std::string(to_string(cd_type)) + "." + std::string(to_string(a_type));
    if (api == TcApi::Wgmma) s += "." + std::string(to_string(source));
    return s;
}

void validate_instr(const TcInstrDesc& in) {
    const std::string l = in.label();
    if (!accum_ok(in.a_type, in.cd_type)) throw ValidationError(l + ": accumulator type not valid for the input type");
    if (in.api == TcApi::Mma) {
        if (in.source != OperandSource::RR) throw ValidationError(l + ": mma operands come from registers (RR)");
        if (in.shape.m != 16 || in.shape.n != 8) throw ValidationError(l + ": mma shape must be m16n8kK");
        auto ks = mma_dense_ks(in.a_type);
        if (in.sparse) {
            if (in.a_type == DType::Binary) throw ValidationError(l + ": no sparse binary mma");
            for (auto& k : ks) k *= 2;
        }
        if (std::find(ks.begin(), ks.end(), in.shape.k) == ks.end())
            throw ValidationError(l + ": k not valid for this type" + (in.sparse ? " (sparse k is 2x dense k)" : ""));
        return;
    }
    if (in.source == OperandSource::RR) throw ValidationError(l + ": wgmma source must be SS or RS");
    if (in.shape.m != 64) throw ValidationError(l + ": wgmma m must be 64");
    if (in.shape.n < 8 || in.shape.n > 256 || in.shape.n % 8 != 0)
        throw ValidationError(l + ": wgmma N must be a multiple of 8 in [8, 256]");
    const int k = wgmma_dense_k(in.a_type);
    if (k == 0) throw ValidationError(l + ": wgmma has no such input type");
    if (in.shape.k != k * (in.sparse ? 2 : 1))
        throw ValidationError(l + ": k must be " + std::to_string(k * (in.sparse ? 2 : 1)));
}

LoweringResult sass_lower(const TcInstrDesc& in, Architecture arch) {
    if (!accum_ok(in.a_type, in.cd_type)) return {};
    const std::string cd = in.cd_type == DType::FP16 ? "F16" : "F32";
    const std::string sp = in.sparse ? ".SP" : "";

    if (in.api == TcApi::Wgmma) {
        if (arch != Architecture::Hopper) return {};
        const std::string shp = "64x" + std::to_string(in.shape.n) + "x" + std::to_string(in.shape.k);
        switch (in.a_type) {
        case DType::FP16: return sass("HGMMA" + sp + "." + shp + "." + cd);
        case DType::BF16: return sass("HGMMA" + sp + "." + shp + ".F32.BF16");
        case DType::TF32: return sass("HGMMA" + sp + "." + shp + ".F32.TF32");
        case DType::FP8_E4M3:
        case DType::FP8_E5M2: {
            const auto f = fp8_name(in.a_type);
            return sass("QGMMA" + sp + "." + shp + "." + cd + "." + f + "." + f);
        }
        case DType::INT8: return sass("IGMMA" + sp + "." + shp + ".S8.S8");
        case DType::Binary: return sass("BGMMA" + sp + "." + shp + ".AND.POPC");
        default: return {};  // INT4 has no wgmma form
        }
    }

    switch (in.a_type) {
    case DType::FP16: return sass("HMMA" + sp + "." + mnk(in.shape) + "." + cd);
    case DType::BF16: return sass("HMMA" + sp + "." + mnk(in.shape) + ".F32.BF16");
    case DType::TF32: return sass("HMMA" + sp + "." + mnk(in.shape) + ".F32.TF32");
    case DType::INT8: return sass("IMMA" + sp + "." + mnk(in.shape) + ".S8.S8");
    case DType::INT4:
        if (arch == Architecture::Hopper) return {LoweringResult::Kind::CudaCoreFallback, "IMAD.MOV.U32"};
        return sass("IMMA" + sp + "." + mnk(in.shape) + ".S4.S4");
    case DType::Binary: return sass("BMMA" + sp + "." + mnk(in.shape) + ".AND.POPC");
    default: return {};  // FP8 has no mma form
    }
}

double instr_ops(const TcInstrDesc& in) {
    return 2.0 * in.shape.m * static_cast<double>(in.shape.n) * in.shape.k;
}

double wgmma_dense_latency_model(int n) { return n / 2.0; }

std::vector<TcInstrDesc> mma_table_rows(bool sparse) {
    const int f = sparse ? 2 : 1;
    std::vector<TcInstrDesc> rows;
    for (auto [a, cd, k] : std::vector<std::tuple<DType, DType, int>>{{DType::FP16, DType::FP16, 8},
                                                                      {DType::FP16, DType::FP16, 16},
                                                                      {DType::FP16, DType::FP32, 8},
                                                                      {DType::FP16, DType::FP32, 16},
                                                                      {DType::TF32, DType::FP32, 4},
                                                                      {DType::TF32, DType::FP32, 8},
                                                                      {DType::INT8, DType::INT32, 16},
                                                                      {DType::INT8, DType::INT32, 32}})
        rows.push_back(TcInstrDesc::mma(a, cd, {16, 8, k * f}, sparse));
    return rows;
}

std::vector<TcInstrDesc> energy_table_rows(bool sparse) {
    auto all = mma_table_rows(sparse);
    return {all[1], all[3], all[5], all[7]};
}

std::vector<TcInstrDesc> wgmma_table_rows(OperandSource src, bool sparse) {
    std::vector<TcInstrDesc> rows;
    for (auto [a, cd] : std::vector<std::pair<DType, DType>>{{DType::FP16, DType::FP16},
                                                            {DType::FP16, DType::FP32},
                                                            {DType::TF32, DType::FP32},
                                                            {DType::FP8_E4M3, DType::FP16},
                                                            {DType::FP8_E4M3, DType::FP32},
                                                            {DType::INT8, DType::INT32}})
        rows.push_back(TcInstrDesc::wgmma(a, cd, 256, src, sparse));
    return rows;
}

std::vector<int> wgmma_n_values() { return {8, 16, 32, 64, 128, 256}; }

Params tc_params(const TcInstrDesc& in, std::optional<Init> init, bool n_sweep_key) {
    Params p;
    p["sparse"] = in.sparse ? "true" : "false";
    if (in.api == TcApi::Mma) {
        p["a"] = std::string(dtype_key(in.a_type));
        p["cd"] = std::string(dtype_key(in.cd_type));
        Shape printed = in.shape;
        if (in.sparse) {
            // the table prints the compressed k
            printed.k /= 2;
            p["k_is_compressed"] = "true";
        }
        p["shape"] = shape_text(printed);
        return p;
    }
    p["N"] = std::to_string(in.shape.n);
    p["source"] = std::string(to_string(in.source));
    if (!n_sweep_key) {
        p["a"] = std::string(dtype_key(in.a_type));
        p["cd"] = std::string(dtype_key(in.cd_type));
    }
    if (init) p["init"] = std::string(to_string(*init));
    return p;
}

void TensorCoreModel::require_lowering(const DeviceSpec& d, const TcInstrDesc& in) const {
    auto low = sass_lower(in, d.architecture);
    if (!low.supported())
        throw UnsupportedInstructionError(in.label() + " does not lower to a tensor-core instruction on " + d.name);
    validate_instr(in);
}

const CalibRecord* TensorCoreModel::lookup(const DeviceSpec& d, const TcInstrDesc& in, std::string_view what,
                                           std::optional<Init> init) const {
    if (in.api == TcApi::Mma) {
        // mma tables carry no init dimension; they are zero-init runs
        if (init == Init::Rand) return nullptr;
        return cs_.lookup(d.name, "tc.mma." + std::string(what), tc_params(in, std::nullopt, false));
    }
    const std::string metric = "tc.wgmma." + std::string(what);
    if (in.a_type == DType::FP16 && in.cd_type == DType::FP32)
        if (const auto* r = cs_.lookup(d.name, metric, tc_params(in, init, true))) return r;
    return cs_.lookup(d.name, metric, tc_params(in, init, false));
}

double TensorCoreModel::predict_latency(const DeviceSpec& d, const TcInstrDesc& in) const {
    require_lowering(d, in);
    if (const auto* r = lookup(d, in, "latency", std::nullopt)) return r->value;
    if (in.api == TcApi::Wgmma && !in.sparse && in.shape.n >= 64) return wgmma_dense_latency_model(in.shape.n);
    throw AbsentRecordError("no latency record or model for " + in.label() + " on " + d.name);
}

double TensorCoreModel::predict_throughput(const DeviceSpec& d, const TcInstrDesc& in, Init init) const {
    require_lowering(d, in);
    if (const auto* r = lookup(d, in, "throughput", init)) return r->value;
    return analytic_throughput(d, in, init);
}

double TensorCoreModel::analytic_throughput(const DeviceSpec& d, const TcInstrDesc& in, Init init) const {
    require_lowering(d, in);
    if (in.api != TcApi::Wgmma || in.sparse || in.shape.n < 64)
        throw AbsentRecordError("no throughput record or model for " + in.label() + " on " + d.name);
    double t = peak_tc_throughput(d, in.a_type, false, TcApi::Wgmma) *
               efficiency_factor(d, TcApi::Wgmma, false, in.source);
    if (init == Init::Rand) t *= rand_throttle(d, in.a_type, in.cd_type);
    return t;
}

double TensorCoreModel::efficiency(const DeviceSpec& d, const TcInstrDesc& in, Init init) const {
    return predict_throughput(d, in, init) / peak_tc_throughput(d, in.a_type, in.sparse, in.api);
}

double TensorCoreModel::sparse_speedup(const DeviceSpec& d, const TcInstrDesc& dense_instr) const {
    TcInstrDesc dense = dense_instr;
    dense.sparse = false;
    TcInstrDesc sparse = dense;
    sparse.sparse = true;
    sparse.shape.k *= 2;
    require_lowering(d, dense);
    require_lowering(d, sparse);
    const auto* rd = lookup(d, dense, "throughput", Init::Zero);
    const auto* rs = lookup(d, sparse, "throughput", Init::Zero);
    if (!rd || !rs) throw AbsentRecordError("sparse speedup needs both records for " + dense.label() + " on " + d.name);
    return rs->value / rd->value;
}

EnergyMetrics TensorCoreModel::energy_metrics(const DeviceSpec& d, const TcInstrDesc& in) const {
    const auto rows = energy_table_rows(in.sparse);
    auto same = [&](const TcInstrDesc& r) {
        return r.api == in.api && r.shape == in.shape && r.a_type == in.a_type && r.cd_type == in.cd_type;
    };
    if (std::none_of(rows.begin(), rows.end(), same))
        throw AbsentRecordError("energy is only recorded for the largest mma shape per type, not " + in.label());
    Params p{{"a", std::string(dtype_key(in.a_type))},
             {"cd", std::string(dtype_key(in.cd_type))},
             {"sparse", in.sparse ? "true" : "false"}};
    return {cs_.value(d.name, "tc.energy.power", p), cs_.value(d.name, "tc.energy.efficiency", p)};
}

double TensorCoreModel::efficiency_factor(const DeviceSpec& d, TcApi api, bool sparse, OperandSource src) const {
    std::vector<TcInstrDesc> rows = api == TcApi::Mma ? mma_table_rows(sparse) : wgmma_table_rows(src, sparse);
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows) {
        const auto* rec = lookup(d, r, "throughput", Init::Zero);
        if (!rec) continue;
        double peak = 0.0;
        try {
            peak = peak_tc_throughput(d, r.a_type, sparse, api);
        } catch (const UnsupportedDtypeError&) {
            continue;
        }
        sum += rec->value / peak;
        ++n;
    }
    if (n == 0)
        throw AbsentRecordError("no calibrated rows to derive a " + std::string(to_string(api)) + " efficiency for " +
                                d.name);
    return sum / n;
}

double TensorCoreModel::rand_throttle(const DeviceSpec& d, DType a, DType cd) const {
    double sum = 0.0;
    int n = 0;
    for (bool sparse : {false, true})
        for (auto src : {OperandSource::SS, OperandSource::RS}) {
            auto in = TcInstrDesc::wgmma(a, cd, 256, src, sparse);
            const auto* z = cs_.lookup(d.name, "tc.wgmma.throughput", tc_params(in, Init::Zero, false));
            const auto* r = cs_.lookup(d.name, "tc.wgmma.throughput", tc_params(in, Init::Rand, false));
            if (!z || !r) continue;
            sum += r->value / z->value;
            ++n;
        }
    if (n == 0)
        throw AbsentRecordError("no zero/rand pairs to derive a throttle for " + std::string(dtype_key(a)) + "/" +
                                std::string(dtype_key(cd)) + " on " + d.name);
    return sum / n;
}

} // namespace gpm
