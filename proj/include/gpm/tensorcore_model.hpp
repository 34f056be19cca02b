#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpm/calibration_store.hpp"
#include "gpm/device_catalog.hpp"
#include "gpm/types.hpp"

namespace gpm {

enum class OperandSource { RR, SS, RS };
enum class Init { Zero, Rand };

std::string_view to_string(OperandSource s);
std::string_view to_string(Init i);
std::optional<OperandSource> parse_source(std::string_view s);
std::optional<Init> parse_init(std::string_view s);

struct Shape {
    int m = 0;
    int n = 0;
    int k = 0;
    bool operator==(const Shape&) const = default;
};

// k is always the logical k of the instruction modifier (sparse k is 2x dense k).
struct TcInstrDesc {
    TcApi api = TcApi::Mma;
    bool sparse = false;
    Shape shape;
    DType a_type = DType::FP16;
    DType cd_type = DType::FP32;
    OperandSource source = OperandSource::RR;

    static TcInstrDesc mma(DType a, DType cd, Shape s, bool sparse = false);
    // m=64, k picked from the dtype (doubled when sparse)
    static TcInstrDesc wgmma(DType a, DType cd, int n, OperandSource src, bool sparse = false);

    std::string label() const;
};

// Dense k of the wgmma modifier for an input type, 0 when wgmma has no such type.
int wgmma_dense_k(DType a);

// Throws ValidationError.
void validate_instr(const TcInstrDesc& in);

struct LoweringResult {
    enum class Kind { TensorCoreSass, CudaCoreFallback, Unsupported };
    Kind kind = Kind::Unsupported;
    std::string name;

    bool supported() const { return kind != Kind::Unsupported; }
    bool operator==(const LoweringResult&) const = default;
};

std::string_view to_string(LoweringResult::Kind k);

// Static mapping; total (invalid combinations come back Unsupported).
LoweringResult sass_lower(const TcInstrDesc& in, Architecture arch);

// 2*m*n*k with the logical k.
double instr_ops(const TcInstrDesc& in);

// The dense wgmma latency rule, valid for N >= 64.
double wgmma_dense_latency_model(int n);

struct EnergyMetrics {
    double power_w = 0.0;
    double tflops_per_w = 0.0;
};

// The eight mma rows of the measured table (logical shapes).
std::vector<TcInstrDesc> mma_table_rows(bool sparse);
// Largest shape per dtype pair, the rows the energy table covers.
std::vector<TcInstrDesc> energy_table_rows(bool sparse);
// The six dtype rows of the N=256 wgmma tables.
std::vector<TcInstrDesc> wgmma_table_rows(OperandSource src, bool sparse);
// N sweep rows, FP16 in / FP32 accumulate.
std::vector<int> wgmma_n_values();

class TensorCoreModel {
public:
    explicit TensorCoreModel(const CalibrationStore& cs) : cs_(cs) {}

    double predict_latency(const DeviceSpec& d, const TcInstrDesc& in) const;
    // Calibrated value when recorded, otherwise the analytic route.
    double predict_throughput(const DeviceSpec& d, const TcInstrDesc& in, Init init) const;
    // Analytic route only: peak x efficiency_factor x throttle(init).
    double analytic_throughput(const DeviceSpec& d, const TcInstrDesc& in, Init init) const;
    double efficiency(const DeviceSpec& d, const TcInstrDesc& in, Init init) const;
    double sparse_speedup(const DeviceSpec& d, const TcInstrDesc& dense_instr) const;
    EnergyMetrics energy_metrics(const DeviceSpec& d, const TcInstrDesc& in) const;

    // Mean measured/peak over the N=256 zero-init rows for (api, sparse, source).
    double efficiency_factor(const DeviceSpec& d, TcApi api, bool sparse, OperandSource src) const;
    // Mean Rand/Zero over the N=256 rows of one dtype pair.
    double rand_throttle(const DeviceSpec& d, DType a, DType cd) const;

    const CalibrationStore& store() const { return cs_; }

private:
    void require_lowering(const DeviceSpec& d, const TcInstrDesc& in) const;
    const CalibRecord* lookup(const DeviceSpec& d, const TcInstrDesc& in, std::string_view what,
                              std::optional<Init> init) const;

    const CalibrationStore& cs_;
};

// Calibration params for an instruction; what = "latency" | "throughput".
Params tc_params(const TcInstrDesc& in, std::optional<Init> init, bool n_sweep_key);

} // namespace gpm
