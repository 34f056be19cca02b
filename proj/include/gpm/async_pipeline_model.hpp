#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpm/calibration_store.hpp"
#include "gpm/device_catalog.hpp"

namespace gpm {

enum class CopyMode { SyncShare, AsyncPipe };

std::string_view to_string(CopyMode m);
std::optional<CopyMode> parse_copy_mode(std::string_view s);

struct AsyncMatmulConfig {
    int block_dim = 8;      // square thread block, one output element per thread
    int blocks_per_sm = 1;
    int k_extent = 2048;
};

inline constexpr std::array<int, 3> kAsyncBlockDims{8, 16, 32};
inline constexpr std::array<int, 6> kAsyncBlocksPerSm{1, 2, 4, 8, 16, 32};

void validate_config(const AsyncMatmulConfig& cfg);

// Costs are per k-tile, in nanoseconds. Index 0/1/2 = block_dim 8/16/32.
//
// Two paths bound the time of one k-tile step on an SM:
//   latency path  (one block's dependency chain)  sync: Ce + P        async: max(Ce, P) + O
//   resource path (all resident blocks share the SM) sync: r(cr + pr) async: r(max(cr, pr) + o_r)
// and are merged with a smooth max of exponent `sharpness`. The exposed copy Ce shrinks
// as resident warps approach warp_saturation.
struct PipelineParams {
    std::array<double, 3> copy_cost{};
    std::array<double, 3> compute_cost{};
    double pipeline_overhead = 0.0;
    std::array<double, 3> copy_cost_resource{};
    std::array<double, 3> compute_cost_resource{};
    double resource_overhead = 0.0;
    double sharpness = 4.0;
    double warp_saturation = 8.0;

    static constexpr std::size_t kCount = 16;
    std::array<double, kCount> pack() const;
    static PipelineParams unpack(const std::array<double, kCount>& v);
    static const std::array<std::string_view, kCount>& names();
};

struct StepCosts {
    double exposed_copy = 0.0;
    double latency_sync = 0.0;
    double latency_async = 0.0;
    double resource_sync = 0.0;
    double resource_async = 0.0;
    double sync = 0.0;   // merged
    double async = 0.0;
};

int async_block_index(int block_dim);
// Resident blocks per SM after the warp limit.
int resident_blocks(const AsyncMatmulConfig& cfg, int max_warps_per_sm);
StepCosts step_costs(const PipelineParams& p, const AsyncMatmulConfig& cfg, int max_warps_per_sm);
double smooth_max(double a, double b, double k);

// GFLOPS for the whole device.
double model_throughput(const PipelineParams& p, int sm_count, int max_warps_per_sm, const AsyncMatmulConfig& cfg,
                        CopyMode mode);

class AsyncPipelineModel {
public:
    explicit AsyncPipelineModel(const CalibrationStore& cs) : cs_(cs) {}

    // Calibrated cell when recorded, model otherwise. Devices without fitted
    // parameters raise AbsentRecordError.
    double predict_matmul_throughput(const DeviceSpec& d, const AsyncMatmulConfig& cfg, CopyMode mode) const;
    double model_matmul_throughput(const DeviceSpec& d, const AsyncMatmulConfig& cfg, CopyMode mode) const;
    // Percent, mean over the blocks/SM column of (async - sync) / sync, from the model.
    double pipeline_improvement(const DeviceSpec& d, int block_dim) const;
    PipelineParams params(const DeviceSpec& d) const;

private:
    const CalibrationStore& cs_;
};

struct AsyncCell {
    int block_dim = 8;
    int blocks_per_sm = 1;
    CopyMode mode = CopyMode::SyncShare;
    double gflops = 0.0;
};

struct AsyncFitData {
    std::vector<AsyncCell> cells;
    std::array<double, 3> improvement_pct{};
    int sm_count = 0;
    int max_warps_per_sm = 64;
};

struct AsyncFitOptions {
    int starts = 48;
    int refine = 6;            // best LM starts handed to the minimax stage
    std::uint64_t seed = 20240117;
    double cell_scale = 0.0953101798043249;  // log(1.1): a 10% cell miss scores 1
    double improvement_scale = 2.0;          // points
    double improvement_weight = 5.0;
};

struct AsyncFitResult {
    PipelineParams params;
    double score = 0.0;            // max normalised miss, < 1 means every target is inside tolerance
    double worst_cell_rel = 0.0;
    std::array<double, 3> improvement_pct{};
};

AsyncFitData async_fit_data(const CalibrationStore& cs, const DeviceSpec& d);
AsyncFitResult fit_pipeline_params(const AsyncFitData& data, const AsyncFitOptions& opt = {});
std::vector<CalibRecord> pipeline_params_records(const std::string& device, const PipelineParams& p);

} // namespace gpm
