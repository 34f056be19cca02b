#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpm/calibration_store.hpp"
#include "gpm/context.hpp"
#include "gpm/report.hpp"

namespace gpm {

enum class WorkloadKind {
    MemLatency,
    MemThroughput,
    TcInstr,
    TcNSweep,
    Dpx,
    AsyncMatmul,
    RbcSweep,
    Histogram,
    TeLinear,
    TeLayer,
    LlmRoofline,
};

std::string_view to_string(WorkloadKind k);
std::optional<WorkloadKind> parse_workload_kind(std::string_view s);

struct SweepAxis {
    std::string param;
    std::vector<std::string> values;
};

struct WorkloadSpec {
    WorkloadKind kind = WorkloadKind::MemLatency;
    std::string device;   // may be empty when "device" is a sweep axis
    Params params;
    std::vector<SweepAxis> sweep;
};

// Throws UsageError naming the offending field.
WorkloadSpec parse_workload(std::string_view text, std::string_view source = "<memory>");
WorkloadSpec load_workload(const std::filesystem::path& path);
void validate_workload(const WorkloadSpec& w, const ModelContext& ctx);

// One row per sweep point in odometer order over the axes as declared.
// Points are evaluated on `threads` workers (0 = hardware concurrency).
PredictionReport run_workload(const ModelContext& ctx, const WorkloadSpec& w, unsigned threads = 0);

} // namespace gpm
