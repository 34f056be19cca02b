#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpm/calibration_store.hpp"
#include "gpm/device_catalog.hpp"

namespace gpm {

enum class MemLevel { L1, Shared, L2, Global };
enum class MemAccessType { FP32, FP64, FP32v4 };

struct MemAccess {
    MemAccessType type = MemAccessType::FP32;
    int vector_width = 1;

    static MemAccess of(MemAccessType t) { return {t, t == MemAccessType::FP32v4 ? 4 : 1}; }
    bool valid() const { return (type == MemAccessType::FP32v4) == (vector_width == 4) && vector_width >= 1; }
};

struct Rate {
    double value = 0.0;
    Unit unit = Unit::bytes_per_clk_sm;
};

struct ClampedRate {
    Rate rate;
    bool clamped = false;
};

struct LatencyRatios {
    double avg_l2_over_l1 = 0.0;
    double avg_global_over_l2 = 0.0;
    std::map<std::string, double> l2_over_global_bw;
};

std::string_view to_string(MemLevel l);
std::string_view to_string(MemAccessType t);
std::optional<MemLevel> parse_mem_level(std::string_view s);
std::optional<MemAccessType> parse_access_type(std::string_view s);

// calibration metric ids for a level
std::string latency_metric(MemLevel l);
std::string throughput_metric(MemLevel l);

double level_latency(const CalibrationStore& cs, const DeviceSpec& d, MemLevel level);

// bytes/clk/SM for L1 and Shared, bytes/clk for L2, GB/s for Global. Global and
// Shared have a single measurement; the access type is ignored there.
Rate level_throughput(const CalibrationStore& cs, const DeviceSpec& d, MemLevel level, MemAccess access);

// FP64 accesses on parts with a 16 B/clk/SM FP64 add pipe are bounded by the pipe,
// not the cache. Only L1 and L2.
ClampedRate effective_cache_throughput(const CalibrationStore& cs, const DeviceSpec& d, MemLevel level,
                                       MemAccess access);

// L2 rate at the device clock over the measured global rate.
double l2_over_global_bw(const CalibrationStore& cs, const DeviceSpec& d);
LatencyRatios latency_ratios(const CalibrationStore& cs, const std::vector<DeviceSpec>& devices);

// measured global GB/s over the device's theoretical bandwidth
double global_efficiency(const CalibrationStore& cs, const DeviceSpec& d);

double bytes_per_clk_to_gbs(double bytes_per_clk, const DeviceSpec& d);

// Capacity-based level pick for a pointer-chase working set. Needs cache_sizes.
MemLevel level_for_working_set(const DeviceSpec& d, std::uint64_t bytes);
double pchase_latency(const CalibrationStore& cs, const DeviceSpec& d, std::uint64_t working_set_bytes);

} // namespace gpm
