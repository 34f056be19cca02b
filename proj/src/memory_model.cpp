#include "gpm/memory_model.hpp"

#include <algorithm>

#include "gpm/error.hpp"

namespace gpm {

std::string_view to_string(MemLevel l) {
    switch (l) {
    case MemLevel::L1: return "L1";
    case MemLevel::Shared: return "Shared";
    case MemLevel::L2: return "L2";
    case MemLevel::Global: return "Global";
    }
    return "?";
}

std::string_view to_string(MemAccessType t) {
    switch (t) {
    case MemAccessType::FP32: return "FP32";
    case MemAccessType::FP64: return "FP64";
    case MemAccessType::FP32v4: return "FP32v4";
    }
    return "?";
}

std::optional<MemLevel> parse_mem_level(std::string_view s) {
    for (auto l : {MemLevel::L1, MemLevel::Shared, MemLevel::L2, MemLevel::Global})
        if (to_string(l) == s) return l;
    return std::nullopt;
}

std::optional<MemAccessType> parse_access_type(std::string_view s) {
    for (auto t : {MemAccessType::FP32, MemAccessType::FP64, MemAccessType::FP32v4})
        if (to_string(t) == s) return t;
    return std::nullopt;
}

namespace {

std::string level_key(MemLevel l) {
    switch (l) {
    case MemLevel::L1: return "l1";
    case MemLevel::Shared: return "shared";
    case MemLevel::L2: return "l2";
    case MemLevel::Global: return "global";
    }
    return "?";
}

bool per_access(MemLevel l) { return l == MemLevel::L1 || l == MemLevel::L2; }

double fp64_pipe_rate(const CalibrationStore& cs, const DeviceSpec& d, MemLevel level) {
    const auto* r = cs.lookup(d.name, "mem.fp64_add_rate");
    if (!r) return -1.0;
    // the pipe rate is per SM; L2 is quoted for the whole chip
    return level == MemLevel::L2 ? r->value * d.sm_count : r->value;
}

} // namespace

std::string latency_metric(MemLevel l) { return "mem.latency." + level_key(l); }
std::string throughput_metric(MemLevel l) { return "mem.throughput." + level_key(l); }

double level_latency(const CalibrationStore& cs, const DeviceSpec& d, MemLevel level) {
    return cs.value(d.name, latency_metric(level));
}

Rate level_throughput(const CalibrationStore& cs, const DeviceSpec& d, MemLevel level, MemAccess access) {
    if (!access.valid()) throw ValidationError("FP32v4 access requires vector_width 4 (and only FP32v4 may use it)");
    Params p;
    if (per_access(level)) p["access"] = std::string(to_string(access.type));
    const auto& r = cs.require(d.name, throughput_metric(level), p);
    return {r.value, r.unit};
}

ClampedRate effective_cache_throughput(const CalibrationStore& cs, const DeviceSpec& d, MemLevel level,
                                       MemAccess access) {
    if (!per_access(level)) throw ValidationError("effective_cache_throughput covers L1 and L2 only");
    Rate measured = level_throughput(cs, d, level, access);
    if (access.type != MemAccessType::FP64) return {measured, false};
    const double pipe = fp64_pipe_rate(cs, d, level);
    if (pipe <= 0) return {measured, false};
    // what the cache moves when the ALU is not in the way
    double raw = 0.0;
    for (auto t : {MemAccessType::FP32, MemAccessType::FP32v4})
        raw = std::max(raw, level_throughput(cs, d, level, MemAccess::of(t)).value);
    ClampedRate out{measured, pipe < raw};
    out.rate.value = std::min(measured.value, pipe);
    return out;
}

double bytes_per_clk_to_gbs(double bytes_per_clk, const DeviceSpec& d) {
    return bytes_per_clk * d.effective_clock_mhz() * 1e6 / 1e9;
}

double l2_over_global_bw(const CalibrationStore& cs, const DeviceSpec& d) {
    double l2 = 0.0;
    for (auto t : {MemAccessType::FP32, MemAccessType::FP64, MemAccessType::FP32v4})
        l2 = std::max(l2, level_throughput(cs, d, MemLevel::L2, MemAccess::of(t)).value);
    const double global = level_throughput(cs, d, MemLevel::Global, {}).value;
    return bytes_per_clk_to_gbs(l2, d) / global;
}

LatencyRatios latency_ratios(const CalibrationStore& cs, const std::vector<DeviceSpec>& devices) {
    LatencyRatios r;
    if (devices.empty()) return r;
    for (const auto& d : devices) {
        const double l1 = level_latency(cs, d, MemLevel::L1);
        const double l2 = level_latency(cs, d, MemLevel::L2);
        const double gl = level_latency(cs, d, MemLevel::Global);
        r.avg_l2_over_l1 += l2 / l1;
        r.avg_global_over_l2 += gl / l2;
        r.l2_over_global_bw[d.name] = l2_over_global_bw(cs, d);
    }
    r.avg_l2_over_l1 /= static_cast<double>(devices.size());
    r.avg_global_over_l2 /= static_cast<double>(devices.size());
    return r;
}

double global_efficiency(const CalibrationStore& cs, const DeviceSpec& d) {
    return level_throughput(cs, d, MemLevel::Global, {}).value / d.mem_bandwidth_gbs;
}

MemLevel level_for_working_set(const DeviceSpec& d, std::uint64_t bytes) {
    if (!d.cache_sizes) throw FeatureUnsupportedError(d.name + " has no cache sizes; pass the level explicitly");
    if (bytes <= d.cache_sizes->l1_bytes) return MemLevel::L1;
    if (bytes <= d.cache_sizes->l2_bytes) return MemLevel::L2;
    return MemLevel::Global;
}

double pchase_latency(const CalibrationStore& cs, const DeviceSpec& d, std::uint64_t working_set_bytes) {
    return level_latency(cs, d, level_for_working_set(d, working_set_bytes));
}

} // namespace gpm
