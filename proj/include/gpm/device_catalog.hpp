#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpm/types.hpp"

namespace gpm {

enum class MemType { HBM2e, GDDR6X };

struct DeviceFeatures {
    bool dpx_hardware = false;
    bool dsm = false;
    bool fp8_tc = false;
};

struct CacheSizes {
    std::uint64_t l1_bytes = 0;
    std::uint64_t l2_bytes = 0;
};

struct DeviceSpec {
    std::string name;
    Architecture architecture = Architecture::Ampere;
    double compute_capability = 0.0;
    int sm_count = 0;
    int cores_per_sm = 0;
    double max_clock_mhz = 0.0;
    // Set when the part is observed running above its documented boost clock.
    std::optional<double> observed_clock_mhz;
    double mem_size_gib = 0.0;
    MemType mem_type = MemType::HBM2e;
    double mem_clock_mhz = 0.0;
    int mem_bus_bits = 0;
    double mem_bandwidth_gbs = 0.0;
    int tc_count = 0;
    int tc_generation = 0;
    double power_limit_w = 0.0;
    DeviceFeatures features;
    std::optional<CacheSizes> cache_sizes;
    // dense peaks keyed by dtype_key(); TFLOPS for float types, TOPS for integer
    std::map<std::string, double> tc_peaks;
    // per-API overrides (the wgmma tables quote a different TF32 peak)
    std::map<std::string, double> tc_peaks_wgmma;
    // dense peaks with FP32 accumulation where that runs below tc_peaks (GeForce half rate)
    std::map<std::string, double> tc_peaks_fp32_acc;

    // occupancy limits, datasheet values
    int max_threads_per_sm = 2048;
    int max_blocks_per_sm = 32;
    int max_warps_per_sm = 64;
    std::uint64_t smem_per_sm_bytes = 0;
    std::uint64_t smem_carveout_bytes = 0;

    // field name -> provenance note for values taken from external sources (datasheets, assumptions)
    std::map<std::string, std::string> provenance;

    double effective_clock_mhz() const { return observed_clock_mhz.value_or(max_clock_mhz); }
    double mem_bytes() const { return mem_size_gib * 1024.0 * 1024.0 * 1024.0; }
};

// Throws ValidationError naming the device and the offending field.
void validate_device(const DeviceSpec& d);

// Dense peak, doubled for 2:4 sparsity. Throws UnsupportedDtypeError when absent.
double peak_tc_throughput(const DeviceSpec& d, DType input, bool sparse, TcApi api = TcApi::Mma);
// Dense peak when accumulating in FP32.
double peak_tc_throughput_fp32_acc(const DeviceSpec& d, DType input);

class DeviceCatalog {
public:
    DeviceCatalog() = default;
    explicit DeviceCatalog(std::vector<DeviceSpec> devices);

    static DeviceCatalog load(const std::filesystem::path& path);
    static DeviceCatalog parse(std::string_view text, std::string_view source = "<memory>");

    const std::vector<DeviceSpec>& devices() const { return devices_; }
    const DeviceSpec* find(std::string_view name) const;
    // Throws UsageError for an unknown name.
    const DeviceSpec& at(std::string_view name) const;
    std::vector<std::string> names() const;
    bool empty() const { return devices_.empty(); }

private:
    std::vector<DeviceSpec> devices_;
};

std::string_view to_string(MemType m);

} // namespace gpm
