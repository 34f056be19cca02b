#include "gpm/device_catalog.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"

#include "gpm/context.hpp"
#include "gpm/error.hpp"

namespace gpm {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& device, const std::string& field, const std::string& why) {
    throw ValidationError("device '" + device + "': field '" + field + "' " + why);
}

// nlohmann reports byte offsets; turn them into line:col for the message.
std::string where(std::string_view text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return std::to_string(line) + ":" + std::to_string(col);
}

template <class T>
T field(const json& j, const std::string& dev, const char* name) {
    auto it = j.find(name);
    if (it == j.end()) bad(dev, name, "is missing");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        bad(dev, name, "has the wrong type");
    }
}

std::map<std::string, double> peaks(const json& j, const std::string& dev, const char* name) {
    std::map<std::string, double> out;
    auto it = j.find(name);
    if (it == j.end()) return out;
    if (!it->is_object()) bad(dev, name, "must be an object");
    for (const auto& [k, v] : it->items()) {
        if (!v.is_number()) bad(dev, std::string(name) + "." + k, "must be a number");
        out[k] = v.get<double>();
    }
    return out;
}

DeviceSpec from_json(const json& j) {
    if (!j.is_object()) throw FormatError("device entry is not an object");
    DeviceSpec d;
    d.name = field<std::string>(j, "?", "name");
    const auto& n = d.name;

    auto arch = parse_architecture(field<std::string>(j, n, "architecture"));
    if (!arch) bad(n, "architecture", "is not one of Ampere, Ada, Hopper");
    d.architecture = *arch;
    d.compute_capability = field<double>(j, n, "compute_capability");
    d.sm_count = field<int>(j, n, "sm_count");
    d.cores_per_sm = field<int>(j, n, "cores_per_sm");
    d.max_clock_mhz = field<double>(j, n, "max_clock_mhz");
    if (j.contains("observed_clock_mhz") && !j["observed_clock_mhz"].is_null())
        d.observed_clock_mhz = field<double>(j, n, "observed_clock_mhz");
    d.mem_size_gib = field<double>(j, n, "mem_size_gib");
    auto mt = field<std::string>(j, n, "mem_type");
    if (mt == "HBM2e")
        d.mem_type = MemType::HBM2e;
    else if (mt == "GDDR6X")
        d.mem_type = MemType::GDDR6X;
    else
        bad(n, "mem_type", "is not one of HBM2e, GDDR6X");
    d.mem_clock_mhz = field<double>(j, n, "mem_clock_mhz");
    d.mem_bus_bits = field<int>(j, n, "mem_bus_bits");
    d.mem_bandwidth_gbs = field<double>(j, n, "mem_bandwidth_gbs");
    d.tc_count = field<int>(j, n, "tc_count");
    d.tc_generation = field<int>(j, n, "tc_generation");
    d.power_limit_w = field<double>(j, n, "power_limit_w");

    const auto f = field<json>(j, n, "features");
    d.features.dpx_hardware = field<bool>(f, n, "dpx_hardware");
    d.features.dsm = field<bool>(f, n, "dsm");
    d.features.fp8_tc = field<bool>(f, n, "fp8_tc");

    if (j.contains("cache_sizes") && !j["cache_sizes"].is_null()) {
        const auto c = j["cache_sizes"];
        d.cache_sizes = CacheSizes{field<std::uint64_t>(c, n, "l1_bytes"), field<std::uint64_t>(c, n, "l2_bytes")};
    }
    d.tc_peaks = peaks(j, n, "tc_peaks");
    d.tc_peaks_wgmma = peaks(j, n, "tc_peaks_wgmma");
    d.tc_peaks_fp32_acc = peaks(j, n, "tc_peaks_fp32_acc");

    d.max_threads_per_sm = j.value("max_threads_per_sm", d.max_threads_per_sm);
    d.max_blocks_per_sm = j.value("max_blocks_per_sm", d.max_blocks_per_sm);
    d.max_warps_per_sm = j.value("max_warps_per_sm", d.max_warps_per_sm);
    d.smem_per_sm_bytes = j.value("smem_per_sm_bytes", std::uint64_t{0});
    d.smem_carveout_bytes = j.value("smem_carveout_bytes", d.smem_per_sm_bytes);
    if (j.contains("provenance")) d.provenance = j["provenance"].get<std::map<std::string, std::string>>();
    return d;
}

} // namespace

std::string_view to_string(MemType m) { return m == MemType::HBM2e ? "HBM2e" : "GDDR6X"; }

void validate_device(const DeviceSpec& d) {
    const auto& n = d.name;
    if (n.empty()) bad("?", "name", "is empty");
    if (d.sm_count <= 0) bad(n, "sm_count", "must be > 0");
    if (d.tc_count != 4 * d.sm_count)
        bad(n, "tc_count", "must equal 4 x sm_count (" + std::to_string(4 * d.sm_count) + "), got " +
                               std::to_string(d.tc_count));
    if (!(d.mem_bandwidth_gbs > 0)) bad(n, "mem_bandwidth_gbs", "must be > 0");
    if (!(d.power_limit_w > 0)) bad(n, "power_limit_w", "must be > 0");
    if (!(d.max_clock_mhz > 0)) bad(n, "max_clock_mhz", "must be > 0");
    if (d.observed_clock_mhz && !(*d.observed_clock_mhz > 0)) bad(n, "observed_clock_mhz", "must be > 0");
    if (!(d.mem_size_gib > 0)) bad(n, "mem_size_gib", "must be > 0");
    if (d.cores_per_sm <= 0) bad(n, "cores_per_sm", "must be > 0");
    if (d.architecture != Architecture::Hopper) {
        if (d.features.dsm) bad(n, "features.dsm", "is only valid on Hopper");
        if (d.features.dpx_hardware) bad(n, "features.dpx_hardware", "is only valid on Hopper");
    }
    for (const auto* m : {&d.tc_peaks, &d.tc_peaks_wgmma, &d.tc_peaks_fp32_acc})
        for (const auto& [k, v] : *m)
            if (!(v > 0) || !std::isfinite(v)) bad(n, "tc_peaks." + k, "must be a positive number");
    if (d.max_threads_per_sm <= 0) bad(n, "max_threads_per_sm", "must be > 0");
    if (d.max_blocks_per_sm <= 0) bad(n, "max_blocks_per_sm", "must be > 0");
    if (d.max_warps_per_sm * 32 != d.max_threads_per_sm)
        bad(n, "max_warps_per_sm", "must equal max_threads_per_sm / 32");
}

double peak_tc_throughput(const DeviceSpec& d, DType input, bool sparse, TcApi api) {
    const std::string key(dtype_key(input));
    const double* v = nullptr;
    if (api == TcApi::Wgmma) {
        if (auto it = d.tc_peaks_wgmma.find(key); it != d.tc_peaks_wgmma.end()) v = &it->second;
    }
    if (!v) {
        if (auto it = d.tc_peaks.find(key); it != d.tc_peaks.end()) v = &it->second;
    }
    if (!v) throw UnsupportedDtypeError(d.name + " has no tensor-core peak for " + key);
    return sparse ? 2.0 * *v : *v;
}

double peak_tc_throughput_fp32_acc(const DeviceSpec& d, DType input) {
    if (auto it = d.tc_peaks_fp32_acc.find(std::string(dtype_key(input))); it != d.tc_peaks_fp32_acc.end())
        return it->second;
    return peak_tc_throughput(d, input, false);
}

DeviceCatalog::DeviceCatalog(std::vector<DeviceSpec> devices) : devices_(std::move(devices)) {
    std::set<std::string> seen;
    for (const auto& d : devices_) {
        validate_device(d);
        if (!seen.insert(d.name).second) throw ValidationError("device '" + d.name + "': duplicate name");
    }
    std::sort(devices_.begin(), devices_.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
}

DeviceCatalog DeviceCatalog::parse(std::string_view text, std::string_view source) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string(source) + ":" + where(text, e.byte == 0 ? 0 : e.byte - 1) +
                          ": invalid device JSON: " + e.what());
    }
    if (!doc.is_array()) throw FormatError(std::string(source) + ": expected a JSON array of device objects");
    std::vector<DeviceSpec> out;
    for (const auto& j : doc) out.push_back(from_json(j));
    return DeviceCatalog(std::move(out));
}

DeviceCatalog DeviceCatalog::load(const std::filesystem::path& path) {
    return parse(read_file(path), path.string());
}

const DeviceSpec* DeviceCatalog::find(std::string_view name) const {
    for (const auto& d : devices_)
        if (d.name == name) return &d;
    return nullptr;
}

const DeviceSpec& DeviceCatalog::at(std::string_view name) const {
    if (const auto* d = find(name)) return *d;
    throw UsageError("unknown device '" + std::string(name) + "'");
}

std::vector<std::string> DeviceCatalog::names() const {
    std::vector<std::string> out;
    for (const auto& d : devices_) out.push_back(d.name);
    return out;
}

} // namespace gpm
