#include "gpm/dpx_model.hpp"

#include "gpm/error.hpp"

namespace gpm {

std::string_view to_string(DpxFnClass c) {
    switch (c) {
    case DpxFnClass::Relu16or32: return "Relu16or32";
    case DpxFnClass::SixteenBit: return "SixteenBit";
    case DpxFnClass::SimpleThreeInputMax: return "SimpleThreeInputMax";
    }
    return "?";
}

std::string_view to_string(DpxMode m) {
    return m == DpxMode::HardwareAccelerated ? "HardwareAccelerated" : "SoftwareEmulated";
}

std::optional<DpxFnClass> parse_dpx_class(std::string_view s) {
    for (auto c : {DpxFnClass::Relu16or32, DpxFnClass::SixteenBit, DpxFnClass::SimpleThreeInputMax})
        if (to_string(c) == s) return c;
    return std::nullopt;
}

DpxMode dpx_mode(const DeviceSpec& d) {
    return d.architecture == Architecture::Hopper ? DpxMode::HardwareAccelerated : DpxMode::SoftwareEmulated;
}

double dpx_speedup(const CalibrationStore& cs, const DeviceSpec& hw, const DeviceSpec& sw, DpxFnClass fn) {
    const auto mh = dpx_mode(hw), ms = dpx_mode(sw);
    if (mh == DpxMode::SoftwareEmulated && ms == DpxMode::SoftwareEmulated)
        return cs.value("ALL", "dpx.speedup.emulated_pair");
    if (mh != DpxMode::HardwareAccelerated || ms != DpxMode::SoftwareEmulated)
        throw ValidationError("dpx_speedup wants a hardware part first and an emulating part second");
    // Only the SM-class ratio against A100 is quoted; the emulated pair being ~1
    // lets the same number stand for RTX4090.
    const Params p{{"class", std::string(to_string(fn))}, {"vs", "A100"}};
    if (const auto* r = cs.lookup(hw.name, "dpx.speedup.max", p)) {
        const double pair = sw.name == "A100" ? 1.0 : cs.value("ALL", "dpx.speedup.emulated_pair");
        return r->value * pair;
    }
    throw AbsentRecordError("no DPX speedup anchor for class " + std::string(to_string(fn)) + " on " + hw.name);
}

double dpx_block_throughput(const DeviceSpec& d, DpxFnClass, long long blocks) {
    if (blocks < 0) throw ValidationError("block count must be >= 0");
    if (blocks == 0) return 0.0;
    const long long s = d.sm_count;
    const long long waves = (blocks + s - 1) / s;
    return static_cast<double>(blocks) / static_cast<double>(s * waves);
}

} // namespace gpm
