#pragma once

#include <optional>
#include <string_view>

#include "gpm/calibration_store.hpp"
#include "gpm/device_catalog.hpp"

namespace gpm {

enum class DpxFnClass { Relu16or32, SixteenBit, SimpleThreeInputMax };
enum class DpxMode { HardwareAccelerated, SoftwareEmulated };

std::string_view to_string(DpxFnClass c);
std::string_view to_string(DpxMode m);
std::optional<DpxFnClass> parse_dpx_class(std::string_view s);

DpxMode dpx_mode(const DeviceSpec& d);

// Class ratio of a hardware part over an emulating one. Two emulating parts compare
// at the calibrated emulated-pair ratio. Throws ValidationError when hw is emulated
// and sw is not.
double dpx_speedup(const CalibrationStore& cs, const DeviceSpec& hw, const DeviceSpec& sw, DpxFnClass fn);

// Relative throughput for `blocks` blocks: b / (S * ceil(b / S)), S = SM count.
double dpx_block_throughput(const DeviceSpec& d, DpxFnClass fn, long long blocks);


} // namespace gpm
