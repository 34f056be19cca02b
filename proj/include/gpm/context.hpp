#pragma once

#include <filesystem>

#include "gpm/calibration_store.hpp"
#include "gpm/device_catalog.hpp"

namespace gpm {

// Everything a model call needs. Immutable once loaded.
struct ModelContext {
    DeviceCatalog catalog;
    CalibrationStore store;
    std::filesystem::path data_dir;

    // <dir>/devices/paper_devices.json and <dir>/calib/paper_tables.csv
    static ModelContext load(const std::filesystem::path& dir);
};

// $GPM_DATA_DIR, else the data/ directory of the source tree.
std::filesystem::path default_data_dir();

std::string read_file(const std::filesystem::path& p);

} // namespace gpm
