#include "gpm/context.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gpm/error.hpp"

#ifndef GPM_DEFAULT_DATA_DIR
#define GPM_DEFAULT_DATA_DIR "data"
#endif

namespace gpm {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("GPM_DATA_DIR"); env && *env) return env;
    return GPM_DEFAULT_DATA_DIR;
}

ModelContext ModelContext::load(const std::filesystem::path& dir) {
    ModelContext ctx;
    ctx.data_dir = dir;
    ctx.catalog = DeviceCatalog::load(dir / "devices" / "paper_devices.json");
    ctx.store.ingest_file(dir / "calib" / "paper_tables.csv");
    return ctx;
}

} // namespace gpm
