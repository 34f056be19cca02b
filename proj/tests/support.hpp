#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "gpm/context.hpp"

namespace gpm::test {

inline std::filesystem::path data_dir() { return GPM_TEST_DATA_DIR; }

// Loaded once per test binary; models only read from it.
inline const ModelContext& ctx() {
    static const ModelContext c = ModelContext::load(data_dir());
    return c;
}

inline const DeviceSpec& dev(std::string_view name) { return ctx().catalog.at(name); }

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("gpm_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

    void write(const std::filesystem::path& rel, const std::string& text) const {
        std::filesystem::create_directories((path_ / rel).parent_path());
        std::ofstream(path_ / rel, std::ios::binary) << text;
    }

private:
    std::filesystem::path path_;
};

} // namespace gpm::test
