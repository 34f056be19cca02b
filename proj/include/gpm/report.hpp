#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpm/calibration_store.hpp"

namespace gpm {

struct ReportRow {
    std::string device;
    std::string kind;
    Params params;
    std::string metric;
    std::optional<double> predicted;
    std::string unit;
    std::optional<double> calibrated;
    std::optional<double> rel_error;
    std::string status = "ok";  // ok | uncalibrated | unsupported | oom
    std::string provenance;
    std::string note;

    bool operator==(const ReportRow&) const = default;
};

struct PredictionReport {
    std::vector<ReportRow> rows;
    bool operator==(const PredictionReport&) const = default;
};

enum class ReportFormat { csv, json, md };

std::optional<ReportFormat> parse_report_format(std::string_view s);

// Sets calibrated and rel_error together.
void attach_calibration(ReportRow& row, double calibrated, std::string provenance);

std::string render_report(const PredictionReport& r, ReportFormat f);
// Inverse of the json rendering. Throws FormatError.
PredictionReport parse_report_json(std::string_view text);

} // namespace gpm
