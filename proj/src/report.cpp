#include "gpm/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "gpm/error.hpp"

namespace gpm {

namespace {

using nlohmann::json;

std::string opt_num(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

// RFC 4180 quoting, only when needed
std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::string md_cell(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '|') out += '\\';
        out += c;
    }
    return out;
}

std::string render_csv(const PredictionReport& r) {
    std::ostringstream os;
    os << "device,kind,params,metric,predicted,unit,calibrated,rel_error,status,provenance,note\n";
    for (const auto& row : r.rows) {
        os << csv_field(row.device) << ',' << csv_field(row.kind) << ',' << csv_field(format_params(row.params))
           << ',' << csv_field(row.metric) << ',' << opt_num(row.predicted) << ',' << csv_field(row.unit) << ','
           << opt_num(row.calibrated) << ',' << opt_num(row.rel_error) << ',' << csv_field(row.status) << ','
           << csv_field(row.provenance) << ',' << csv_field(row.note) << '\n';
    }
    return os.str();
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string render_json(const PredictionReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        json p = json::object();
        for (const auto& [k, v] : row.params) p[k] = v;
        rows.push_back(json{{"device", row.device},
                            {"kind", row.kind},
                            {"params", p},
                            {"metric", row.metric},
                            {"predicted", opt_json(row.predicted)},
                            {"unit", row.unit},
                            {"calibrated", opt_json(row.calibrated)},
                            {"rel_error", opt_json(row.rel_error)},
                            {"status", row.status},
                            {"provenance", row.provenance},
                            {"note", row.note}});
    }
    return json{{"rows", rows}}.dump(2) + "\n";
}

// Pivot for the memory kinds: one line per level (and access), one
// column per device.
bool pivotable(const PredictionReport& r) {
    if (r.rows.empty()) return false;
    const std::string& kind = r.rows.front().kind;
    if (kind != "MemLatency" && kind != "MemThroughput") return false;
    for (const auto& row : r.rows)
        if (row.kind != kind) return false;
    return true;
}

std::string render_pivot(const PredictionReport& r) {
    std::vector<std::string> devices;
    std::vector<std::string> lines;
    std::map<std::pair<std::string, std::string>, std::string> cells;
    std::map<std::string, std::string> units;
    for (const auto& row : r.rows) {
        if (std::find(devices.begin(), devices.end(), row.device) == devices.end()) devices.push_back(row.device);
        Params key = row.params;
        key.erase("device");
        std::string line = format_params(key);
        if (std::find(lines.begin(), lines.end(), line) == lines.end()) lines.push_back(line);
        cells[{line, row.device}] = row.predicted ? format_number(*row.predicted) : row.status;
        units[line] = row.unit;
    }
    std::ostringstream os;
    os << "| " << (r.rows.front().kind == "MemLatency" ? "level" : "level / access") << " |";
    for (const auto& d : devices) os << ' ' << md_cell(d) << " |";
    os << " unit |\n|---|";
    for (std::size_t i = 0; i < devices.size(); ++i) os << "---:|";
    os << "---|\n";
    for (const auto& line : lines) {
        os << "| " << md_cell(line) << " |";
        for (const auto& d : devices) {
            auto it = cells.find({line, d});
            os << ' ' << (it == cells.end() ? "-" : md_cell(it->second)) << " |";
        }
        os << ' ' << md_cell(units[line]) << " |\n";
    }
    return os.str();
}

std::string render_md(const PredictionReport& r) {
    if (pivotable(r)) return render_pivot(r);
    std::ostringstream os;
    os << "| device | kind | params | metric | predicted | unit | calibrated | rel_error | status |\n"
       << "|---|---|---|---|---:|---|---:|---:|---|\n";
    for (const auto& row : r.rows) {
        os << "| " << md_cell(row.device) << " | " << md_cell(row.kind) << " | " << md_cell(format_params(row.params))
           << " | " << md_cell(row.metric) << " | " << opt_num(row.predicted) << " | " << md_cell(row.unit) << " | "
           << opt_num(row.calibrated) << " | " << opt_num(row.rel_error) << " | " << md_cell(row.status) << " |\n";
    }
    return os.str();
}

std::optional<double> get_opt(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    if (!j.at(key).is_number()) throw FormatError(std::string("report: '") + key + "' is not a number");
    return j.at(key).get<double>();
}

std::string get_str(const json& j, const char* key) {
    if (!j.contains(key)) return {};
    if (!j.at(key).is_string()) throw FormatError(std::string("report: '") + key + "' is not a string");
    return j.at(key).get<std::string>();
}

} // namespace

std::optional<ReportFormat> parse_report_format(std::string_view s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "json") return ReportFormat::json;
    if (s == "md") return ReportFormat::md;
    return std::nullopt;
}

void attach_calibration(ReportRow& row, double calibrated, std::string provenance) {
    row.calibrated = calibrated;
    row.provenance = std::move(provenance);
    if (row.predicted)
        row.rel_error = calibrated == 0.0 ? std::abs(*row.predicted) : std::abs(*row.predicted - calibrated) / std::abs(calibrated);
    else
        row.rel_error.reset();
}

std::string render_report(const PredictionReport& r, ReportFormat f) {
    switch (f) {
    case ReportFormat::csv: return render_csv(r);
    case ReportFormat::json: return render_json(r);
    case ReportFormat::md: return render_md(r);
    }
    return {};
}

PredictionReport parse_report_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("rows") || !doc.at("rows").is_array())
        throw FormatError("report: expected an object with a 'rows' array");
    PredictionReport out;
    for (const auto& j : doc.at("rows")) {
        if (!j.is_object()) throw FormatError("report: row is not an object");
        ReportRow row;
        row.device = get_str(j, "device");
        row.kind = get_str(j, "kind");
        if (j.contains("params")) {
            if (!j.at("params").is_object()) throw FormatError("report: 'params' is not an object");
            for (const auto& [k, v] : j.at("params").items()) {
                if (!v.is_string()) throw FormatError("report: param '" + k + "' is not a string");
                row.params[k] = v.get<std::string>();
            }
        }
        row.metric = get_str(j, "metric");
        row.predicted = get_opt(j, "predicted");
        row.unit = get_str(j, "unit");
        row.calibrated = get_opt(j, "calibrated");
        row.rel_error = get_opt(j, "rel_error");
        row.status = get_str(j, "status");
        row.provenance = get_str(j, "provenance");
        row.note = get_str(j, "note");
        out.rows.push_back(std::move(row));
    }
    return out;
}

} // namespace gpm
