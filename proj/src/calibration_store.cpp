#include "gpm/calibration_store.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

#include "gpm/context.hpp"
#include "gpm/error.hpp"

namespace gpm {

namespace {

constexpr std::array<std::pair<Unit, std::string_view>, 14> kUnits{{
    {Unit::cycles, "cycles"},
    {Unit::bytes_per_clk_sm, "bytes_per_clk_sm"},
    {Unit::bytes_per_clk, "bytes_per_clk"},
    {Unit::GBps, "GBps"},
    {Unit::TBps, "TBps"},
    {Unit::TFLOPS, "TFLOPS"},
    {Unit::TOPS, "TOPS"},
    {Unit::GFLOPS, "GFLOPS"},
    {Unit::ms, "ms"},
    {Unit::tokens_per_s, "tokens_per_s"},
    {Unit::watts, "watts"},
    {Unit::tflops_per_watt, "tflops_per_watt"},
    {Unit::percent, "percent"},
    {Unit::ratio, "ratio"},
}};

// TFLOPS and TOPS are the same dimension; the tables mix them within one metric.
Unit unit_family(Unit u) { return u == Unit::TOPS ? Unit::TFLOPS : u; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

} // namespace

std::string_view to_string(Unit u) {
    for (const auto& [k, s] : kUnits)
        if (k == u) return s;
    return "?";
}

std::optional<Unit> parse_unit(std::string_view s) {
    for (const auto& [k, name] : kUnits)
        if (name == s) return k;
    return std::nullopt;
}

std::string format_params(const Params& p) {
    std::string out;
    for (const auto& [k, v] : p) {
        if (!out.empty()) out += ';';
        out += k;
        out += '=';
        out += v;
    }
    return out;
}

Params parse_params(std::string_view s) {
    Params p;
    s = trim(s);
    if (s.empty()) return p;
    for (auto part : split(s, ';')) {
        part = trim(part);
        auto eq = part.find('=');
        if (eq == std::string_view::npos || eq == 0)
            throw FormatError("malformed parameter '" + std::string(part) + "' (want key=value)");
        std::string key(trim(part.substr(0, eq)));
        std::string val(trim(part.substr(eq + 1)));
        if (!p.emplace(key, val).second) throw FormatError("parameter '" + key + "' given twice");
    }
    return p;
}

std::string format_number(double v) {
    if (v == 0.0) return "0";
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

const std::vector<std::string>& anchor_registry() {
    static const std::vector<std::string> anchors{
        "tab:hw_device",  "tab:mem_lat",       "tab:mem_bw",     "tab:sassanalysis", "tab:syncwgmma",
        "tab:densewgmma", "tab:sparsewgmma",   "tab:Ndiff",      "tab:energy",       "tab:telayer",
        "tab:llm-inference", "tab:async_h800", "tab:async_a100", "text:memory",      "text:tensor-core",
        "text:dpx",       "text:dsm",          "text:te",        "text:llm",         "fit:async",
        "fit:histogram",
    };
    return anchors;
}

bool is_registered_anchor(std::string_view anchor) {
    const auto& a = anchor_registry();
    return std::find(a.begin(), a.end(), anchor) != a.end();
}

void CalibrationStore::check(const CalibRecord& r) const {
    const std::string id = r.device + "/" + r.metric_id + "{" + format_params(r.params) + "}";
    if (r.device.empty() || r.metric_id.empty()) throw IngestError("record with empty device or metric: " + id);
    if (!std::isfinite(r.value)) throw IngestError("non-finite value for " + id);
    if (!is_registered_anchor(r.provenance))
        throw IngestError("unknown provenance anchor '" + r.provenance + "' for " + id);
    if (auto it = metric_units_.find(r.metric_id);
        it != metric_units_.end() && unit_family(it->second) != unit_family(r.unit))
        throw IngestError("unit '" + std::string(to_string(r.unit)) + "' for " + id + " conflicts with '" +
                          std::string(to_string(it->second)) + "' used by the same metric");
}

void CalibrationStore::insert(CalibRecord r) {
    check(r);
    Key k{r.device, r.metric_id, format_params(r.params)};
    if (records_.count(k)) throw IngestError("duplicate calibration key " + k.device + "/" + k.metric + "{" + k.params + "}");
    metric_units_.emplace(r.metric_id, r.unit);
    records_.emplace(std::move(k), std::move(r));
}

void CalibrationStore::upsert(CalibRecord r) {
    check(r);
    Key k{r.device, r.metric_id, format_params(r.params)};
    metric_units_.emplace(r.metric_id, r.unit);
    records_.insert_or_assign(std::move(k), std::move(r));
}

std::size_t CalibrationStore::erase_metric_prefix(std::string_view prefix) {
    std::size_t n = 0;
    for (auto it = records_.begin(); it != records_.end();) {
        if (it->first.metric.starts_with(prefix)) {
            it = records_.erase(it);
            ++n;
        } else {
            ++it;
        }
    }
    return n;
}

std::size_t CalibrationStore::ingest_text(std::string_view text, std::string_view source) {
    std::size_t count = 0;
    std::size_t lineno = 0;
    bool header_seen = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        auto line = trim(raw);
        if (line.empty()) continue;
        const std::string at = std::string(source) + ":" + std::to_string(lineno) + ": ";
        if (!header_seen) {
            if (line != kCalibHeader)
                throw FormatError(at + "expected header '" + std::string(kCalibHeader) + "'");
            header_seen = true;
            continue;
        }
        auto cols = split(line, ',');
        if (cols.size() != 6)
            throw FormatError(at + "expected 6 columns, got " + std::to_string(cols.size()));
        CalibRecord r;
        r.device = std::string(trim(cols[0]));
        r.metric_id = std::string(trim(cols[1]));
        try {
            r.params = parse_params(cols[2]);
        } catch (const FormatError& e) {
            throw FormatError(at + e.what());
        }
        auto vs = trim(cols[3]);
        auto [ptr, ec] = std::from_chars(vs.data(), vs.data() + vs.size(), r.value);
        if (ec != std::errc{} || ptr != vs.data() + vs.size())
            throw FormatError(at + "bad number '" + std::string(vs) + "'");
        auto u = parse_unit(trim(cols[4]));
        if (!u) throw IngestError(at + "unknown unit '" + std::string(trim(cols[4])) + "'");
        r.unit = *u;
        r.provenance = std::string(trim(cols[5]));
        try {
            insert(std::move(r));
        } catch (const IngestError& e) {
            throw IngestError(at + e.what());
        }
        ++count;
    }
    return count;
}

std::size_t CalibrationStore::ingest_file(const std::filesystem::path& path) {
    return ingest_text(read_file(path), path.string());
}

const CalibRecord* CalibrationStore::lookup(std::string_view device, std::string_view metric,
                                            const Params& params) const {
    auto it = records_.find(Key{std::string(device), std::string(metric), format_params(params)});
    return it == records_.end() ? nullptr : &it->second;
}

const CalibRecord& CalibrationStore::require(std::string_view device, std::string_view metric,
                                             const Params& params) const {
    if (const auto* r = lookup(device, metric, params)) return *r;
    throw AbsentRecordError("no calibration record " + std::string(device) + "/" + std::string(metric) + "{" +
                            format_params(params) + "}");
}

std::vector<const CalibRecord*> CalibrationStore::select(std::string_view device, std::string_view metric) const {
    std::vector<const CalibRecord*> out;
    for (const auto& [k, r] : records_)
        if (k.device == device && k.metric == metric) out.push_back(&r);
    return out;
}

std::vector<const CalibRecord*> CalibrationStore::records() const {
    std::vector<const CalibRecord*> out;
    out.reserve(records_.size());
    for (const auto& [k, r] : records_) out.push_back(&r);
    return out;
}

bool CalibrationStore::scale(std::string_view device, std::string_view metric, const Params& params, double factor) {
    auto it = records_.find(Key{std::string(device), std::string(metric), format_params(params)});
    if (it == records_.end()) return false;
    it->second.value *= factor;
    return true;
}

std::string CalibrationStore::dump() const {
    std::string out(kCalibHeader);
    out += '\n';
    for (const auto& [k, r] : records_) {
        out += r.device + ',' + r.metric_id + ',' + k.params + ',' + format_number(r.value) + ',' +
               std::string(to_string(r.unit)) + ',' + r.provenance + '\n';
    }
    return out;
}

} // namespace gpm
