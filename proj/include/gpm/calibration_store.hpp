#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gpm {

enum class Unit {
    cycles,
    bytes_per_clk_sm,
    bytes_per_clk,
    GBps,
    TBps,
    TFLOPS,
    TOPS,
    GFLOPS,
    ms,
    tokens_per_s,
    watts,
    tflops_per_watt,
    percent,
    ratio,
};

std::string_view to_string(Unit u);
std::optional<Unit> parse_unit(std::string_view s);

// Sorted by key, which is also the canonical serialisation order.
using Params = std::map<std::string, std::string>;

std::string format_params(const Params& p);
// "k=v;k=v" -> map. Throws FormatError on malformed pairs or repeated keys.
Params parse_params(std::string_view s);

// Shortest round-trip decimal, used for every number the tool prints.
std::string format_number(double v);

struct CalibRecord {
    std::string device;
    std::string metric_id;
    Params params;
    double value = 0.0;
    Unit unit = Unit::ratio;
    std::string provenance;
};

// Anchors a provenance string may reference. Listed in the README as well.
const std::vector<std::string>& anchor_registry();
bool is_registered_anchor(std::string_view anchor);

inline constexpr std::string_view kCalibHeader = "device,metric_id,params,value,unit,provenance";

class CalibrationStore {
public:
    std::size_t ingest_file(const std::filesystem::path& path);
    std::size_t ingest_text(std::string_view text, std::string_view source = "<memory>");

    // Throws IngestError on duplicate key, unit mismatch for the metric, bad anchor or non-finite value.
    void insert(CalibRecord r);

    // Exact match only, never interpolates.
    const CalibRecord* lookup(std::string_view device, std::string_view metric,
                              const Params& params = {}) const;
    // lookup() or AbsentRecordError.
    const CalibRecord& require(std::string_view device, std::string_view metric,
                               const Params& params = {}) const;
    double value(std::string_view device, std::string_view metric, const Params& params = {}) const {
        return require(device, metric, params).value;
    }

    // All records of one metric for a device, in canonical order.
    std::vector<const CalibRecord*> select(std::string_view device, std::string_view metric) const;
    std::vector<const CalibRecord*> records() const;

    // Multiplies one record's value; used for fault injection. False if absent.
    bool scale(std::string_view device, std::string_view metric, const Params& params, double factor);
    // Replaces or inserts (unit and anchor still checked).
    void upsert(CalibRecord r);
    std::size_t erase_metric_prefix(std::string_view prefix);

    std::string dump() const;
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

private:
    struct Key {
        std::string device;
        std::string metric;
        std::string params;
        auto operator<=>(const Key&) const = default;
    };
    void check(const CalibRecord& r) const;
    std::map<Key, CalibRecord> records_;
    std::map<std::string, Unit> metric_units_;
};

} // namespace gpm
