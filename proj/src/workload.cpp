#include "gpm/workload.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <set>
#include <thread>

#include "json.hpp"

#include "gpm/async_pipeline_model.hpp"
#include "gpm/dpx_model.hpp"
#include "gpm/dsm_model.hpp"
#include "gpm/error.hpp"
#include "gpm/memory_model.hpp"
#include "gpm/te_roofline_model.hpp"
#include "gpm/tensorcore_model.hpp"

namespace gpm {

namespace {

using nlohmann::json;

constexpr std::array<std::pair<WorkloadKind, std::string_view>, 11> kKindNames{{
    {WorkloadKind::MemLatency, "MemLatency"},
    {WorkloadKind::MemThroughput, "MemThroughput"},
    {WorkloadKind::TcInstr, "TcInstr"},
    {WorkloadKind::TcNSweep, "TcNSweep"},
    {WorkloadKind::Dpx, "Dpx"},
    {WorkloadKind::AsyncMatmul, "AsyncMatmul"},
    {WorkloadKind::RbcSweep, "RbcSweep"},
    {WorkloadKind::Histogram, "Histogram"},
    {WorkloadKind::TeLinear, "TeLinear"},
    {WorkloadKind::TeLayer, "TeLayer"},
    {WorkloadKind::LlmRoofline, "LlmRoofline"},
}};

struct KindKeys {
    std::vector<std::string_view> required;
    std::vector<std::string_view> optional;
};

KindKeys keys_for(WorkloadKind k) {
    switch (k) {
    case WorkloadKind::MemLatency: return {{"level"}, {}};
    case WorkloadKind::MemThroughput: return {{"level"}, {"access"}};
    case WorkloadKind::TcInstr: return {{"api", "a", "cd"}, {"shape", "N", "source", "sparse", "init", "metric"}};
    case WorkloadKind::TcNSweep: return {{"N"}, {"source", "sparse", "init", "metric"}};
    case WorkloadKind::Dpx: return {{"blocks"}, {"class"}};
    case WorkloadKind::AsyncMatmul: return {{"block_dim", "blocks_per_sm", "mode"}, {}};
    case WorkloadKind::RbcSweep: return {{"cs"}, {"block_size", "ilp"}};
    case WorkloadKind::Histogram: return {{"cs", "block_size", "nbins"}, {}};
    case WorkloadKind::TeLinear: return {{"n", "dtype"}, {}};
    case WorkloadKind::TeLayer: return {{"hidden", "dtype"}, {}};
    case WorkloadKind::LlmRoofline: return {{"model", "dtype"}, {}};
    }
    return {};
}

[[noreturn]] void bad(const std::string& field, const std::string& why) {
    throw UsageError("workload field '" + field + "': " + why);
}

const std::string& need(const Params& p, const std::string& key) {
    auto it = p.find(key);
    if (it == p.end()) bad(key, "missing");
    return it->second;
}

std::string opt(const Params& p, const std::string& key, std::string fallback) {
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

long long as_int(const Params& p, const std::string& key) {
    const std::string& s = need(p, key);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) bad(key, "'" + s + "' is not an integer");
    return v;
}

long long as_int_or(const Params& p, const std::string& key, long long fallback) {
    return p.count(key) ? as_int(p, key) : fallback;
}

bool as_bool(const Params& p, const std::string& key, bool fallback) {
    auto it = p.find(key);
    if (it == p.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    bad(key, "'" + it->second + "' is not true/false");
}

template <class T, class F>
T parsed(const Params& p, const std::string& key, F parse) {
    const std::string& s = need(p, key);
    auto v = parse(s);
    if (!v) bad(key, "unknown value '" + s + "'");
    return *v;
}

template <class T, class F>
T parsed_or(const Params& p, const std::string& key, F parse, T fallback) {
    return p.count(key) ? parsed<T>(p, key, parse) : fallback;
}

std::optional<Shape> parse_shape(std::string_view s) {
    Shape sh;
    int* dst[3] = {&sh.m, &sh.n, &sh.k};
    const char tags[3] = {'m', 'n', 'k'};
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        if (pos >= s.size() || s[pos] != tags[i]) return std::nullopt;
        ++pos;
        auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + s.size(), *dst[i]);
        if (ec != std::errc() || *dst[i] <= 0) return std::nullopt;
        pos = static_cast<std::size_t>(ptr - s.data());
    }
    if (pos != s.size()) return std::nullopt;
    return sh;
}

// One sweep point after axis expansion.
struct Point {
    const DeviceSpec* device = nullptr;
    Params params;
};

ReportRow row_for(const std::string& kind, const DeviceSpec& d, const Params& p, std::string metric,
                  std::string unit) {
    ReportRow r;
    r.device = d.name;
    r.kind = kind;
    r.params = p;
    r.metric = std::move(metric);
    r.unit = std::move(unit);
    return r;
}

void attach(ReportRow& row, const CalibRecord* rec) {
    if (rec) attach_calibration(row, rec->value, rec->provenance);
}

TcInstrDesc tc_instr(const Params& p, WorkloadKind kind) {
    const bool sparse = as_bool(p, "sparse", false);
    if (kind == WorkloadKind::TcNSweep) {
        const int n = static_cast<int>(as_int(p, "N"));
        auto src = parsed_or<OperandSource>(p, "source", parse_source, OperandSource::SS);
        return TcInstrDesc::wgmma(DType::FP16, DType::FP32, n, src, sparse);
    }
    auto api = parsed<TcApi>(p, "api", parse_api);
    auto a = parsed<DType>(p, "a", parse_dtype);
    auto cd = parsed<DType>(p, "cd", parse_dtype);
    if (api == TcApi::Mma) {
        auto sh = parsed<Shape>(p, "shape", parse_shape);
        return TcInstrDesc::mma(a, cd, sh, sparse);
    }
    const int n = static_cast<int>(as_int(p, "N"));
    auto src = parsed_or<OperandSource>(p, "source", parse_source, OperandSource::SS);
    return TcInstrDesc::wgmma(a, cd, n, src, sparse);
}

ReportRow eval_tc(const ModelContext& ctx, WorkloadKind kind, const DeviceSpec& d, const Params& p, bool dry) {
    const std::string kname(to_string(kind));
    const TcInstrDesc in = tc_instr(p, kind);
    const Init init = parsed_or<Init>(p, "init", parse_init, Init::Zero);
    const std::string what = opt(p, "metric", kind == WorkloadKind::TcNSweep ? "latency" : "throughput");
    if (what != "latency" && what != "throughput" && what != "efficiency" && what != "lowering")
        bad("metric", "unknown value '" + what + "'");
    const std::string api = in.api == TcApi::Mma ? "tc.mma." : "tc.wgmma.";
    const bool integer = is_integer_dtype(in.a_type);
    ReportRow row = row_for(kname, d, p, api + what,
                            what == "latency"      ? "cycles"
                            : what == "throughput" ? (integer ? "TOPS" : "TFLOPS")
                                                   : "ratio");
    if (what == "lowering") row.unit.clear();
    if (dry) return row;

    const TensorCoreModel tc(ctx.store);
    if (what == "lowering") {
        const auto low = sass_lower(in, d.architecture);
        row.note = std::string(to_string(low.kind)) + (low.name.empty() ? "" : ":" + low.name);
        if (!low.supported()) row.status = "unsupported";
        return row;
    }
    if (what == "latency") {
        row.predicted = tc.predict_latency(d, in);
        if (in.api == TcApi::Wgmma && in.a_type == DType::FP16 && in.cd_type == DType::FP32)
            if (const auto* r = ctx.store.lookup(d.name, row.metric, tc_params(in, std::nullopt, true))) {
                attach(row, r);
                return row;
            }
        attach(row, ctx.store.lookup(d.name, row.metric, tc_params(in, std::nullopt, false)));
        return row;
    }
    if (what == "efficiency") {
        row.predicted = tc.efficiency(d, in, init);
        return row;
    }
    row.predicted = tc.predict_throughput(d, in, init);
    const Params key_n = tc_params(in, init, true);
    const Params key = tc_params(in, in.api == TcApi::Mma ? std::nullopt : std::optional<Init>(init), false);
    const CalibRecord* rec = nullptr;
    if (in.api == TcApi::Wgmma && in.a_type == DType::FP16 && in.cd_type == DType::FP32)
        rec = ctx.store.lookup(d.name, row.metric, key_n);
    if (!rec && (in.api == TcApi::Wgmma || init == Init::Zero)) rec = ctx.store.lookup(d.name, row.metric, key);
    attach(row, rec);
    return row;
}

// `dry` stops after parameter parsing; validation uses it to check every point up front.
ReportRow eval_point(const ModelContext& ctx, WorkloadKind kind, const DeviceSpec& d, const Params& p, bool dry) {
    const std::string kname(to_string(kind));
    switch (kind) {
    case WorkloadKind::MemLatency: {
        auto level = parsed<MemLevel>(p, "level", parse_mem_level);
        ReportRow row = row_for(kname, d, p, latency_metric(level), "cycles");
        if (dry) return row;
        row.predicted = level_latency(ctx.store, d, level);
        attach(row, ctx.store.lookup(d.name, row.metric));
        return row;
    }
    case WorkloadKind::MemThroughput: {
        auto level = parsed<MemLevel>(p, "level", parse_mem_level);
        auto type = parsed_or<MemAccessType>(p, "access", parse_access_type, MemAccessType::FP32);
        ReportRow row = row_for(kname, d, p, throughput_metric(level), "");
        if (dry) return row;
        const MemAccess acc = MemAccess::of(type);
        const Rate measured = level_throughput(ctx.store, d, level, acc);
        row.unit = std::string(to_string(measured.unit));
        if (level == MemLevel::L1 || level == MemLevel::L2) {
            const ClampedRate eff = effective_cache_throughput(ctx.store, d, level, acc);
            row.predicted = eff.rate.value;
            if (eff.clamped) row.note = "FP64 pipe bound";
        } else {
            row.predicted = measured.value;
        }
        Params key;
        if (level == MemLevel::L1 || level == MemLevel::L2) key["access"] = std::string(to_string(type));
        attach(row, ctx.store.lookup(d.name, row.metric, key));
        return row;
    }
    case WorkloadKind::TcInstr:
    case WorkloadKind::TcNSweep: return eval_tc(ctx, kind, d, p, dry);
    case WorkloadKind::Dpx: {
        const long long b = as_int(p, "blocks");
        if (b < 0) bad("blocks", "must be >= 0");
        auto cls = parsed_or<DpxFnClass>(p, "class", parse_dpx_class, DpxFnClass::SixteenBit);
        ReportRow row = row_for(kname, d, p, "dpx.block_throughput", "ratio");
        if (dry) return row;
        row.predicted = dpx_block_throughput(d, cls, b);
        row.note = std::string(to_string(dpx_mode(d)));
        return row;
    }
    case WorkloadKind::AsyncMatmul: {
        AsyncMatmulConfig cfg;
        cfg.block_dim = static_cast<int>(as_int(p, "block_dim"));
        cfg.blocks_per_sm = static_cast<int>(as_int(p, "blocks_per_sm"));
        auto mode = parsed<CopyMode>(p, "mode", parse_copy_mode);
        try {
            validate_config(cfg);
        } catch (const ValidationError& e) {
            bad("block_dim/blocks_per_sm", e.what());
        }
        ReportRow row = row_for(kname, d, p, "async.throughput", "GFLOPS");
        if (dry) return row;
        row.predicted = AsyncPipelineModel(ctx.store).model_matmul_throughput(d, cfg, mode);
        attach(row, ctx.store.lookup(d.name, row.metric,
                                     {{"block", std::to_string(cfg.block_dim)},
                                      {"blocks_per_sm", std::to_string(cfg.blocks_per_sm)},
                                      {"mode", std::string(to_string(mode))}}));
        return row;
    }
    case WorkloadKind::RbcSweep: {
        RbcWorkload w;
        w.cluster_size = static_cast<int>(as_int(p, "cs"));
        w.block_size = static_cast<int>(as_int_or(p, "block_size", 1024));
        w.ilp = static_cast<int>(as_int_or(p, "ilp", 1));
        try {
            validate_rbc(w);
        } catch (const ValidationError& e) {
            bad("cs/block_size/ilp", e.what());
        }
        ReportRow row = row_for(kname, d, p, "dsm.rbc.throughput", "TBps");
        if (dry) return row;
        row.predicted = rbc_throughput(ctx.store, d, w);
        return row;
    }
    case WorkloadKind::Histogram: {
        HistogramConfig c;
        c.cluster_size = static_cast<int>(as_int(p, "cs"));
        c.block_size = static_cast<int>(as_int(p, "block_size"));
        c.nbins = static_cast<int>(as_int(p, "nbins"));
        try {
            validate_histogram(c);
        } catch (const ValidationError& e) {
            bad("cs/block_size/nbins", e.what());
        }
        ReportRow row = row_for(kname, d, p, "dsm.hist.throughput", "ratio");
        if (dry) return row;
        row.predicted = histogram_throughput(ctx.store, d, c);
        const auto occ = histogram_occupancy(d, c);
        row.note = "active_blocks=" + std::to_string(occ.active_blocks);
        return row;
    }
    case WorkloadKind::TeLinear: {
        TeLinearPoint pt;
        pt.n = as_int(p, "n");
        if (pt.n <= 0) bad("n", "must be > 0");
        pt.dtype = parsed<TePrecision>(p, "dtype", parse_te_precision);
        ReportRow row = row_for(kname, d, p, "te.linear.throughput", "GFLOPS");
        if (dry) return row;
        row.predicted = TeModel(ctx.store).te_linear_throughput(d, pt);
        return row;
    }
    case WorkloadKind::TeLayer: {
        const auto cfg = layer_for_hidden(static_cast<int>(as_int(p, "hidden")));
        if (!cfg) bad("hidden", "not one of the parameterised layer sizes");
        auto prec = parsed<TePrecision>(p, "dtype", parse_te_precision);
        ReportRow row = row_for(kname, d, p, "te.layer.latency", "ms");
        if (dry) return row;
        row.predicted = TeModel(ctx.store).transformer_layer_latency(d, *cfg, prec);
        return row;
    }
    case WorkloadKind::LlmRoofline: {
        auto model = parsed<LlmModelDesc>(p, "model", find_llama);
        auto dt = parsed<LlmDType>(p, "dtype", parse_llm_dtype);
        ReportRow row = row_for(kname, d, p, "llm.decode.bound", "tokens_per_s");
        if (dry) return row;
        const auto* rec = ctx.store.lookup(d.name, "llm.decode.throughput",
                                           {{"dtype", std::string(to_string(dt))}, {"model", model.name}});
        const auto b = TeModel(ctx.store).llm_decode_throughput(d, model, dt,
                                                                rec ? std::optional<double>(rec->value) : std::nullopt);
        if (b.out_of_memory) {
            row.status = "oom";
            row.note = "resident " + format_number(b.resident_bytes) + " B exceeds device memory";
            return row;
        }
        row.predicted = b.bound_tokens_s;
        attach(row, rec);
        if (b.measured_ok) row.note = *b.measured_ok ? "measured within bound" : "measured exceeds bound";
        return row;
    }
    }
    bad("kind", "unhandled");
}

std::string json_scalar(const json& v, const std::string& field) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return format_number(v.get<double>());
    bad(field, "expected a string, number or boolean");
}

std::vector<std::string> axis_values(const json& ax, const std::string& field) {
    std::vector<std::string> out;
    if (ax.contains("values")) {
        if (!ax.at("values").is_array() || ax.at("values").empty()) bad(field + ".values", "expected a non-empty array");
        for (const auto& v : ax.at("values")) out.push_back(json_scalar(v, field + ".values"));
        return out;
    }
    if (ax.contains("range")) {
        const json& r = ax.at("range");
        if (!r.is_object() || !r.contains("from") || !r.contains("to") || !r.at("from").is_number_integer() ||
            !r.at("to").is_number_integer())
            bad(field + ".range", "expected {from, to[, step]} integers");
        const long long from = r.at("from").get<long long>();
        const long long to = r.at("to").get<long long>();
        const long long step = r.value("step", 1LL);
        if (step <= 0 || to < from) bad(field + ".range", "empty or non-increasing");
        if ((to - from) / step > 1'000'000) bad(field + ".range", "more than a million points");
        for (long long v = from; v <= to; v += step) out.push_back(std::to_string(v));
        return out;
    }
    bad(field, "needs 'values' or 'range'");
}

} // namespace

std::string_view to_string(WorkloadKind k) {
    for (const auto& [kk, name] : kKindNames)
        if (kk == k) return name;
    return "?";
}

std::optional<WorkloadKind> parse_workload_kind(std::string_view s) {
    for (const auto& [kk, name] : kKindNames)
        if (name == s) return kk;
    return std::nullopt;
}

WorkloadSpec parse_workload(std::string_view text, std::string_view source) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw UsageError(std::string(source) + ": " + e.what());
    }
    const std::string src(source);
    if (!doc.is_object()) throw UsageError(src + ": workload must be a JSON object");
    for (const auto& [k, v] : doc.items())
        if (k != "kind" && k != "device" && k != "params" && k != "sweep")
            throw UsageError(src + ": workload field '" + k + "': unknown field");

    WorkloadSpec w;
    if (!doc.contains("kind") || !doc.at("kind").is_string()) throw UsageError(src + ": workload field 'kind': missing");
    const auto kind = parse_workload_kind(doc.at("kind").get<std::string>());
    if (!kind) throw UsageError(src + ": workload field 'kind': unknown kind '" + doc.at("kind").get<std::string>() + "'");
    w.kind = *kind;
    if (doc.contains("device")) {
        if (!doc.at("device").is_string()) throw UsageError(src + ": workload field 'device': expected a string");
        w.device = doc.at("device").get<std::string>();
    }
    try {
        if (doc.contains("params")) {
            if (!doc.at("params").is_object()) bad("params", "expected an object");
            for (const auto& [k, v] : doc.at("params").items()) w.params[k] = json_scalar(v, "params." + k);
        }
        if (doc.contains("sweep")) {
            if (!doc.at("sweep").is_array()) bad("sweep", "expected an array");
            std::set<std::string> seen;
            for (std::size_t i = 0; i < doc.at("sweep").size(); ++i) {
                const json& ax = doc.at("sweep")[i];
                const std::string field = "sweep[" + std::to_string(i) + "]";
                if (!ax.is_object() || !ax.contains("param") || !ax.at("param").is_string())
                    bad(field + ".param", "missing");
                SweepAxis axis;
                axis.param = ax.at("param").get<std::string>();
                if (!seen.insert(axis.param).second) bad(field + ".param", "'" + axis.param + "' swept twice");
                axis.values = axis_values(ax, field);
                w.sweep.push_back(std::move(axis));
            }
        }
    } catch (const UsageError& e) {
        throw UsageError(src + ": " + e.what());
    }
    return w;
}

WorkloadSpec load_workload(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    return parse_workload(text, path.string());
}

namespace {

// Odometer expansion: the last axis varies fastest.
std::vector<Point> expand(const ModelContext& ctx, const WorkloadSpec& w) {
    std::size_t total = 1;
    for (const auto& ax : w.sweep) total *= ax.values.size();
    std::vector<Point> pts;
    pts.reserve(total);
    std::vector<std::size_t> idx(w.sweep.size(), 0);
    for (std::size_t n = 0; n < total; ++n) {
        Point pt;
        pt.params = w.params;
        std::string device = w.device;
        for (std::size_t a = 0; a < w.sweep.size(); ++a) {
            const auto& ax = w.sweep[a];
            if (ax.param == "device")
                device = ax.values[idx[a]];
            else
                pt.params[ax.param] = ax.values[idx[a]];
        }
        pt.params.erase("device");
        if (device.empty()) bad("device", "missing (set 'device' or sweep over it)");
        pt.device = ctx.catalog.find(device);
        if (!pt.device) bad("device", "unknown device '" + device + "'");
        pts.push_back(std::move(pt));
        for (std::size_t a = w.sweep.size(); a-- > 0;) {
            if (++idx[a] < w.sweep[a].values.size()) break;
            idx[a] = 0;
        }
    }
    return pts;
}

} // namespace

void validate_workload(const WorkloadSpec& w, const ModelContext& ctx) {
    const KindKeys keys = keys_for(w.kind);
    std::set<std::string> present;
    for (const auto& [k, v] : w.params) present.insert(k);
    for (const auto& ax : w.sweep) present.insert(ax.param);
    for (const auto& k : present) {
        if (k == "device") continue;
        bool known = std::find(keys.required.begin(), keys.required.end(), k) != keys.required.end() ||
                     std::find(keys.optional.begin(), keys.optional.end(), k) != keys.optional.end();
        if (!known) bad("params." + k, "not a parameter of " + std::string(to_string(w.kind)));
    }
    for (auto k : keys.required)
        if (!present.count(std::string(k))) bad("params." + std::string(k), "missing");
    for (const auto& pt : expand(ctx, w)) eval_point(ctx, w.kind, *pt.device, pt.params, true);
}

PredictionReport run_workload(const ModelContext& ctx, const WorkloadSpec& w, unsigned threads) {
    validate_workload(w, ctx);
    const std::vector<Point> pts = expand(ctx, w);
    PredictionReport rep;
    rep.rows.resize(pts.size());

    auto work = [&](std::size_t i) {
        const Point& pt = pts[i];
        ReportRow& row = rep.rows[i];
        try {
            row = eval_point(ctx, w.kind, *pt.device, pt.params, false);
        } catch (const AbsentRecordError& e) {
            row = eval_point(ctx, w.kind, *pt.device, pt.params, true);
            row.status = "uncalibrated";
            row.note = e.what();
        } catch (const UnsupportedDtypeError& e) {
            row = eval_point(ctx, w.kind, *pt.device, pt.params, true);
            row.status = "unsupported";
            row.note = e.what();
        } catch (const UnsupportedInstructionError& e) {
            row = eval_point(ctx, w.kind, *pt.device, pt.params, true);
            row.status = "unsupported";
            row.note = e.what();
        } catch (const FeatureUnsupportedError& e) {
            row = eval_point(ctx, w.kind, *pt.device, pt.params, true);
            row.status = "unsupported";
            row.note = e.what();
        } catch (const ValidationError& e) {
            row = eval_point(ctx, w.kind, *pt.device, pt.params, true);
            row.status = "unsupported";
            row.note = e.what();
        }
    };

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(pts.size(), 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < pts.size(); ++i) work(i);
        return rep;
    }
    // rows are written by index, so completion order does not matter; the first
    // failing point in sweep order is the one reported
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> failures(pts.size());
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < pts.size();) {
                    try {
                        work(i);
                    } catch (...) {
                        failures[i] = std::current_exception();
                    }
                }
            });
    }
    for (const auto& f : failures)
        if (f) std::rethrow_exception(f);
    return rep;
}

} // namespace gpm
