#include "gpm/validation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "gpm/async_pipeline_model.hpp"
#include "gpm/dpx_model.hpp"
#include "gpm/dsm_model.hpp"
#include "gpm/error.hpp"
#include "gpm/memory_model.hpp"
#include "gpm/te_roofline_model.hpp"
#include "gpm/tensorcore_model.hpp"
#include "gpm/workload.hpp"

namespace gpm {

Tolerances Tolerances::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

Tolerances Tolerances::parse(std::string_view text, std::string_view source) {
    Tolerances t;
    try {
        t.doc_ = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string(source) + ": " + e.what());
    }
    if (!t.doc_.is_object()) throw ConfigError(std::string(source) + ": tolerances must be a JSON object");
    for (const auto& [k, v] : t.doc_.items()) {
        if (!v.is_object()) throw ConfigError(std::string(source) + ": entry '" + k + "' must be an object");
        for (const auto& [kk, vv] : v.items())
            if (!vv.is_number()) throw ConfigError(std::string(source) + ": " + k + "." + kk + " is not a number");
    }
    return t;
}

namespace {

std::string crit_key(int c) { return "C" + std::to_string(c); }

constexpr std::string_view kNames[] = {"memory-ratios", "global-efficiency", "mma-efficiency", "sparse-speedup",
                                       "wgmma-dense",   "wgmma-sparse",      "rand-throttle",  "energy",
                                       "dpx-waves",     "async-pipeline",    "dsm",            "transformer-engine",
                                       "llm-roofline",  "sass-lowering",     "determinism"};

} // namespace

bool Tolerances::has(int criterion) const { return doc_.contains(crit_key(criterion)); }

double Tolerances::get(int criterion, std::string_view key) const {
    const std::string ck = crit_key(criterion);
    if (!doc_.contains(ck)) throw ConfigError("tolerances: no entry for " + ck);
    const auto& e = doc_.at(ck);
    if (!e.contains(std::string(key))) throw ConfigError("tolerances: " + ck + " has no '" + std::string(key) + "'");
    return e.at(std::string(key)).get<double>();
}

bool ValidationResult::pass() const {
    return !criteria.empty() && std::all_of(criteria.begin(), criteria.end(), [](const auto& c) { return c.pass; });
}

std::filesystem::path default_tolerances_path(const std::filesystem::path& data_dir) {
    return data_dir / "tolerances.json";
}

namespace {

// Collects per-item checks. `miss` is the distance to the tolerance edge in units of
// the tolerance (> 1 fails); boolean checks use 0 / 2.
class Check {
public:
    void item(bool ok, double miss, std::string what) {
        ++count_;
        if (!ok) {
            pass_ = false;
            ++failed_;
        }
        // a failing item always outranks a passing one
        const double rank = (ok ? 0.0 : 1e9) + (std::isfinite(miss) ? miss : 1e12);
        if (rank > worst_rank_) {
            worst_rank_ = rank;
            worst_ = std::move(what);
        }
    }
    void near(double value, double target, double abs_tol, const std::string& what) {
        const double d = std::abs(value - target);
        const double miss = abs_tol > 0 ? d / abs_tol : (d == 0 ? 0.0 : 2.0);
        item(d <= abs_tol * (1 + 1e-12) + 1e-12, miss,
             what + " = " + format_number(value) + " (target " + format_number(target) + ")");
    }
    void near_rel(double value, double target, double rel_tol, const std::string& what) {
        const double rel = std::abs(value - target) / std::abs(target);
        const double miss = rel_tol > 0 ? rel / rel_tol : (rel == 0 ? 0.0 : 2.0);
        item(rel <= rel_tol * (1 + 1e-12) + 1e-15, miss,
             what + " = " + format_number(value) + " (target " + format_number(target) + ", rel " + format_number(rel) +
                 ")");
    }
    void within(double value, double lo, double hi, const std::string& what) {
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        item(value >= lo && value <= hi, half > 0 ? std::abs(value - mid) / half : 0.0,
             what + " = " + format_number(value) + " (range [" + format_number(lo) + ", " + format_number(hi) + "])");
    }
    void truth(bool ok, const std::string& what) { item(ok, ok ? 0.0 : 2.0, what); }

    CriterionResult result(int id, std::string name, std::string tolerance) const {
        CriterionResult r;
        r.id = id;
        r.name = std::move(name);
        r.pass = pass_ && count_ > 0;
        r.tolerance = std::move(tolerance);
        r.worst = worst_;
        r.detail = std::to_string(count_ - failed_) + "/" + std::to_string(count_) + " checks";
        if (count_ == 0) r.detail = "no checks ran";
        return r;
    }

private:
    bool pass_ = true;
    int count_ = 0;
    int failed_ = 0;
    double worst_rank_ = -1.0;
    std::string worst_;
};

std::string tol_text(const Tolerances& tol, int id) {
    const auto& e = tol.raw().at(crit_key(id));
    std::string s;
    for (const auto& [k, v] : e.items()) {
        if (!s.empty()) s += ' ';
        s += k + "=" + format_number(v.get<double>());
    }
    return s.empty() ? "exact" : s;
}

const DeviceSpec* dev(const ModelContext& ctx, std::string_view name) { return ctx.catalog.find(name); }

// -- 1 ----------------------------------------------------------------------
CriterionResult c_memory_ratios(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const auto r = latency_ratios(ctx.store, ctx.catalog.devices());
    ck.near(r.avg_l2_over_l1, ctx.store.value("ALL", "mem.ratio.avg_l2_over_l1"), tol.get(1, "avg_l2_over_l1_abs"),
            "avg L2/L1 latency");
    ck.near(r.avg_global_over_l2, ctx.store.value("ALL", "mem.ratio.avg_global_over_l2"),
            tol.get(1, "avg_global_over_l2_abs"), "avg Global/L2 latency");
    for (const auto& d : ctx.catalog.devices())
        if (const auto* rec = ctx.store.lookup(d.name, "mem.ratio.l2_over_global_bw"))
            ck.near_rel(r.l2_over_global_bw.at(d.name), rec->value, tol.get(1, "bw_ratio_rel"),
                        d.name + " L2/Global bandwidth");
    return ck.result(1, "memory-ratios", tol_text(tol, 1));
}

// -- 2 ----------------------------------------------------------------------
CriterionResult c_global_efficiency(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const double lo = tol.get(2, "min"), hi = tol.get(2, "max");
    // the quoted figures are whole percents, so compare at that resolution
    const double quantum = tol.get(2, "quantum_percent");
    for (const auto& d : ctx.catalog.devices()) {
        const auto* quoted = ctx.store.lookup(d.name, "mem.global.efficiency");
        if (!quoted) continue;
        const double eff = global_efficiency(ctx.store, d);
        const double pct = std::round(eff * 100.0 / quantum) * quantum;
        ck.within(pct / 100.0, lo, hi, d.name + " global efficiency (raw " + format_number(eff) + ")");
        ck.near(pct, quoted->value, 0.0, d.name + " global efficiency percent");
    }
    return ck.result(2, "global-efficiency", tol_text(tol, 2));
}

// -- 3 ----------------------------------------------------------------------
CriterionResult c_mma_efficiency(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const TensorCoreModel tc(ctx.store);
    if (const auto* h = dev(ctx, "H800")) {
        double sum = 0.0;
        int n = 0;
        for (bool sparse : {false, true})
            for (const auto& in : mma_table_rows(sparse)) {
                sum += tc.efficiency(*h, in, Init::Zero);
                ++n;
            }
        ck.near(100.0 * sum / n, ctx.store.value("H800", "tc.mma.mean_efficiency"), tol.get(3, "mean_abs_points"),
                "H800 mma mean efficiency %");
    }
    if (const auto* a = dev(ctx, "A100")) {
        const double floor = ctx.store.value("A100", "tc.mma.min_efficiency", {{"sparse", "false"}}) / 100.0;
        for (const auto& in : mma_table_rows(false)) {
            const double e = tc.efficiency(*a, in, Init::Zero);
            ck.item(e >= floor, e >= floor ? 0.0 : 1.0 + (floor - e), "A100 " + in.label() + " efficiency " +
                                                                        format_number(e) + " (min " +
                                                                        format_number(floor) + ")");
        }
    }
    return ck.result(3, "mma-efficiency", tol_text(tol, 3));
}

// -- 4 ----------------------------------------------------------------------
CriterionResult c_sparse_speedup(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const TensorCoreModel tc(ctx.store);
    if (const auto* r = dev(ctx, "RTX4090"))
        for (const auto& in : mma_table_rows(false))
            ck.within(tc.sparse_speedup(*r, in), tol.get(4, "rtx_min"), tol.get(4, "rtx_max"),
                      "RTX4090 " + in.label() + " sparse speedup");
    if (const auto* h = dev(ctx, "H800")) {
        double sum = 0.0;
        int n = 0;
        for (const auto& in : mma_table_rows(false)) {
            sum += tc.sparse_speedup(*h, in);
            ++n;
        }
        ck.near(sum / n, ctx.store.value("H800", "tc.mma.sparse_speedup_mean"), tol.get(4, "h800_mean_abs"),
                "H800 mean sparse speedup");
    }
    return ck.result(4, "sparse-speedup", tol_text(tol, 4));
}

// -- 5 ----------------------------------------------------------------------
CriterionResult c_wgmma_dense(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const TensorCoreModel tc(ctx.store);
    const auto* h = dev(ctx, "H800");
    if (!h) return ck.result(5, "wgmma-dense", tol_text(tol, 5));
    const double floor =
        ctx.store.value("H800", "tc.wgmma.min_efficiency", {{"init", "Zero"}, {"sparse", "false"}}) / 100.0;
    for (auto src : {OperandSource::SS, OperandSource::RS})
        for (const auto& in : wgmma_table_rows(src, false)) {
            const double e = tc.efficiency(*h, in, Init::Zero);
            ck.item(e >= floor, e >= floor ? 0.0 : 1.0 + (floor - e),
                    in.label() + " zero-init efficiency " + format_number(e) + " (min " + format_number(floor) + ")");
        }
    const double lat_abs = tol.get(5, "latency_abs");
    const double sweep_rel = tol.get(5, "n_sweep_rel");
    for (auto src : {OperandSource::SS, OperandSource::RS})
        for (int n : wgmma_n_values()) {
            const auto in = TcInstrDesc::wgmma(DType::FP16, DType::FP32, n, src, false);
            const auto* lat = ctx.store.lookup("H800", "tc.wgmma.latency", tc_params(in, std::nullopt, true));
            if (!lat) {
                ck.truth(false, in.label() + " latency record missing");
                continue;
            }
            if (n >= 64)
                ck.near(wgmma_dense_latency_model(n), lat->value, lat_abs, in.label() + " latency model");
            ck.near_rel(tc.predict_latency(*h, in), lat->value, sweep_rel, in.label() + " latency");
            for (auto init : {Init::Zero, Init::Rand}) {
                const auto* thr = ctx.store.lookup("H800", "tc.wgmma.throughput", tc_params(in, init, true));
                if (!thr) {
                    ck.truth(false, in.label() + " throughput record missing");
                    continue;
                }
                ck.near_rel(tc.predict_throughput(*h, in, init), thr->value, sweep_rel,
                            in.label() + " " + std::string(to_string(init)) + " throughput");
            }
        }
    return ck.result(5, "wgmma-dense", tol_text(tol, 5));
}

// -- 6 ----------------------------------------------------------------------
CriterionResult c_wgmma_sparse(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const TensorCoreModel tc(ctx.store);
    const auto* h = dev(ctx, "H800");
    if (!h) return ck.result(6, "wgmma-sparse", tol_text(tol, 6));
    const double lat_abs = tol.get(6, "latency_abs");
    for (auto src : {OperandSource::SS, OperandSource::RS})
        for (const auto& in : wgmma_table_rows(src, true)) {
            const auto* rec = ctx.store.lookup("H800", "tc.wgmma.latency", tc_params(in, std::nullopt, false));
            if (!rec) continue;
            ck.near(tc.predict_latency(*h, in), rec->value, lat_abs, in.label() + " latency");
        }
    const auto ss = TcInstrDesc::wgmma(DType::FP16, DType::FP32, 256, OperandSource::SS, true);
    const auto rs = TcInstrDesc::wgmma(DType::FP16, DType::FP32, 256, OperandSource::RS, true);
    ck.truth(tc.predict_latency(*h, ss) > tc.predict_latency(*h, rs),
             "sparse SS latency " + format_number(tc.predict_latency(*h, ss)) + " > RS " +
                 format_number(tc.predict_latency(*h, rs)));
    const auto ss_rows = wgmma_table_rows(OperandSource::SS, true);
    const auto rs_rows = wgmma_table_rows(OperandSource::RS, true);
    for (std::size_t i = 0; i < ss_rows.size(); ++i)
        for (auto init : {Init::Zero, Init::Rand}) {
            const double s = tc.predict_throughput(*h, ss_rows[i], init);
            const double r = tc.predict_throughput(*h, rs_rows[i], init);
            ck.truth(r > s, rs_rows[i].label() + " " + std::string(to_string(init)) + " RS " + format_number(r) +
                                " > SS " + format_number(s));
        }
    return ck.result(6, "wgmma-sparse", tol_text(tol, 6));
}

// -- 7 ----------------------------------------------------------------------
CriterionResult c_rand_throttle(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const double slack = tol.get(7, "slack_rel");
    for (const auto& d : ctx.catalog.devices())
        for (const auto* r : ctx.store.select(d.name, "tc.wgmma.throughput")) {
            auto it = r->params.find("init");
            if (it == r->params.end() || it->second != "Rand") continue;
            Params zp = r->params;
            zp["init"] = "Zero";
            const auto* z = ctx.store.lookup(d.name, "tc.wgmma.throughput", zp);
            if (!z) continue;
            const bool ok = r->value <= z->value * (1 + slack);
            ck.item(ok, r->value / z->value, d.name + " " + format_params(r->params) + " Rand " +
                                                 format_number(r->value) + " vs Zero " + format_number(z->value));
        }
    return ck.result(7, "rand-throttle", tol_text(tol, 7));
}

// -- 8 ----------------------------------------------------------------------
CriterionResult c_energy(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const TensorCoreModel tc(ctx.store);
    const double echo = tol.get(8, "echo_rel");
    std::map<std::string, double> dense_mean;
    for (const auto& d : ctx.catalog.devices()) {
        double sum = 0.0;
        int n = 0;
        for (bool sparse : {false, true})
            for (const auto& in : energy_table_rows(sparse)) {
                const Params p{{"a", std::string(dtype_key(in.a_type))},
                               {"cd", std::string(dtype_key(in.cd_type))},
                               {"sparse", sparse ? "true" : "false"}};
                const auto* pw = ctx.store.lookup(d.name, "tc.energy.power", p);
                const auto* ef = ctx.store.lookup(d.name, "tc.energy.efficiency", p);
                if (!pw || !ef) continue;
                const auto m = tc.energy_metrics(d, in);
                ck.near_rel(m.power_w, pw->value, echo, d.name + " " + in.label() + " power");
                ck.near_rel(m.tflops_per_w, ef->value, echo, d.name + " " + in.label() + " efficiency");
                if (!sparse) {
                    sum += m.tflops_per_w;
                    ++n;
                }
            }
        if (n) dense_mean[d.name] = sum / n;
    }
    for (const auto* r : ctx.store.select("H800", "tc.energy.efficiency_ratio")) {
        if (r->params.at("sparse") != "false") continue;
        const std::string vs = r->params.at("vs");
        if (!dense_mean.count("H800") || !dense_mean.count(vs)) continue;
        ck.near(dense_mean.at("H800") / dense_mean.at(vs), r->value, tol.get(8, "ratio_abs"),
                "dense mean efficiency H800/" + vs);
    }
    return ck.result(8, "energy", tol_text(tol, 8));
}

// -- 9 ----------------------------------------------------------------------
// Independent oracle: hand blocks to S slots one at a time, count waves.
double wave_oracle(int sms, long long blocks) {
    if (blocks == 0) return 0.0;
    std::vector<long long> per_slot(static_cast<std::size_t>(sms), 0);
    for (long long b = 0; b < blocks; ++b) ++per_slot[static_cast<std::size_t>(b % sms)];
    const long long waves = *std::max_element(per_slot.begin(), per_slot.end());
    return static_cast<double>(blocks) / (static_cast<double>(sms) * static_cast<double>(waves));
}

CriterionResult c_dpx(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const double eps = tol.get(9, "oracle_abs");
    for (const auto& d : ctx.catalog.devices()) {
        const long long s = d.sm_count;
        const auto fn = DpxFnClass::SixteenBit;
        double prop = 0.0;
        for (long long b = 0; b <= s; ++b)
            prop = std::max(prop, std::abs(dpx_block_throughput(d, fn, b) - static_cast<double>(b) / static_cast<double>(s)));
        ck.near(prop, 0.0, eps, d.name + " max |T(b) - b/S| for b <= S");
        for (long long k = 1; k <= 3; ++k) {
            ck.near(dpx_block_throughput(d, fn, k * s), 1.0, eps, d.name + " T(" + std::to_string(k) + "S)");
            ck.truth(dpx_block_throughput(d, fn, k * s + 1) < dpx_block_throughput(d, fn, k * s),
                     d.name + " T(" + std::to_string(k) + "S+1) < T(" + std::to_string(k) + "S)");
        }
        double worst = 0.0;
        long long worst_b = 0;
        for (long long b = 0; b <= 4 * s; ++b) {
            const double diff = std::abs(dpx_block_throughput(d, fn, b) - wave_oracle(d.sm_count, b));
            if (diff > worst) {
                worst = diff;
                worst_b = b;
            }
        }
        ck.near(worst, 0.0, eps, d.name + " max |closed form - wave oracle| (at b=" + std::to_string(worst_b) + ")");
    }
    const auto* h = dev(ctx, "H800");
    const auto* a = dev(ctx, "A100");
    if (h && a)
        ck.near(dpx_speedup(ctx.store, *h, *a, DpxFnClass::SixteenBit),
                ctx.store.value("H800", "dpx.speedup.max", {{"class", "SixteenBit"}, {"vs", "A100"}}), 0.0,
                "16-bit class speedup H800/A100");
    return ck.result(9, "dpx-waves", tol_text(tol, 9));
}

// -- 10 ---------------------------------------------------------------------
CriterionResult c_async(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const AsyncPipelineModel m(ctx.store);
    const double cell_rel = tol.get(10, "cell_rel");
    const double imp_abs = tol.get(10, "improvement_abs_points");
    for (const auto& d : ctx.catalog.devices()) {
        if (ctx.store.select(d.name, "async.throughput").empty()) continue;
        for (int bd : kAsyncBlockDims)
            for (int bps : kAsyncBlocksPerSm)
                for (auto mode : {CopyMode::SyncShare, CopyMode::AsyncPipe}) {
                    const Params key{{"block", std::to_string(bd)},
                                     {"blocks_per_sm", std::to_string(bps)},
                                     {"mode", std::string(to_string(mode))}};
                    const auto* rec = ctx.store.lookup(d.name, "async.throughput", key);
                    if (!rec) {
                        ck.truth(false, d.name + " " + format_params(key) + " record missing");
                        continue;
                    }
                    ck.near_rel(m.model_matmul_throughput(d, {bd, bps, 2048}, mode), rec->value, cell_rel,
                                d.name + " " + format_params(key));
                }
        std::vector<double> imp;
        for (int bd : kAsyncBlockDims) {
            imp.push_back(m.pipeline_improvement(d, bd));
            ck.near(imp.back(), ctx.store.value(d.name, "async.improvement", {{"block", std::to_string(bd)}}), imp_abs,
                    d.name + " improvement % at block " + std::to_string(bd));
        }
        ck.truth(imp[0] >= imp[1] && imp[1] >= imp[2], d.name + " improvement nonincreasing in block size");
    }
    return ck.result(10, "async-pipeline", tol_text(tol, 10));
}

// -- 11 ---------------------------------------------------------------------
CriterionResult c_dsm(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const double echo = tol.get(11, "echo_rel");
    for (const auto& d : ctx.catalog.devices()) {
        if (!d.features.dsm) {
            bool threw = false;
            try {
                sm2sm_latency(ctx.store, d);
            } catch (const FeatureUnsupportedError&) {
                threw = true;
            }
            ck.truth(threw, d.name + " rejects DSM queries");
            continue;
        }
        ck.near_rel(sm2sm_latency(ctx.store, d), ctx.store.value(d.name, "dsm.latency.sm2sm"), echo,
                    d.name + " SM-to-SM latency");
        ck.within(sm2sm_reduction_vs_l2(ctx.store, d), tol.get(11, "reduction_min"), tol.get(11, "reduction_max"),
                  d.name + " 1 - sm2sm/L2");
        for (const auto* r : ctx.store.select(d.name, "dsm.rbc.peak"))
            ck.near_rel(rbc_peak(ctx.store, d, std::stoi(r->params.at("cs"))), r->value, echo,
                        d.name + " RBC peak cs=" + r->params.at("cs"));
        const int cs[] = {2, 4, 8, 16};
        for (int i = 0; i + 1 < 4; ++i) {
            const double a = rbc_peak(ctx.store, d, cs[i]), b = rbc_peak(ctx.store, d, cs[i + 1]);
            ck.truth(b < a, d.name + " RBC peak cs=" + std::to_string(cs[i + 1]) + " " + format_number(b) + " < cs=" +
                                std::to_string(cs[i]) + " " + format_number(a));
        }
        const int nbins = static_cast<int>(tol.get(11, "argmax_nbins"));
        for (const auto* r : ctx.store.select(d.name, "dsm.hist.best_cluster")) {
            const int bs = std::stoi(r->params.at("block_size"));
            const int best = histogram_best_cluster(ctx.store, d, bs, nbins);
            ck.near(best, r->value, 0.0, d.name + " best cluster size at block " + std::to_string(bs));
        }
        const double t1024 = histogram_throughput(ctx.store, d, {1, 128, 1024, 4});
        const double t2048 = histogram_throughput(ctx.store, d, {1, 128, 2048, 4});
        ck.truth(t2048 < t1024, d.name + " CS=1 histogram drop 1024->2048 bins (" + format_number(t1024) + " -> " +
                                    format_number(t2048) + ")");
    }
    return ck.result(11, "dsm", tol_text(tol, 11));
}

// -- 12 ---------------------------------------------------------------------
CriterionResult c_te(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const TeModel te(ctx.store);
    const long long cross_below = static_cast<long long>(tol.get(12, "crossover_below"));
    for (const auto& d : ctx.catalog.devices()) {
        if (!d.features.fp8_tc) continue;
        auto ratio = [&](long long n) {
            return te.te_linear_throughput(d, {n, TePrecision::FP8}) / te.te_linear_throughput(d, {n, TePrecision::FP16});
        };
        ck.within(ratio(kTeLargeN), tol.get(12, "ratio_min"), tol.get(12, "ratio_max"),
                  d.name + " FP8/FP16 linear ratio at N=" + std::to_string(kTeLargeN));
        long long cross = -1;
        for (long long n = 256; n <= kTeLargeN; n += 256)
            if (ratio(n) >= 1.0) {
                cross = n;
                break;
            }
        ck.truth(ratio(256) < 1.0 && cross > 0 && cross < cross_below,
                 d.name + " FP8/FP16 crossover at N=" + std::to_string(cross) + " (< " + std::to_string(cross_below) +
                     ")");
        for (const auto& cfg : table_layer_configs()) {
            const double l8 = te.transformer_layer_latency(d, cfg, TePrecision::FP8);
            const double l16 = te.transformer_layer_latency(d, cfg, TePrecision::FP16);
            const bool expect_faster = cfg.hidden > 4096;
            ck.truth((l8 < l16) == expect_faster, d.name + " hidden " + std::to_string(cfg.hidden) + " FP8 " +
                                                      format_number(l8) + " ms vs FP16 " + format_number(l16) + " ms");
        }
        const auto big = layer_for_hidden(8192);
        const double l16 = te.transformer_layer_latency(d, *big, TePrecision::FP16);
        const double l32 = te.transformer_layer_latency(d, *big, TePrecision::FP32);
        ck.near_rel(l16, l32 / 2.0, tol.get(12, "fp16_fp32_rel"), d.name + " hidden 8192 FP16 latency vs FP32/2");
    }
    return ck.result(12, "transformer-engine", tol_text(tol, 12));
}

// -- 13 ---------------------------------------------------------------------
CriterionResult c_llm(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const TeModel te(ctx.store);
    const double slack = tol.get(13, "slack_rel");
    for (const auto& d : ctx.catalog.devices()) {
        // the measured grid: every model with at least one entry for this device
        std::set<std::string> models;
        for (const auto* r : ctx.store.select(d.name, "llm.decode.throughput")) models.insert(r->params.at("model"));
        for (const auto& name : models) {
            const auto m = find_llama(name);
            if (!m) {
                ck.truth(false, d.name + " unknown model " + name);
                continue;
            }
            for (auto t : {LlmDType::FP32, LlmDType::BF16, LlmDType::FP8}) {
                const std::string cell = d.name + " " + name + " " + std::string(to_string(t));
                const auto* rec =
                    ctx.store.lookup(d.name, "llm.decode.throughput", {{"dtype", std::string(to_string(t))}, {"model", name}});
                if (t == LlmDType::FP8 && !d.features.fp8_tc) {
                    ck.truth(rec == nullptr, cell + " unsupported and unmeasured");
                    continue;
                }
                const auto b = te.llm_decode_throughput(d, *m, t, rec ? std::optional<double>(rec->value) : std::nullopt);
                if (!rec) {
                    ck.truth(b.out_of_memory, cell + " predicted OOM");
                    continue;
                }
                if (b.out_of_memory) {
                    ck.truth(false, cell + " predicted OOM but measured " + format_number(rec->value));
                    continue;
                }
                ck.item(rec->value <= b.bound_tokens_s * (1 + slack), rec->value / b.bound_tokens_s,
                        cell + " measured " + format_number(rec->value) + " <= bound " + format_number(b.bound_tokens_s));
            }
        }
    }
    return ck.result(13, "llm-roofline", tol_text(tol, 13));
}

// -- 14 ---------------------------------------------------------------------
CriterionResult c_sass(const ModelContext&, const Tolerances& tol) {
    Check ck;
    using K = LoweringResult::Kind;
    struct Row {
        TcInstrDesc in;
        Architecture arch;
        LoweringResult want;
    };
    const Shape m16n8k16{16, 8, 16};
    const std::vector<Row> rows{
        {TcInstrDesc::mma(DType::FP16, DType::FP16, m16n8k16), Architecture::Hopper, {K::TensorCoreSass, "HMMA.16816.F16"}},
        {TcInstrDesc::mma(DType::FP16, DType::FP32, m16n8k16), Architecture::Hopper, {K::TensorCoreSass, "HMMA.16816.F32"}},
        {TcInstrDesc::mma(DType::TF32, DType::FP32, {16, 8, 8}), Architecture::Hopper,
         {K::TensorCoreSass, "HMMA.1688.F32.TF32"}},
        {TcInstrDesc::mma(DType::FP8_E4M3, DType::FP16, {16, 8, 32}), Architecture::Hopper, {K::Unsupported, ""}},
        {TcInstrDesc::mma(DType::FP8_E4M3, DType::FP32, {16, 8, 32}), Architecture::Hopper, {K::Unsupported, ""}},
        {TcInstrDesc::mma(DType::INT8, DType::INT32, {16, 8, 32}), Architecture::Hopper,
         {K::TensorCoreSass, "IMMA.16832.S8.S8"}},
        {TcInstrDesc::mma(DType::INT4, DType::INT32, {16, 8, 32}), Architecture::Hopper,
         {K::CudaCoreFallback, "IMAD.MOV.U32"}},
        {TcInstrDesc::mma(DType::INT4, DType::INT32, {16, 8, 32}), Architecture::Ampere,
         {K::TensorCoreSass, "IMMA.16832.S4.S4"}},
        {TcInstrDesc::mma(DType::INT4, DType::INT32, {16, 8, 32}), Architecture::Ada,
         {K::TensorCoreSass, "IMMA.16832.S4.S4"}},
        {TcInstrDesc::mma(DType::Binary, DType::INT32, {16, 8, 256}), Architecture::Hopper,
         {K::TensorCoreSass, "BMMA.168256.AND.POPC"}},
        {TcInstrDesc::wgmma(DType::FP16, DType::FP16, 256, OperandSource::SS), Architecture::Hopper,
         {K::TensorCoreSass, "HGMMA.64x256x16.F16"}},
        {TcInstrDesc::wgmma(DType::FP16, DType::FP32, 256, OperandSource::SS), Architecture::Hopper,
         {K::TensorCoreSass, "HGMMA.64x256x16.F32"}},
        {TcInstrDesc::wgmma(DType::TF32, DType::FP32, 256, OperandSource::SS), Architecture::Hopper,
         {K::TensorCoreSass, "HGMMA.64x256x8.F32.TF32"}},
        {TcInstrDesc::wgmma(DType::FP8_E5M2, DType::FP16, 256, OperandSource::SS), Architecture::Hopper,
         {K::TensorCoreSass, "QGMMA.64x256x32.F16.E5M2.E5M2"}},
        {TcInstrDesc::wgmma(DType::FP8_E4M3, DType::FP16, 256, OperandSource::SS), Architecture::Hopper,
         {K::TensorCoreSass, "QGMMA.64x256x32.F16.E4M3.E4M3"}},
        {TcInstrDesc::wgmma(DType::FP8_E4M3, DType::FP32, 256, OperandSource::SS), Architecture::Hopper,
         {K::TensorCoreSass, "QGMMA.64x256x32.F32.E4M3.E4M3"}},
        {TcInstrDesc::wgmma(DType::FP8_E5M2, DType::FP32, 256, OperandSource::SS), Architecture::Hopper,
         {K::TensorCoreSass, "QGMMA.64x256x32.F32.E5M2.E5M2"}},
        {TcInstrDesc::wgmma(DType::INT8, DType::INT32, 256, OperandSource::SS), Architecture::Hopper,
         {K::TensorCoreSass, "IGMMA.64x256x32.S8.S8"}},
        {TcInstrDesc{TcApi::Wgmma, false, {64, 256, 64}, DType::INT4, DType::INT32, OperandSource::SS},
         Architecture::Hopper, {K::Unsupported, ""}},
        {TcInstrDesc::wgmma(DType::Binary, DType::INT32, 256, OperandSource::SS), Architecture::Hopper,
         {K::TensorCoreSass, "BGMMA.64x256x256.AND.POPC"}},
    };
    for (const auto& r : rows) {
        const auto got = sass_lower(r.in, r.arch);
        ck.truth(got == r.want, r.in.label() + " on " + std::string(to_string(r.arch)) + " -> " +
                                    std::string(to_string(got.kind)) + " " + got.name);
    }
    // wgmma has no lowering before Hopper, for any type
    for (auto arch : {Architecture::Ampere, Architecture::Ada})
        for (auto src : {OperandSource::SS, OperandSource::RS})
            for (const auto& in : wgmma_table_rows(src, false)) {
                const auto got = sass_lower(in, arch);
                ck.truth(got.kind == K::Unsupported,
                         in.label() + " on " + std::string(to_string(arch)) + " -> " + std::string(to_string(got.kind)));
            }
    return ck.result(14, "sass-lowering", tol_text(tol, 14));
}

// -- 15 ---------------------------------------------------------------------
CriterionResult c_determinism(const ModelContext& ctx, const Tolerances& tol) {
    Check ck;
    const auto dir = ctx.data_dir / "workloads";
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(dir))
        for (const auto& e : std::filesystem::directory_iterator(dir))
            if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const auto w = load_workload(f);
        const auto serial = run_workload(ctx, w, 1);
        const auto parallel = run_workload(ctx, w, 0);
        const auto again = run_workload(ctx, w, 0);
        bool same = true;
        for (auto fmt : {ReportFormat::csv, ReportFormat::json, ReportFormat::md}) {
            const auto a = render_report(serial, fmt);
            same = same && a == render_report(parallel, fmt) && a == render_report(again, fmt);
        }
        ck.truth(same, f.filename().string() + " byte-identical across runs and thread counts");
    }
    if (files.empty()) ck.truth(false, "no workloads under " + dir.string());

    // Fault injection: scale one energy cell; only the energy criterion may change.
    const double factor = tol.get(15, "fault_factor");
    std::vector<CriterionResult> base, faulted;
    for (int id = 1; id < kCriterionCount; ++id) base.push_back(run_criterion(id, ctx, tol));
    ModelContext bad = ctx;
    const Params cell{{"a", "FP16"}, {"cd", "FP16"}, {"sparse", "false"}};
    ck.truth(bad.store.scale("A100", "tc.energy.efficiency", cell, factor), "fault cell present");
    for (int id = 1; id < kCriterionCount; ++id) faulted.push_back(run_criterion(id, bad, tol));
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (base[i].id == 8)
            ck.truth(!faulted[i].pass, "energy criterion fails under a x" + format_number(factor) + " fault");
        else
            ck.truth(faulted[i].pass == base[i].pass, "C" + std::to_string(base[i].id) + " unaffected by the fault");
    }
    ValidationResult vr;
    vr.criteria = faulted;
    ck.truth(!vr.pass(), "overall result fails under the fault");

    ModelContext empty;
    empty.catalog = ctx.catalog;
    empty.data_dir = ctx.data_dir;
    bool config_error = false;
    try {
        validate(empty, tol);
    } catch (const ConfigError&) {
        config_error = true;
    }
    ck.truth(config_error, "empty calibration store is a configuration error");
    return ck.result(15, "determinism", tol_text(tol, 15));
}

} // namespace

CriterionResult run_criterion(int id, const ModelContext& ctx, const Tolerances& tol) {
    if (id < 1 || id > kCriterionCount) throw UsageError("no criterion " + std::to_string(id));
    if (ctx.store.empty()) throw ConfigError("calibration store is empty");
    if (ctx.catalog.empty()) throw ConfigError("device catalog is empty");
    if (!tol.has(id)) throw ConfigError("tolerances: no entry for " + crit_key(id));
    try {
        switch (id) {
        case 1: return c_memory_ratios(ctx, tol);
        case 2: return c_global_efficiency(ctx, tol);
        case 3: return c_mma_efficiency(ctx, tol);
        case 4: return c_sparse_speedup(ctx, tol);
        case 5: return c_wgmma_dense(ctx, tol);
        case 6: return c_wgmma_sparse(ctx, tol);
        case 7: return c_rand_throttle(ctx, tol);
        case 8: return c_energy(ctx, tol);
        case 9: return c_dpx(ctx, tol);
        case 10: return c_async(ctx, tol);
        case 11: return c_dsm(ctx, tol);
        case 12: return c_te(ctx, tol);
        case 13: return c_llm(ctx, tol);
        case 14: return c_sass(ctx, tol);
        case 15: return c_determinism(ctx, tol);
        default: throw UsageError("no criterion " + std::to_string(id));
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const UsageError&) {
        throw;
    } catch (const Error& e) {
        // a model error inside a criterion is a failure of that criterion, not of the run
        CriterionResult r;
        r.id = id;
        r.name = std::string(kNames[id - 1]);
        r.pass = false;
        r.tolerance = tol_text(tol, id);
        r.worst = e.what();
        r.detail = "error";
        return r;
    }
}

ValidationResult validate(const ModelContext& ctx, const Tolerances& tol) {
    if (ctx.store.empty()) throw ConfigError("calibration store is empty");
    if (ctx.catalog.empty()) throw ConfigError("device catalog is empty");
    for (int id = 1; id <= kCriterionCount; ++id)
        if (!tol.has(id)) throw ConfigError("tolerances: no entry for " + crit_key(id));
    ValidationResult r;
    for (int id = 1; id <= kCriterionCount; ++id) r.criteria.push_back(run_criterion(id, ctx, tol));
    return r;
}

std::string format_result_line(const CriterionResult& c) {
    std::ostringstream os;
    os << (c.pass ? "PASS" : "FAIL") << " C" << (c.id < 10 ? "0" : "") << c.id << ' ' << c.name << " [" << c.detail
       << "; tol " << c.tolerance << "] worst: " << c.worst;
    return os.str();
}

} // namespace gpm
