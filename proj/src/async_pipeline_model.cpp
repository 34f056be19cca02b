#include "gpm/async_pipeline_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <gsl/gsl_multifit_nlinear.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include "gpm/error.hpp"

namespace gpm {

std::string_view to_string(CopyMode m) { return m == CopyMode::SyncShare ? "SyncShare" : "AsyncPipe"; }

std::optional<CopyMode> parse_copy_mode(std::string_view s) {
    if (s == "SyncShare") return CopyMode::SyncShare;
    if (s == "AsyncPipe") return CopyMode::AsyncPipe;
    return std::nullopt;
}

void validate_config(const AsyncMatmulConfig& cfg) {
    if (std::find(kAsyncBlockDims.begin(), kAsyncBlockDims.end(), cfg.block_dim) == kAsyncBlockDims.end())
        throw ValidationError("block_dim must be 8, 16 or 32");
    if (std::find(kAsyncBlocksPerSm.begin(), kAsyncBlocksPerSm.end(), cfg.blocks_per_sm) == kAsyncBlocksPerSm.end())
        throw ValidationError("blocks_per_sm must be one of 1, 2, 4, 8, 16, 32");
    if (cfg.k_extent != 2048) throw ValidationError("k_extent is fixed at 2048");
}

std::array<double, PipelineParams::kCount> PipelineParams::pack() const {
    return {copy_cost[0],          copy_cost[1],          copy_cost[2],          compute_cost[0],
            compute_cost[1],       compute_cost[2],       pipeline_overhead,     copy_cost_resource[0],
            copy_cost_resource[1], copy_cost_resource[2], compute_cost_resource[0], compute_cost_resource[1],
            compute_cost_resource[2], resource_overhead,  sharpness,             warp_saturation};
}

PipelineParams PipelineParams::unpack(const std::array<double, kCount>& v) {
    PipelineParams p;
    p.copy_cost = {v[0], v[1], v[2]};
    p.compute_cost = {v[3], v[4], v[5]};
    p.pipeline_overhead = v[6];
    p.copy_cost_resource = {v[7], v[8], v[9]};
    p.compute_cost_resource = {v[10], v[11], v[12]};
    p.resource_overhead = v[13];
    p.sharpness = v[14];
    p.warp_saturation = v[15];
    return p;
}

const std::array<std::string_view, PipelineParams::kCount>& PipelineParams::names() {
    static const std::array<std::string_view, kCount> n{
        "copy_cost.8",          "copy_cost.16",          "copy_cost.32",          "compute_cost.8",
        "compute_cost.16",      "compute_cost.32",       "pipeline_overhead",     "copy_cost_resource.8",
        "copy_cost_resource.16", "copy_cost_resource.32", "compute_cost_resource.8", "compute_cost_resource.16",
        "compute_cost_resource.32", "resource_overhead", "sharpness",             "warp_saturation"};
    return n;
}

int async_block_index(int block_dim) {
    for (std::size_t i = 0; i < kAsyncBlockDims.size(); ++i)
        if (kAsyncBlockDims[i] == block_dim) return static_cast<int>(i);
    throw ValidationError("block_dim must be 8, 16 or 32");
}

int resident_blocks(const AsyncMatmulConfig& cfg, int max_warps_per_sm) {
    const int warps_per_block = std::max(1, cfg.block_dim * cfg.block_dim / 32);
    return std::max(1, std::min(cfg.blocks_per_sm, max_warps_per_sm / warps_per_block));
}

double smooth_max(double a, double b, double k) {
    const double m = std::max(a, b);
    if (m <= 0) return 0.0;
    return m * std::pow(std::pow(a / m, k) + std::pow(b / m, k), 1.0 / k);
}

StepCosts step_costs(const PipelineParams& p, const AsyncMatmulConfig& cfg, int max_warps_per_sm) {
    const int i = async_block_index(cfg.block_dim);
    const int r = resident_blocks(cfg, max_warps_per_sm);
    const double warps = r * std::max(1.0, cfg.block_dim * cfg.block_dim / 32.0);

    StepCosts c;
    c.exposed_copy = p.copy_cost[i] * std::min(p.warp_saturation / warps, 1.0);
    const double P = p.compute_cost[i];
    c.latency_sync = c.exposed_copy + P;
    c.latency_async = std::max(c.exposed_copy, P) + p.pipeline_overhead;
    const double cr = p.copy_cost_resource[i], pr = p.compute_cost_resource[i];
    c.resource_sync = r * (cr + pr);
    c.resource_async = r * (std::max(cr, pr) + p.resource_overhead);
    c.sync = smooth_max(c.latency_sync, c.resource_sync, p.sharpness);
    c.async = smooth_max(c.latency_async, c.resource_async, p.sharpness);
    return c;
}

double model_throughput(const PipelineParams& p, int sm_count, int max_warps_per_sm, const AsyncMatmulConfig& cfg,
                        CopyMode mode) {
    const auto c = step_costs(p, cfg, max_warps_per_sm);
    const double t_ns = mode == CopyMode::SyncShare ? c.sync : c.async;
    const double flops = 2.0 * cfg.block_dim * cfg.block_dim * static_cast<double>(cfg.block_dim);
    // flops per ns == GFLOPS
    return sm_count * resident_blocks(cfg, max_warps_per_sm) * flops / t_ns;
}

namespace {

constexpr double kNsPerMs = 1e6;

Params cell_params(const AsyncMatmulConfig& cfg, CopyMode mode) {
    return {{"block", std::to_string(cfg.block_dim)},
            {"blocks_per_sm", std::to_string(cfg.blocks_per_sm)},
            {"mode", std::string(to_string(mode))}};
}

bool is_time_param(std::size_t i) { return i < 14; }

std::pair<std::string, Params> record_key(std::size_t i) {
    std::string_view n = PipelineParams::names()[i];
    auto dot = n.find('.');
    if (dot == std::string_view::npos) return {"async.params." + std::string(n), {}};
    return {"async.params." + std::string(n.substr(0, dot)), {{"block", std::string(n.substr(dot + 1))}}};
}

} // namespace

PipelineParams AsyncPipelineModel::params(const DeviceSpec& d) const {
    std::array<double, PipelineParams::kCount> v{};
    for (std::size_t i = 0; i < v.size(); ++i) {
        auto [metric, p] = record_key(i);
        const auto* r = cs_.lookup(d.name, metric, p);
        if (!r) throw AbsentRecordError("no fitted async pipeline parameters for " + d.name + " (" + metric + ")");
        v[i] = is_time_param(i) ? r->value * kNsPerMs : r->value;
    }
    return PipelineParams::unpack(v);
}

double AsyncPipelineModel::model_matmul_throughput(const DeviceSpec& d, const AsyncMatmulConfig& cfg,
                                                   CopyMode mode) const {
    validate_config(cfg);
    return model_throughput(params(d), d.sm_count, d.max_warps_per_sm, cfg, mode);
}

double AsyncPipelineModel::predict_matmul_throughput(const DeviceSpec& d, const AsyncMatmulConfig& cfg,
                                                     CopyMode mode) const {
    validate_config(cfg);
    if (const auto* r = cs_.lookup(d.name, "async.throughput", cell_params(cfg, mode))) return r->value;
    return model_matmul_throughput(d, cfg, mode);
}

double AsyncPipelineModel::pipeline_improvement(const DeviceSpec& d, int block_dim) const {
    const auto p = params(d);
    double sum = 0.0;
    for (int b : kAsyncBlocksPerSm) {
        AsyncMatmulConfig cfg{block_dim, b};
        validate_config(cfg);
        const double a = model_throughput(p, d.sm_count, d.max_warps_per_sm, cfg, CopyMode::AsyncPipe);
        const double s = model_throughput(p, d.sm_count, d.max_warps_per_sm, cfg, CopyMode::SyncShare);
        sum += a / s - 1.0;
    }
    return 100.0 * sum / static_cast<double>(kAsyncBlocksPerSm.size());
}

AsyncFitData async_fit_data(const CalibrationStore& cs, const DeviceSpec& d) {
    AsyncFitData data;
    data.sm_count = d.sm_count;
    data.max_warps_per_sm = d.max_warps_per_sm;
    for (std::size_t i = 0; i < kAsyncBlockDims.size(); ++i) {
        const int bd = kAsyncBlockDims[i];
        for (int b : kAsyncBlocksPerSm)
            for (auto mode : {CopyMode::AsyncPipe, CopyMode::SyncShare})
                data.cells.push_back(
                    {bd, b, mode, cs.value(d.name, "async.throughput", cell_params({bd, b}, mode))});
        data.improvement_pct[i] = cs.value(d.name, "async.improvement", {{"block", std::to_string(bd)}});
    }
    return data;
}

std::vector<CalibRecord> pipeline_params_records(const std::string& device, const PipelineParams& p) {
    std::vector<CalibRecord> out;
    const auto v = p.pack();
    for (std::size_t i = 0; i < v.size(); ++i) {
        auto [metric, params] = record_key(i);
        out.push_back({device, metric, params, is_time_param(i) ? v[i] / kNsPerMs : v[i],
                       is_time_param(i) ? Unit::ms : Unit::ratio, "fit:async"});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fit. Parameters live in an unbounded space z and map into boxes with a
// logistic squash: times in [e^-8, e^12] ns, sharpness in [0.7, 12], warp
// saturation in [e^-8, 64] warps.

namespace {

constexpr std::size_t N = PipelineParams::kCount;

double squash(double z, double lo, double hi) { return lo + (hi - lo) / (1.0 + std::exp(-z)); }
double unsquash(double v, double lo, double hi) {
    const double u = std::clamp((v - lo) / (hi - lo), 1e-9, 1.0 - 1e-9);
    return std::log(u / (1.0 - u));
}

constexpr double kLogLo = -8.0, kLogHi = 12.0;
constexpr double kKLo = 0.7, kKHi = 12.0;
const double kWsLo = -8.0, kWsHi = std::log(64.0);

PipelineParams decode(const double* z) {
    std::array<double, N> v{};
    for (std::size_t i = 0; i < 14; ++i) v[i] = std::exp(squash(z[i], kLogLo, kLogHi));
    v[14] = squash(z[14], kKLo, kKHi);
    v[15] = std::exp(squash(z[15], kWsLo, kWsHi));
    return PipelineParams::unpack(v);
}

struct Problem {
    const AsyncFitData* data;
    const AsyncFitOptions* opt;

    double predict(const PipelineParams& p, const AsyncCell& c) const {
        return model_throughput(p, data->sm_count, data->max_warps_per_sm, {c.block_dim, c.blocks_per_sm},
                                c.mode);
    }

    std::array<double, 3> improvements(const PipelineParams& p) const {
        std::array<double, 3> out{};
        for (std::size_t i = 0; i < 3; ++i) {
            double s = 0.0;
            for (int b : kAsyncBlocksPerSm) {
                AsyncMatmulConfig cfg{kAsyncBlockDims[i], b};
                s += model_throughput(p, data->sm_count, data->max_warps_per_sm, cfg, CopyMode::AsyncPipe) /
                         model_throughput(p, data->sm_count, data->max_warps_per_sm, cfg, CopyMode::SyncShare) -
                     1.0;
            }
            out[i] = 100.0 * s / kAsyncBlocksPerSm.size();
        }
        return out;
    }

    std::size_t residual_count() const { return data->cells.size() + 3; }

    void residuals(const double* z, double* out) const {
        const auto p = decode(z);
        std::size_t j = 0;
        for (const auto& c : data->cells) out[j++] = std::log(predict(p, c) / c.gflops);
        const auto imp = improvements(p);
        for (std::size_t i = 0; i < 3; ++i)
            out[j++] = opt->improvement_weight * (imp[i] - data->improvement_pct[i]) / 100.0;
        for (std::size_t i = 0; i < j; ++i)
            if (!std::isfinite(out[i])) out[i] = 1e3;
    }

    // Normalised misses raised to p/2, so least squares on them minimises the p-norm;
    // large p approaches the minimax objective while staying smooth.
    void lp_residuals(const double* z, double p, double* out) const {
        const auto prm = decode(z);
        std::size_t j = 0;
        auto put = [&](double n) { out[j++] = std::copysign(std::pow(std::abs(n), p / 2.0), n); };
        for (const auto& c : data->cells) put(std::log(predict(prm, c) / c.gflops) / opt->cell_scale);
        const auto imp = improvements(prm);
        for (std::size_t i = 0; i < 3; ++i) put((imp[i] - data->improvement_pct[i]) / opt->improvement_scale);
        for (std::size_t i = 0; i < j; ++i)
            if (!std::isfinite(out[i])) out[i] = 1e6;
    }

    // < 1 means every cell within 10% and every improvement within 2 points
    double score(const double* z) const {
        const auto p = decode(z);
        double worst = 0.0;
        for (const auto& c : data->cells)
            worst = std::max(worst, std::abs(std::log(predict(p, c) / c.gflops)) / opt->cell_scale);
        const auto imp = improvements(p);
        for (std::size_t i = 0; i < 3; ++i)
            worst = std::max(worst, std::abs(imp[i] - data->improvement_pct[i]) / opt->improvement_scale);
        return std::isfinite(worst) ? worst : 1e9;
    }
};

struct LmCtx {
    const Problem* pb;
    double p;  // 0: plain least squares
};

int lm_f(const gsl_vector* x, void* ctx, gsl_vector* f) {
    const auto* c = static_cast<const LmCtx*>(ctx);
    // f may be a strided column view of the jacobian during finite differencing
    std::vector<double> r(f->size);
    if (c->p > 0)
        c->pb->lp_residuals(x->data, c->p, r.data());
    else
        c->pb->residuals(x->data, r.data());
    for (std::size_t i = 0; i < r.size(); ++i) gsl_vector_set(f, i, r[i]);
    return GSL_SUCCESS;
}

double nm_f(const gsl_vector* x, void* ctx) { return static_cast<const Problem*>(ctx)->score(x->data); }

std::array<double, N> run_lm(const Problem& pb, const std::array<double, N>& z0, double p = 0.0) {
    LmCtx ctx{&pb, p};
    gsl_multifit_nlinear_fdf fdf{};
    fdf.f = lm_f;
    fdf.df = nullptr;  // finite differences
    fdf.fvv = nullptr;
    fdf.n = pb.residual_count();
    fdf.p = N;
    fdf.params = &ctx;

    auto params = gsl_multifit_nlinear_default_parameters();
    params.trs = gsl_multifit_nlinear_trs_lm;
    auto* w = gsl_multifit_nlinear_alloc(gsl_multifit_nlinear_trust, &params, fdf.n, fdf.p);
    gsl_vector_const_view x0 = gsl_vector_const_view_array(z0.data(), N);
    gsl_multifit_nlinear_init(&x0.vector, &fdf, w);
    int info = 0;
    gsl_multifit_nlinear_driver(400, 1e-10, 1e-10, 0.0, nullptr, nullptr, &info, w);
    std::array<double, N> z{};
    const gsl_vector* x = gsl_multifit_nlinear_position(w);
    for (std::size_t i = 0; i < N; ++i) z[i] = gsl_vector_get(x, i);
    gsl_multifit_nlinear_free(w);
    return z;
}

std::pair<double, std::array<double, N>> run_minimax(const Problem& pb, std::array<double, N> z) {
    gsl_multimin_function fn{nm_f, N, const_cast<Problem*>(&pb)};
    double best = pb.score(z.data());
    // restart the simplex around the incumbent until it stops improving
    for (int round = 0; round < 8; ++round) {
        auto* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, N);
        gsl_vector_view x = gsl_vector_view_array(z.data(), N);
        gsl_vector* step = gsl_vector_alloc(N);
        gsl_vector_set_all(step, round == 0 ? 0.3 : 0.1);
        gsl_multimin_fminimizer_set(s, &fn, &x.vector, step);
        for (int it = 0; it < 12000; ++it) {
            if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
            if (gsl_multimin_fminimizer_size(s) < 1e-9) break;
        }
        const double got = gsl_multimin_fminimizer_minimum(s);
        const bool improved = got < best - 1e-7;
        if (got < best) {
            best = got;
            for (std::size_t i = 0; i < N; ++i) z[i] = gsl_vector_get(s->x, i);
        }
        gsl_vector_free(step);
        gsl_multimin_fminimizer_free(s);
        if (!improved && round > 0) break;
    }
    return {best, z};
}

} // namespace

AsyncFitResult fit_pipeline_params(const AsyncFitData& data, const AsyncFitOptions& opt) {
    if (data.cells.empty()) throw ValidationError("no cells to fit");
    Problem pb{&data, &opt};
    gsl_set_error_handler_off();

    std::mt19937_64 rng(opt.seed);
    auto uniform = [&](double lo, double hi) {
        // explicit mapping so the draw does not depend on the library's distributions
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    };

    std::vector<std::pair<double, std::array<double, N>>> starts;
    for (int s = 0; s < opt.starts; ++s) {
        std::array<double, N> z{};
        for (std::size_t i = 0; i < 14; ++i) z[i] = unsquash(uniform(0.0, 7.0), kLogLo, kLogHi);
        z[14] = unsquash(uniform(0.72, 4.5), kKLo, kKHi);
        z[15] = unsquash(uniform(0.0, 4.0), kWsLo, kWsHi);
        z = run_lm(pb, z);
        starts.emplace_back(pb.score(z.data()), z);
    }
    std::stable_sort(starts.begin(), starts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    double best = std::numeric_limits<double>::infinity();
    std::array<double, N> best_z{};
    const int refine = std::min<int>(opt.refine, static_cast<int>(starts.size()));
    for (int i = 0; i < refine; ++i) {
        auto z0 = starts[i].second;
        for (double p : {4.0, 8.0, 16.0, 32.0}) {
            auto z1 = run_lm(pb, z0, p);
            if (pb.score(z1.data()) < pb.score(z0.data())) z0 = z1;
        }
        auto [sc, z] = run_minimax(pb, z0);
        if (sc < best) {
            best = sc;
            best_z = z;
        }
    }

    AsyncFitResult r;
    r.params = decode(best_z.data());
    r.score = best;
    for (const auto& c : data.cells)
        r.worst_cell_rel = std::max(r.worst_cell_rel, std::abs(pb.predict(r.params, c) / c.gflops - 1.0));
    r.improvement_pct = pb.improvements(r.params);
    return r;
}

} // namespace gpm
