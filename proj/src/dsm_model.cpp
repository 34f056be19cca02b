#include "gpm/dsm_model.hpp"

#include <algorithm>
#include <cmath>

#include "gpm/error.hpp"
#include "gpm/memory_model.hpp"

namespace gpm {

namespace {

void need_dsm(const DeviceSpec& d) {
    if (!d.features.dsm) throw FeatureUnsupportedError(d.name + " has no distributed shared memory");
}

bool pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

double cs_peak(const CalibrationStore& cs, const DeviceSpec& d, int c) {
    return cs.value(d.name, "dsm.rbc.peak", {{"cs", std::to_string(c)}});
}

} // namespace

void validate_rbc(const RbcWorkload& w) {
    if (w.cluster_size < 2 || w.cluster_size > 16 || !pow2(w.cluster_size))
        throw ValidationError("RBC cluster size must be 2, 4, 8 or 16");
    if (w.block_size < 32 || w.block_size > 1024) throw ValidationError("block_size must be in [32, 1024]");
    if (w.ilp < 1) throw ValidationError("ilp must be >= 1");
}

void validate_histogram(const HistogramConfig& c) {
    if (c.cluster_size < 1 || c.cluster_size > 16 || !pow2(c.cluster_size))
        throw ValidationError("histogram cluster size must be 1, 2, 4, 8 or 16");
    if (c.block_size < 32 || c.block_size > 1024) throw ValidationError("block_size must be in [32, 1024]");
    if (c.nbins < 1) throw ValidationError("nbins must be >= 1");
    if (c.bytes_per_bin < 1) throw ValidationError("bytes_per_bin must be >= 1");
}

double sm2sm_latency(const CalibrationStore& cs, const DeviceSpec& d) {
    need_dsm(d);
    return cs.value(d.name, "dsm.latency.sm2sm");
}

double sm2sm_reduction_vs_l2(const CalibrationStore& cs, const DeviceSpec& d) {
    return 1.0 - sm2sm_latency(cs, d) / level_latency(cs, d, MemLevel::L2);
}

double rbc_contention(const CalibrationStore& cs, const DeviceSpec& d, int cluster_size) {
    need_dsm(d);
    // anchored at CS=2 and CS=4, straight line beyond
    const double slope = (cs_peak(cs, d, 2) / cs_peak(cs, d, 4) - 1.0) / 2.0;
    return 1.0 + slope * (cluster_size - 2);
}

double rbc_peak(const CalibrationStore& cs, const DeviceSpec& d, int cluster_size) {
    validate_rbc({cluster_size, 1024, 1});
    return cs_peak(cs, d, 2) / rbc_contention(cs, d, cluster_size);
}

double rbc_throughput(const CalibrationStore& cs, const DeviceSpec& d, const RbcWorkload& w) {
    validate_rbc(w);
    if (!d.features.dsm) throw FeatureUnsupportedError(d.name + " has no distributed shared memory");
    const double peak = rbc_peak(cs, d, w.cluster_size);
    // one block per SM; Little's law on the bytes each SM keeps in flight
    const int sms = d.sm_count / w.cluster_size * w.cluster_size;
    const double per_sm_bps = peak * 1e12 / sms;
    const double latency_s = sm2sm_latency(cs, d) / (d.effective_clock_mhz() * 1e6);
    const double needed = per_sm_bps * latency_s;
    const double in_flight = static_cast<double>(w.block_size) * w.ilp * 4.0;
    return peak * std::min(1.0, in_flight / needed);
}

HistogramOccupancy histogram_occupancy(const DeviceSpec& d, const HistogramConfig& c) {
    validate_histogram(c);
    HistogramOccupancy o;
    const long long bins_here = (static_cast<long long>(c.nbins) + c.cluster_size - 1) / c.cluster_size;
    o.smem_per_block = bins_here * c.bytes_per_bin;
    long long by_smem = static_cast<long long>(d.smem_carveout_bytes) / o.smem_per_block;
    long long blocks = std::min<long long>({d.max_blocks_per_sm, d.max_threads_per_sm / c.block_size, by_smem});
    o.active_blocks = static_cast<int>(std::max<long long>(blocks, 0));
    o.active_threads = o.active_blocks * c.block_size;
    return o;
}

namespace {

double capacity(const CalibrationStore& cs, const DeviceSpec& d, const char* metric) {
    return cs.value(d.name, metric) * d.max_threads_per_sm;
}

// time per element ~ 1/threads + local_share/L + remote_share * contention/N
double score_at(const CalibrationStore& cs, const DeviceSpec& d, int cluster, double threads) {
    if (threads <= 0) return 0.0;
    const double local = 1.0 / cluster;
    double t = 1.0 / threads + local / capacity(cs, d, "dsm.hist.local_capacity");
    if (cluster > 1)
        t += (1.0 - local) * rbc_contention(cs, d, cluster) / capacity(cs, d, "dsm.hist.network_capacity");
    return 1.0 / t;
}

} // namespace

double histogram_score(const CalibrationStore& cs, const DeviceSpec& d, const HistogramConfig& c) {
    if (c.cluster_size > 1) need_dsm(d);
    const auto occ = histogram_occupancy(d, c);
    return score_at(cs, d, c.cluster_size, occ.active_threads);
}

double histogram_throughput(const CalibrationStore& cs, const DeviceSpec& d, const HistogramConfig& c) {
    const double s = histogram_score(cs, d, c);
    double best = 0.0;
    for (int k : {1, 2, 4, 8, 16}) {
        if (k > 1 && !d.features.dsm) break;
        best = std::max(best, score_at(cs, d, k, d.max_threads_per_sm));
    }
    return s / best;
}

int histogram_best_cluster(const CalibrationStore& cs, const DeviceSpec& d, int block_size, int nbins,
                           const std::vector<int>& candidates) {
    int best = 0;
    double best_score = -1.0;
    for (int k : candidates) {
        const double s = histogram_score(cs, d, {k, block_size, nbins});
        if (s > best_score) {
            best_score = s;
            best = k;
        }
    }
    return best;
}

} // namespace gpm
