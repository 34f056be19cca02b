#pragma once

#include <vector>

#include "gpm/calibration_store.hpp"
#include "gpm/device_catalog.hpp"

namespace gpm {

// Block R writes its shared buffer into block (R+1) mod CS.
struct RbcWorkload {
    int cluster_size = 2;
    int block_size = 1024;
    int ilp = 1;
};

struct HistogramConfig {
    int cluster_size = 1;
    int block_size = 128;
    int nbins = 1024;
    int bytes_per_bin = 4;
};

struct HistogramOccupancy {
    long long smem_per_block = 0;
    int active_blocks = 0;
    int active_threads = 0;
};

void validate_rbc(const RbcWorkload& w);
void validate_histogram(const HistogramConfig& c);

double sm2sm_latency(const CalibrationStore& cs, const DeviceSpec& d);
// 1 - sm2sm / L2 latency
double sm2sm_reduction_vs_l2(const CalibrationStore& cs, const DeviceSpec& d);

// Relative cost of cluster-wide traffic, 1 at CS=2.
double rbc_contention(const CalibrationStore& cs, const DeviceSpec& d, int cluster_size);
// TB/s with enough bytes in flight.
double rbc_peak(const CalibrationStore& cs, const DeviceSpec& d, int cluster_size);
double rbc_throughput(const CalibrationStore& cs, const DeviceSpec& d, const RbcWorkload& w);

HistogramOccupancy histogram_occupancy(const DeviceSpec& d, const HistogramConfig& c);
// elements per unit time, arbitrary scale
double histogram_score(const CalibrationStore& cs, const DeviceSpec& d, const HistogramConfig& c);
// histogram_score over the best the device can reach at full occupancy
double histogram_throughput(const CalibrationStore& cs, const DeviceSpec& d, const HistogramConfig& c);
int histogram_best_cluster(const CalibrationStore& cs, const DeviceSpec& d, int block_size, int nbins,
                           const std::vector<int>& candidates = {1, 2, 4, 8, 16});

} // namespace gpm
