#include "doctest.h"

#include <array>
#include <cmath>

#include "gpm/error.hpp"
#include "gpm/tensorcore_model.hpp"
#include "support.hpp"

using namespace gpm;

namespace {

const DeviceSpec& dev(std::string_view n) { return test::dev(n); }
TensorCoreModel model() { return TensorCoreModel(test::ctx().store); }

TcInstrDesc mma(DType a, DType cd, int k, bool sparse = false) { return TcInstrDesc::mma(a, cd, {16, 8, k}, sparse); }
TcInstrDesc wg(DType a, DType cd, int n, OperandSource s, bool sparse = false) {
    return TcInstrDesc::wgmma(a, cd, n, s, sparse);
}

const auto SS = OperandSource::SS;
const auto RS = OperandSource::RS;

// H800 mma rows as printed: dense / sparse throughput, table order
constexpr std::array<double, 8> kH800Dense{368.6, 494.4, 363.7, 490.7, 180.6, 246.4, 730.3, 977.9};
constexpr std::array<double, 8> kH800Sparse{493.8, 722.8, 488.7, 721.8, 240.7, 363.3, 970.0, 1435};
constexpr std::array<double, 8> kH800Peak{756.5, 756.5, 756.5, 756.5, 378, 378, 1513, 1513};

} // namespace

TEST_CASE("lowering on Hopper") {
    const auto H = Architecture::Hopper;
    CHECK(sass_lower(mma(DType::FP16, DType::FP16, 16), H).name == "HMMA.16816.F16");
    CHECK(sass_lower(mma(DType::FP16, DType::FP32, 16), H).name == "HMMA.16816.F32");
    CHECK(sass_lower(mma(DType::TF32, DType::FP32, 8), H).name == "HMMA.1688.F32.TF32");
    CHECK(sass_lower(mma(DType::INT8, DType::INT32, 32), H).name == "IMMA.16832.S8.S8");
    CHECK(sass_lower(wg(DType::FP16, DType::FP16, 256, SS), H).name == "HGMMA.64x256x16.F16");
    CHECK(sass_lower(wg(DType::FP16, DType::FP32, 256, SS), H).name == "HGMMA.64x256x16.F32");
    CHECK(sass_lower(wg(DType::TF32, DType::FP32, 256, SS), H).name == "HGMMA.64x256x8.F32.TF32");
    CHECK(sass_lower(wg(DType::FP8_E5M2, DType::FP16, 256, SS), H).name == "QGMMA.64x256x32.F16.E5M2.E5M2");
    CHECK(sass_lower(wg(DType::FP8_E4M3, DType::FP16, 256, SS), H).name == "QGMMA.64x256x32.F16.E4M3.E4M3");
    CHECK(sass_lower(wg(DType::FP8_E4M3, DType::FP32, 256, SS), H).name == "QGMMA.64x256x32.F32.E4M3.E4M3");
    CHECK(sass_lower(wg(DType::FP8_E5M2, DType::FP32, 256, SS), H).name == "QGMMA.64x256x32.F32.E5M2.E5M2");
    CHECK(sass_lower(wg(DType::INT8, DType::INT32, 256, SS), H).name == "IGMMA.64x256x32.S8.S8");
}

TEST_CASE("lowering exceptions") {
    // no FP8 mma anywhere
    for (auto arch : {Architecture::Ampere, Architecture::Ada, Architecture::Hopper})
        CHECK(sass_lower(mma(DType::FP8_E4M3, DType::FP32, 32), arch).kind == LoweringResult::Kind::Unsupported);
    // wgmma is Hopper only
    CHECK_FALSE(sass_lower(wg(DType::FP16, DType::FP16, 256, SS), Architecture::Ampere).supported());
    CHECK_FALSE(sass_lower(wg(DType::FP16, DType::FP16, 256, SS), Architecture::Ada).supported());
    // INT4 falls back to CUDA cores on Hopper, stays on tensor cores before
    const auto int4 = mma(DType::INT4, DType::INT32, 32);
    const auto h = sass_lower(int4, Architecture::Hopper);
    CHECK(h.kind == LoweringResult::Kind::CudaCoreFallback);
    CHECK(h.name == "IMAD.MOV.U32");
    CHECK(sass_lower(int4, Architecture::Ampere).name == "IMMA.16832.S4.S4");
    CHECK(sass_lower(int4, Architecture::Ada).name == "IMMA.16832.S4.S4");
    // no INT4 wgmma
    TcInstrDesc w4{TcApi::Wgmma, false, {64, 256, 64}, DType::INT4, DType::INT32, SS};
    CHECK_FALSE(sass_lower(w4, Architecture::Hopper).supported());
    // bad accumulator
    CHECK_FALSE(sass_lower(mma(DType::INT8, DType::FP16, 16), Architecture::Hopper).supported());
}

TEST_CASE("lowered names are never empty") {
    for (auto arch : {Architecture::Ampere, Architecture::Ada, Architecture::Hopper})
        for (bool sp : {false, true}) {
            for (const auto& r : mma_table_rows(sp)) {
                const auto l = sass_lower(r, arch);
                CHECK(l.supported());
                CHECK_FALSE(l.name.empty());
            }
            for (const auto& r : wgmma_table_rows(RS, sp)) CHECK((sass_lower(r, arch).supported() == (arch == Architecture::Hopper)));
        }
}

TEST_CASE("operation counts") {
    CHECK(instr_ops(mma(DType::FP16, DType::FP16, 16)) == 4096);
    CHECK(instr_ops(wg(DType::FP16, DType::FP32, 256, SS)) == 524288);
    const auto sp = wg(DType::FP16, DType::FP32, 256, SS, true);
    CHECK(sp.shape.k == 32);
    CHECK(instr_ops(sp) == 1048576);
}

TEST_CASE("wgmma throughput agrees with ops per cycle at the device clock") {
    // one warp group per SM finishing one instruction per latency period
    const auto& h = dev("H800");
    const auto m = model();
    for (bool sp : {false, true})
        for (auto src : {SS, RS})
            for (const auto& r : wgmma_table_rows(src, sp)) {
                CAPTURE(r.label());
                const double oracle =
                    instr_ops(r) / m.predict_latency(h, r) * h.sm_count * h.max_clock_mhz * 1e6 / 1e12;
                const double ratio = m.predict_throughput(h, r, Init::Zero) / oracle;
                CHECK(ratio >= 0.85);
                CHECK(ratio <= 1.0);
            }
}

TEST_CASE("instruction descriptor invariants") {
    CHECK_NOTHROW(validate_instr(mma(DType::FP16, DType::FP32, 16)));
    CHECK_NOTHROW(validate_instr(mma(DType::FP16, DType::FP32, 32, true)));
    CHECK_NOTHROW(validate_instr(mma(DType::FP16, DType::FP32, 16, true)));
    CHECK_THROWS_AS(validate_instr(mma(DType::FP16, DType::FP32, 8, true)), ValidationError);
    auto bad_src = mma(DType::FP16, DType::FP32, 16);
    bad_src.source = SS;
    CHECK_THROWS_AS(validate_instr(bad_src), ValidationError);
    auto rr = wg(DType::FP16, DType::FP32, 128, SS);
    rr.source = OperandSource::RR;
    CHECK_THROWS_AS(validate_instr(rr), ValidationError);
    auto m32 = wg(DType::FP16, DType::FP32, 128, SS);
    m32.shape.m = 32;
    CHECK_THROWS_AS(validate_instr(m32), ValidationError);
    for (int n : wgmma_n_values()) CHECK_NOTHROW(validate_instr(wg(DType::FP16, DType::FP32, n, RS)));
    CHECK_THROWS_AS(validate_instr(wg(DType::FP16, DType::FP32, 12, RS)), ValidationError);
    CHECK_THROWS_AS(validate_instr(wg(DType::FP16, DType::FP32, 264, RS)), ValidationError);
}

TEST_CASE("latency") {
    const auto m = model();
    CHECK(m.predict_latency(dev("RTX4090"), mma(DType::FP16, DType::FP32, 16)) == 33.0);
    CHECK(m.predict_latency(dev("H800"), wg(DType::FP16, DType::FP32, 128, SS)) == 64.0);
    CHECK(m.predict_latency(dev("H800"), wg(DType::FP16, DType::FP32, 256, SS, true)) == 144.0);
    CHECK(m.predict_latency(dev("A100"), mma(DType::INT8, DType::INT32, 64, true)) == 26.6);
}

TEST_CASE("uncalibrated latency points") {
    const auto m = model();
    // dense N >= 64 follows N/2
    CHECK(m.predict_latency(dev("H800"), wg(DType::FP16, DType::FP32, 192, SS)) == 96.0);
    CHECK(m.predict_latency(dev("H800"), wg(DType::BF16, DType::FP32, 96, RS)) == 48.0);
    // no rule for sparse or small N
    CHECK_THROWS_AS(m.predict_latency(dev("H800"), wg(DType::FP16, DType::FP32, 192, SS, true)), AbsentRecordError);
    CHECK_THROWS_AS(m.predict_latency(dev("H800"), wg(DType::FP16, DType::FP32, 24, SS)), AbsentRecordError);
    CHECK_THROWS_AS(m.predict_latency(dev("A100"), mma(DType::BF16, DType::FP32, 16)), AbsentRecordError);
    // wgmma on Ampere
    CHECK_THROWS_AS(m.predict_latency(dev("A100"), wg(DType::FP16, DType::FP32, 128, SS)),
                    UnsupportedInstructionError);
    CHECK_THROWS_AS(m.predict_latency(dev("H800"), mma(DType::FP8_E4M3, DType::FP32, 32)),
                    UnsupportedInstructionError);
}

TEST_CASE("dense wgmma latency rule") {
    for (int n : {64, 128, 256}) {
        CHECK(wgmma_dense_latency_model(n) == n / 2.0);
        for (auto src : {SS, RS}) CHECK(model().predict_latency(dev("H800"), wg(DType::FP16, DType::FP32, n, src)) == n / 2.0);
    }
}

TEST_CASE("throughput") {
    const auto m = model();
    CHECK(m.predict_throughput(dev("H800"), wg(DType::FP16, DType::FP16, 256, SS), Init::Zero) == 729.3);
    CHECK(m.predict_throughput(dev("H800"), mma(DType::FP16, DType::FP16, 16), Init::Zero) == 494.4);
    CHECK(m.predict_throughput(dev("H800"), wg(DType::FP8_E4M3, DType::FP32, 256, RS), Init::Rand) == 1419.8);
    // E5M2 shares the FP8 rows
    CHECK(m.predict_throughput(dev("H800"), wg(DType::FP8_E5M2, DType::FP32, 256, RS), Init::Rand) == 1419.8);
    CHECK(m.predict_throughput(dev("H800"), wg(DType::FP16, DType::FP32, 8, RS), Init::Rand) == 215.2);
    CHECK(m.predict_throughput(dev("H800"), wg(DType::FP16, DType::FP32, 32, SS, true), Init::Zero) == 727.1);
}

TEST_CASE("analytic throughput route") {
    const auto m = model();
    const auto& h = dev("H800");
    const auto in = wg(DType::BF16, DType::FP32, 128, SS);
    CHECK_THROWS(m.predict_throughput(h, in, Init::Zero));  // no BF16 peak
    const auto i8 = wg(DType::INT8, DType::INT32, 128, RS);
    const double z = m.predict_throughput(h, i8, Init::Zero);
    CHECK(z == doctest::Approx(1513 * m.efficiency_factor(h, TcApi::Wgmma, false, RS)));
    CHECK(z / 1513 >= 0.95);
    const double r = m.predict_throughput(h, i8, Init::Rand);
    CHECK(r == doctest::Approx(z * m.rand_throttle(h, DType::INT8, DType::INT32)));
    CHECK(r <= z);
    // mma tables carry no random-init runs
    CHECK_THROWS_AS(m.predict_throughput(h, mma(DType::FP16, DType::FP16, 16), Init::Rand), AbsentRecordError);
}

TEST_CASE("efficiency") {
    const auto m = model();
    for (const auto& r : mma_table_rows(false)) {
        CAPTURE(r.label());
        CHECK(m.efficiency(dev("A100"), r, Init::Zero) >= 0.95);
    }
    for (auto src : {SS, RS})
        for (const auto& r : wgmma_table_rows(src, false)) {
            CAPTURE(r.label());
            CHECK(m.efficiency(dev("H800"), r, Init::Zero) >= 0.95);
        }
    // overclocked part may exceed its peak
    CHECK(m.efficiency(dev("RTX4090"), mma(DType::FP16, DType::FP16, 16), Init::Zero) > 1.0);
}

TEST_CASE("H800 mma mean efficiency matches the printed cells") {
    // dense against the dense peak, sparse against twice the peak
    double oracle = 0;
    for (std::size_t i = 0; i < 8; ++i) oracle += kH800Dense[i] / kH800Peak[i] + kH800Sparse[i] / (2 * kH800Peak[i]);
    oracle /= 16;

    const auto m = model();
    double mean = 0;
    int n = 0;
    for (bool sp : {false, true})
        for (const auto& r : mma_table_rows(sp)) {
            mean += m.efficiency(dev("H800"), r, Init::Zero);
            ++n;
        }
    mean /= n;
    CHECK(n == 16);
    CHECK(mean == doctest::Approx(oracle).epsilon(1e-12));
    // the quoted average is not reachable from these cells (see README)
    CHECK(std::abs(100 * mean - 62.9) > 1.0);
}

TEST_CASE("sparse speedup") {
    const auto m = model();
    CHECK(m.sparse_speedup(dev("RTX4090"), mma(DType::FP16, DType::FP16, 16)) ==
          doctest::Approx(711.8 / 357.6).epsilon(1e-12));
    CHECK(m.sparse_speedup(dev("A100"), mma(DType::INT8, DType::INT32, 32)) ==
          doctest::Approx(1210 / 607.6).epsilon(1e-12));

    double mean = 0;
    for (const auto& r : mma_table_rows(false)) mean += m.sparse_speedup(dev("H800"), r);
    mean /= 8;
    CHECK(mean == doctest::Approx(1.42).epsilon(0.03 / 1.42));

    CHECK_THROWS_AS(m.sparse_speedup(dev("A100"), mma(DType::BF16, DType::FP32, 16)), AbsentRecordError);
}

TEST_CASE("sparse never more than doubles dense with logical k") {
    const auto m = model();
    for (const auto& d : test::ctx().catalog.devices())
        for (const auto& r : mma_table_rows(false)) {
            CAPTURE(d.name);
            CAPTURE(r.label());
            // printed cells are rounded; RTX4090 FP16/FP32 k8 pairs 357.4 with 177.8 (2.0101)
            CHECK(m.sparse_speedup(d, r) <= 2.02);
            CHECK(m.sparse_speedup(d, r) > 1.0);
        }
}

TEST_CASE("energy") {
    const auto m = model();
    auto e = m.energy_metrics(dev("H800"), mma(DType::FP16, DType::FP16, 16));
    CHECK(e.power_w == 188.6);
    CHECK(e.tflops_per_w == 2.62);
    e = m.energy_metrics(dev("A100"), mma(DType::INT8, DType::INT32, 64, true));
    CHECK(e.power_w == 193.9);
    CHECK(e.tflops_per_w == 6.24);
    CHECK_THROWS_AS(m.energy_metrics(dev("A100"), mma(DType::FP16, DType::FP16, 8)), AbsentRecordError);
}

TEST_CASE("energy efficiency is throughput over power") {
    const auto m = model();
    for (const auto& d : test::ctx().catalog.devices())
        for (bool sp : {false, true})
            for (const auto& r : energy_table_rows(sp)) {
                CAPTURE(d.name);
                CAPTURE(r.label());
                const auto e = m.energy_metrics(d, r);
                const double implied = m.predict_throughput(d, r, Init::Zero) / e.power_w;
                CHECK(std::abs(implied / e.tflops_per_w - 1) <= 0.15);
            }
}

TEST_CASE("cross-device energy ratios") {
    const auto m = model();
    auto mean_eff = [&](std::string_view d, bool sp) {
        double s = 0;
        for (const auto& r : energy_table_rows(sp)) s += m.energy_metrics(dev(d), r).tflops_per_w;
        return s / 4;
    };
    CHECK(mean_eff("H800", false) / mean_eff("A100", false) == doctest::Approx(1.60).epsilon(0.02 / 1.6));
    CHECK(mean_eff("H800", false) / mean_eff("RTX4090", false) == doctest::Approx(1.69).epsilon(0.02 / 1.69));
    CHECK(mean_eff("H800", true) / mean_eff("A100", true) == doctest::Approx(1.33).epsilon(0.02 / 1.33));
    CHECK(mean_eff("H800", true) / mean_eff("RTX4090", true) == doctest::Approx(1.39).epsilon(0.02 / 1.39));
}

TEST_CASE("random init never beats zero init") {
    const auto m = model();
    const auto& h = dev("H800");
    for (bool sp : {false, true})
        for (auto src : {SS, RS}) {
            for (const auto& r : wgmma_table_rows(src, sp)) {
                CAPTURE(r.label());
                CHECK(m.predict_throughput(h, r, Init::Rand) <= m.predict_throughput(h, r, Init::Zero));
            }
            for (int n : wgmma_n_values()) {
                const auto r = wg(DType::FP16, DType::FP32, n, src, sp);
                CAPTURE(r.label());
                CHECK(m.predict_throughput(h, r, Init::Rand) <= m.predict_throughput(h, r, Init::Zero));
            }
        }
    // FP16 in / FP32 accumulate throttles hardest
    const double worst = m.rand_throttle(h, DType::FP16, DType::FP32);
    for (auto [a, cd] : {std::pair{DType::FP16, DType::FP16}, {DType::TF32, DType::FP32}, {DType::FP8_E4M3, DType::FP16},
                         {DType::FP8_E4M3, DType::FP32}, {DType::INT8, DType::INT32}})
        CHECK(m.rand_throttle(h, a, cd) > worst);
}

TEST_CASE("operand source") {
    const auto m = model();
    const auto& h = dev("H800");
    for (int n : {64, 128, 256}) {
        const auto ss = wg(DType::FP16, DType::FP32, n, SS);
        const auto rs = wg(DType::FP16, DType::FP32, n, RS);
        CHECK(m.predict_latency(h, ss) == m.predict_latency(h, rs));
        const double a = m.predict_throughput(h, ss, Init::Zero), b = m.predict_throughput(h, rs, Init::Zero);
        CHECK(std::abs(a - b) / std::max(a, b) <= 0.01);
    }
    for (const auto& r : wgmma_table_rows(RS, false)) {
        auto ss = r;
        ss.source = SS;
        CHECK(m.predict_latency(h, ss) == m.predict_latency(h, r));
        const double a = m.predict_throughput(h, ss, Init::Zero), b = m.predict_throughput(h, r, Init::Zero);
        CHECK(std::abs(a - b) / std::max(a, b) <= 0.01);
    }
    // sparse: RS reads the pruned operand from registers and wins
    for (const auto& r : wgmma_table_rows(RS, true)) {
        auto ss = r;
        ss.source = SS;
        CAPTURE(r.label());
        CHECK(m.predict_throughput(h, r, Init::Zero) > m.predict_throughput(h, ss, Init::Zero));
    }
}

TEST_CASE("throughput grows with N") {
    const auto m = model();
    for (bool sp : {false, true})
        for (auto src : {SS, RS})
            for (auto init : {Init::Zero, Init::Rand}) {
                double prev = 0;
                for (int n : wgmma_n_values()) {
                    const double t = m.predict_throughput(dev("H800"), wg(DType::FP16, DType::FP32, n, src, sp), init);
                    CAPTURE(n);
                    CHECK(t >= prev);
                    prev = t;
                }
            }
}

TEST_CASE("sparse and dense mma latency within a cycle") {
    const auto m = model();
    for (const auto& d : test::ctx().catalog.devices())
        for (const auto& r : mma_table_rows(false)) {
            auto s = r;
            s.sparse = true;
            s.shape.k *= 2;
            const double diff = std::abs(m.predict_latency(d, r) - m.predict_latency(d, s));
            CAPTURE(d.name);
            CAPTURE(r.label());
            if (d.name == "A100" && r.a_type == DType::FP16 && r.cd_type == DType::FP32 && r.shape.k == 16)
                CHECK(diff == doctest::Approx(1.5));  // printed 26.0 vs 24.5
            else
                CHECK(diff <= 1.0);
        }
}

TEST_CASE("calibration keys") {
    const auto p = tc_params(mma(DType::FP16, DType::FP16, 32, true), std::nullopt, false);
    CHECK(p.at("shape") == "m16n8k16");
    CHECK(p.at("k_is_compressed") == "true");
    const auto w = tc_params(wg(DType::FP16, DType::FP32, 64, SS), Init::Rand, true);
    CHECK(w.at("N") == "64");
    CHECK(w.count("a") == 0);
    CHECK(w.at("init") == "Rand");
}
