#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "gpm/error.hpp"
#include "gpm/te_roofline_model.hpp"
#include "support.hpp"

using namespace gpm;

namespace {

const DeviceSpec& dev(std::string_view n) { return test::dev(n); }
TeModel model() { return TeModel(test::ctx().store); }

double ratio_8_16(const DeviceSpec& d, long long n) {
    const auto m = model();
    return m.te_linear_throughput(d, {n, TePrecision::FP8}) / m.te_linear_throughput(d, {n, TePrecision::FP16});
}

const LayerConfig& layer(int hidden) {
    for (const auto& c : table_layer_configs())
        if (c.hidden == hidden) return c;
    throw std::logic_error("no layer row");
}

double lat(std::string_view d, int hidden, TePrecision p) {
    return model().transformer_layer_latency(dev(d), layer(hidden), p);
}

} // namespace

TEST_CASE("FP8 linear nearly doubles FP16 at large N") {
    for (auto d : {"H800", "RTX4090"}) {
        CAPTURE(d);
        const double r = ratio_8_16(dev(d), 16384);
        CHECK(r >= 1.8);
        CHECK(r <= 2.1);
    }
}

TEST_CASE("FP8 linear loses at small N") {
    for (auto d : {"H800", "RTX4090"}) {
        CAPTURE(d);
        CHECK(ratio_8_16(dev(d), 1024) < 1.0);
        const auto m = model();
        CHECK(m.te_linear_throughput(dev(d), {1024, TePrecision::FP8}) <
              m.te_linear_throughput(dev(d), {1024, TePrecision::FP32}) * 10);
    }
}

TEST_CASE("FP8/FP16 ratio rises with N and crosses below 8192") {
    for (auto d : {"H800", "RTX4090"}) {
        double prev = 0;
        long long crossover = 0;
        for (long long n = 256; n <= 32768; n += 256) {
            const double r = ratio_8_16(dev(d), n);
            CHECK(r >= prev);
            if (crossover == 0 && r >= 1.0) crossover = n;
            prev = r;
        }
        CAPTURE(d);
        CHECK(crossover > 0);
        CHECK(crossover < 8192);
    }
}

TEST_CASE("linear throughput stays under the roofline") {
    const auto m = model();
    for (auto d : {"H800", "RTX4090", "A100"})
        for (auto p : {TePrecision::FP32, TePrecision::FP16, TePrecision::FP8}) {
            if (p == TePrecision::FP8 && !dev(d).features.fp8_tc) continue;
            double prev_util = 0;
            for (long long n = 128; n <= (1 << 17); n *= 2) {
                const double t = m.te_linear_throughput(dev(d), {n, p});
                CHECK(t <= m.precision_peak(dev(d), p) * 1e3);
                const double u = m.linear_utilisation(dev(d), {n, p});
                CHECK(u >= prev_util);
                CHECK(u <= 1.0);
                prev_util = u;
            }
            // approaches the peak for very large N
            CHECK(m.te_linear_throughput(dev(d), {1 << 20, p}) >= 0.9 * m.precision_peak(dev(d), p) * 1e3);
        }
}

TEST_CASE("overhead terms are positive and FP8-only conversion") {
    const auto m = model();
    for (auto d : {"H800", "RTX4090", "A100"}) {
        const auto p = m.linear_params(dev(d));
        CHECK(p.conv_s_per_elem > 0);
        CHECK(p.ramp_s_per_n > 0);
    }
    // FP16 time has no N^2 term: time - 2N^3/P - ramp N == 0
    const auto& h = dev("H800");
    const auto prm = m.linear_params(h);
    const double n = 4096;
    const double expect = 2 * n * n * n / (m.precision_peak(h, TePrecision::FP16) * 1e12) + prm.ramp_s_per_n * n;
    CHECK(m.te_linear_time(h, {4096, TePrecision::FP16}) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("unsupported precision and bad sizes") {
    const auto m = model();
    CHECK_THROWS_AS(m.te_linear_throughput(dev("A100"), {4096, TePrecision::FP8}), UnsupportedDtypeError);
    CHECK_THROWS_AS(m.transformer_layer_latency(dev("A100"), layer(4096), TePrecision::FP8), UnsupportedDtypeError);
    CHECK_THROWS_AS(m.te_linear_throughput(dev("H800"), {0, TePrecision::FP16}), ValidationError);
}

TEST_CASE("precision peaks") {
    const auto m = model();
    CHECK(m.precision_peak(dev("H800"), TePrecision::FP8) == 1513);
    CHECK(m.precision_peak(dev("H800"), TePrecision::FP16) == 756.5);
    CHECK(m.precision_peak(dev("H800"), TePrecision::FP32) == 378);
    // GeForce accumulates FP32 at half rate
    CHECK(m.precision_peak(dev("RTX4090"), TePrecision::FP16) ==
          doctest::Approx(m.precision_peak(dev("RTX4090"), TePrecision::FP32) * 2));
}

TEST_CASE("layer latency examples") {
    for (auto d : {"H800", "RTX4090"}) {
        CAPTURE(d);
        const double fp8 = lat(d, 8192, TePrecision::FP8);
        const double fp16 = lat(d, 8192, TePrecision::FP16);
        const double fp32 = lat(d, 8192, TePrecision::FP32);
        CHECK(fp8 < fp16);
        CHECK(fp8 > fp16 / 2);
        CHECK(std::abs(fp16 / (fp32 / 2) - 1) <= 0.20);
    }
}

TEST_CASE("FP8 layer wins only above 4096") {
    for (auto d : {"H800", "RTX4090"})
        for (const auto& c : table_layer_configs()) {
            CAPTURE(d);
            CAPTURE(c.hidden);
            const bool wins = lat(d, c.hidden, TePrecision::FP8) < lat(d, c.hidden, TePrecision::FP16);
            CHECK(wins == (c.hidden > 4096));
        }
}

TEST_CASE("layer latency increases with hidden size") {
    for (const auto& d : test::ctx().catalog.devices())
        for (auto p : {TePrecision::FP32, TePrecision::FP16, TePrecision::FP8}) {
            if (p == TePrecision::FP8 && !d.features.fp8_tc) continue;
            double prev = 0;
            for (const auto& c : table_layer_configs()) {
                const double t = model().transformer_layer_latency(d, c, p);
                CHECK(t > prev);
                prev = t;
            }
        }
}

TEST_CASE("layer rows") {
    const auto& rows = table_layer_configs();
    REQUIRE(rows.size() == 5);
    const int hidden[] = {1024, 2048, 4096, 5120, 8192};
    const int ffn[] = {2816, 5632, 11008, 13824, 22016};
    const int heads[] = {8, 16, 32, 40, 64};
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(rows[i].hidden == hidden[i]);
        CHECK(rows[i].ffn == ffn[i]);
        CHECK(rows[i].heads == heads[i]);
        CHECK(rows[i].batch == 4);
        CHECK(rows[i].seq_len == 512);
    }
    CHECK_THROWS_AS(validate_layer({4096, 11008, 16}), ValidationError);
    CHECK_THROWS_AS(validate_layer({3000, 8000, 24}), ValidationError);
    CHECK(layer_for_hidden(5120)->ffn == 13824);
    CHECK_FALSE(layer_for_hidden(3000));
}

TEST_CASE("decode bound") {
    const auto m = model();
    const auto b = m.llm_decode_throughput(dev("H800"), *find_llama("llama-7B"), LlmDType::BF16, 502.65);
    CHECK_FALSE(b.out_of_memory);
    // batch x bandwidth / weight bytes
    CHECK(b.step_bound_tokens_s == doctest::Approx(8 * 2039e9 / 14e9).epsilon(1e-12));
    CHECK(b.step_bound_tokens_s == doctest::Approx(1165).epsilon(0.001));
    // (in + out) / out
    CHECK(b.bound_tokens_s == doctest::Approx(2 * b.step_bound_tokens_s));
    REQUIRE(b.measured_ok);
    CHECK(*b.measured_ok);
}

TEST_CASE("out of memory cells") {
    const auto m = model();
    CHECK(m.llm_decode_throughput(dev("RTX4090"), *find_llama("llama-7B"), LlmDType::FP32).out_of_memory);
    CHECK(m.llm_decode_throughput(dev("RTX4090"), *find_llama("llama-7B"), LlmDType::FP8).out_of_memory);
    CHECK(m.llm_decode_throughput(dev("A100"), *find_llama("llama-13B"), LlmDType::FP32).out_of_memory);
    CHECK_FALSE(m.llm_decode_throughput(dev("A100"), *find_llama("llama-13B"), LlmDType::BF16).out_of_memory);
    CHECK_FALSE(m.llm_decode_throughput(dev("H800"), *find_llama("llama-13B"), LlmDType::FP32).out_of_memory);
    CHECK_THROWS_AS(m.llm_decode_throughput(dev("A100"), *find_llama("llama-3B"), LlmDType::FP8),
                    UnsupportedDtypeError);
}

TEST_CASE("every measured cell respects its bound") {
    const auto m = model();
    const auto& store = test::ctx().store;
    int n = 0;
    for (const auto& d : test::ctx().catalog.devices())
        for (const auto* r : store.select(d.name, "llm.decode.throughput")) {
            const auto model_desc = find_llama(r->params.at("model"));
            const auto dt = parse_llm_dtype(r->params.at("dtype"));
            REQUIRE(model_desc);
            REQUIRE(dt);
            const auto b = m.llm_decode_throughput(d, *model_desc, *dt, r->value);
            CAPTURE(d.name);
            CAPTURE(format_params(r->params));
            CHECK_FALSE(b.out_of_memory);
            REQUIRE(b.measured_ok);
            CHECK(*b.measured_ok);
            ++n;
        }
    CHECK(n == 18);
}

TEST_CASE("weight bytes") {
    const auto m = *find_llama("llama-13B");
    CHECK(m.weight_bytes(LlmDType::FP32) == 52e9);
    CHECK(m.weight_bytes(LlmDType::BF16) == 26e9);
    CHECK(m.weight_bytes(LlmDType::FP8) == 13e9);
    CHECK(m.resident_bytes(LlmDType::BF16) == 26e9);
    CHECK(m.batch == 8);
    CHECK(m.max_in_len == 128);
    CHECK(m.max_out_len == 128);
    CHECK_FALSE(find_llama("llama-70B"));
}

TEST_CASE("FP8 formats") {
    CHECK(fp8_max(Fp8Format::E4M3) == 448);
    CHECK(fp8_max(Fp8Format::E5M2) == 57344);
    CHECK(round_to_fp8(1.0, Fp8Format::E4M3) == 1.0);
    CHECK(round_to_fp8(1.0625, Fp8Format::E4M3) == 1.0);   // halfway, ties to even
    CHECK(round_to_fp8(1.1875, Fp8Format::E4M3) == 1.25);  // halfway, ties to even
    CHECK(round_to_fp8(1e6, Fp8Format::E4M3) == 448);
    CHECK(round_to_fp8(-1e6, Fp8Format::E5M2) == -57344);
    CHECK(fp8_step(1.0, Fp8Format::E4M3) == 0.125);
    CHECK(fp8_step(1.0, Fp8Format::E5M2) == 0.25);
}

TEST_CASE("max-abs scaling keeps dequantisation within half a step") {
    std::mt19937_64 rng(2024);
    for (auto f : {Fp8Format::E4M3, Fp8Format::E5M2})
        for (int trial = 0; trial < 200; ++trial) {
            std::uniform_real_distribution<double> mag(-6, 6);
            std::normal_distribution<double> g(0, 1);
            const double spread = std::pow(10.0, mag(rng));
            std::vector<double> x(64);
            for (auto& v : x) v = g(rng) * spread;
            const auto q = quantize_fp8(x, f);
            const auto y = dequantize_fp8(q);
            double amax = 0;
            for (double v : x) amax = std::max(amax, std::abs(v));
            CHECK(q.scale == doctest::Approx(amax / fp8_max(f)));
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double bound = 0.5 * fp8_step(x[i] / q.scale, f) * q.scale;
                CHECK(std::abs(y[i] - x[i]) <= bound * (1 + 1e-12));
                CHECK(std::abs(q.values[i]) <= fp8_max(f));
                CHECK(round_to_fp8(q.values[i], f) == q.values[i]);
            }
        }
    // all-zero input keeps a unit scale
    const std::vector<double> z(8, 0.0);
    CHECK(quantize_fp8(z, Fp8Format::E4M3).scale == 1.0);
}

TEST_CASE("precision spellings") {
    CHECK(parse_te_precision("FP8") == TePrecision::FP8);
    CHECK(parse_llm_dtype("BF16") == LlmDType::BF16);
    CHECK_FALSE(parse_llm_dtype("INT4"));
}
