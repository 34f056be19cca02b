#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "gpm/cli.hpp"
#include "gpm/error.hpp"
#include "gpm/report.hpp"
#include "gpm/validation.hpp"
#include "gpm/workload.hpp"
#include "support.hpp"

using namespace gpm;
namespace fs = std::filesystem;

namespace {

const char* kCsvHeader = "device,kind,params,metric,predicted,unit,calibrated,rel_error,status,provenance,note\n";

PredictionReport run_file(const std::string& name, unsigned threads = 1) {
    return run_workload(test::ctx(), load_workload(test::data_dir() / "workloads" / name), threads);
}

struct CliResult {
    int code;
    std::string out, err;
};

CliResult cli_run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string usage_message(std::string_view text) {
    try {
        parse_workload(text);
    } catch (const UsageError& e) {
        return e.what();
    }
    return {};
}

// a data dir copy with one calibration cell scaled
void faulted_copy(const test::TempDir& t, double factor) {
    fs::create_directories(t.path() / "devices");
    fs::copy_file(test::data_dir() / "devices" / "paper_devices.json", t.path() / "devices" / "paper_devices.json");
    fs::copy_file(test::data_dir() / "tolerances.json", t.path() / "tolerances.json");
    auto store = test::ctx().store;
    REQUIRE(store.scale("A100", "tc.energy.efficiency", {{"a", "FP16"}, {"cd", "FP16"}, {"sparse", "false"}}, factor));
    t.write("calib/paper_tables.csv", store.dump());
}

} // namespace

TEST_CASE("workload errors name the field") {
    CHECK(usage_message("{").find("<memory>") != std::string::npos);
    CHECK(usage_message(R"({"device":"H800"})").find("'kind'") != std::string::npos);
    CHECK(usage_message(R"({"kind":"Nope"})").find("'kind'") != std::string::npos);
    CHECK(usage_message(R"({"kind":"MemLatency","colour":1})").find("'colour'") != std::string::npos);
    CHECK(usage_message(R"({"kind":"MemLatency","sweep":[{"param":"level"}]})").find("sweep[0]") !=
          std::string::npos);
    CHECK(usage_message(R"({"kind":"Dpx","sweep":[{"param":"blocks","range":{"from":5,"to":1}}]})")
              .find("sweep[0].range") != std::string::npos);

    const auto& ctx = test::ctx();
    auto check_invalid = [&](std::string_view text, std::string_view field) {
        try {
            validate_workload(parse_workload(text), ctx);
            FAIL("accepted: " << text);
        } catch (const UsageError& e) {
            CHECK(std::string(e.what()).find(field) != std::string::npos);
        }
    };
    check_invalid(R"({"kind":"MemLatency","device":"H800"})", "params.level");
    check_invalid(R"({"kind":"MemLatency","device":"H800","params":{"level":"L1","n":3}})", "params.n");
    check_invalid(R"({"kind":"MemLatency","device":"H900","params":{"level":"L1"}})", "device");
    check_invalid(R"({"kind":"MemLatency","params":{"level":"L1"}})", "device");
    check_invalid(R"({"kind":"MemLatency","device":"H800","params":{"level":"L4"}})", "level");
    check_invalid(R"({"kind":"Dpx","device":"H800","params":{"blocks":"x"}})", "blocks");
    check_invalid(R"({"kind":"Dpx","device":"H800","params":{"blocks":-1}})", "blocks");
    check_invalid(R"({"kind":"TeLayer","device":"H800","params":{"hidden":3000,"dtype":"FP8"}})", "hidden");
    check_invalid(R"({"kind":"TcInstr","device":"H800","params":{"api":"mma","a":"FP16","cd":"FP32","shape":"m16n8"}})",
                  "shape");
}

TEST_CASE("memory latency workload") {
    const auto rep = run_file("mem_latency.json");
    REQUIRE(rep.rows.size() == 12);
    for (const auto& r : rep.rows) {
        CHECK(r.status == "ok");
        REQUIRE(r.calibrated);
        CHECK(*r.predicted == *r.calibrated);
        CHECK(*r.rel_error == 0);
        CHECK(r.provenance.find("tab:mem_lat") == 0);
    }
    // odometer order: device outermost
    CHECK(rep.rows[4].device == "H800");
    CHECK(rep.rows[4].params.at("level") == "L1");
    CHECK(*rep.rows[4].predicted == 40.7);
}

TEST_CASE("wgmma N sweep matches the dense SS latencies") {
    const auto rep = run_file("wgmma_n_sweep.json");
    REQUIRE(rep.rows.size() == 6);
    const double expect[] = {18, 20, 24, 32, 64, 128};
    for (std::size_t i = 0; i < 6; ++i) {
        CAPTURE(i);
        CHECK(rep.rows[i].unit == "cycles");
        REQUIRE(rep.rows[i].predicted);
        CHECK(*rep.rows[i].predicted == expect[i]);
        REQUIRE(rep.rows[i].calibrated);
        CHECK(*rep.rows[i].calibrated == expect[i]);
    }
}

TEST_CASE("dpx wave workload") {
    const auto rep = run_file("dpx_h800.json");
    REQUIRE(rep.rows.size() == 229);
    CHECK(*rep.rows[0].predicted == 0);
    CHECK(*rep.rows[114].predicted == 1);
    CHECK(rep.rows[0].note == "HardwareAccelerated");
    CHECK_FALSE(rep.rows[5].calibrated);
    CHECK_FALSE(rep.rows[5].rel_error);
}

TEST_CASE("uncalibrated and unsupported points become status rows") {
    const auto& ctx = test::ctx();
    auto one = [&](std::string_view text) {
        const auto rep = run_workload(ctx, parse_workload(text), 1);
        REQUIRE(rep.rows.size() == 1);
        return rep.rows[0];
    };
    const auto async_rtx =
        one(R"({"kind":"AsyncMatmul","device":"RTX4090","params":{"block_dim":8,"blocks_per_sm":1,"mode":"AsyncPipe"}})");
    CHECK(async_rtx.status == "uncalibrated");
    CHECK_FALSE(async_rtx.predicted);
    CHECK_FALSE(async_rtx.note.empty());

    const auto fp8 = one(R"({"kind":"TeLinear","device":"A100","params":{"n":4096,"dtype":"FP8"}})");
    CHECK(fp8.status == "unsupported");
    const auto dsm = one(R"({"kind":"RbcSweep","device":"A100","params":{"cs":2}})");
    CHECK(dsm.status == "unsupported");
    const auto oom = one(R"({"kind":"LlmRoofline","device":"RTX4090","params":{"model":"llama-7B","dtype":"FP32"}})");
    CHECK(oom.status == "oom");
    CHECK_FALSE(oom.predicted);
}

TEST_CASE("reports are byte-identical across runs and thread counts") {
    for (const auto& e : fs::directory_iterator(test::data_dir() / "workloads")) {
        const std::string name = e.path().filename().string();
        CAPTURE(name);
        const auto a = run_file(name, 1);
        const auto b = run_file(name, 4);
        const auto c = run_file(name, 0);
        for (auto f : {ReportFormat::csv, ReportFormat::json, ReportFormat::md}) {
            CHECK(render_report(a, f) == render_report(b, f));
            CHECK(render_report(a, f) == render_report(c, f));
        }
    }
}

TEST_CASE("json report round trip") {
    for (auto name : {"mem_latency.json", "llm_roofline.json", "mma_fp16.json", "histogram.json"}) {
        CAPTURE(name);
        const auto rep = run_file(name);
        const auto text = render_report(rep, ReportFormat::json);
        const auto back = parse_report_json(text);
        CHECK(back == rep);
        CHECK(render_report(back, ReportFormat::json) == text);
        CHECK(render_report(back, ReportFormat::csv) == render_report(rep, ReportFormat::csv));
    }
    CHECK_THROWS_AS(parse_report_json("[1,2"), FormatError);
    CHECK_THROWS_AS(parse_report_json(R"({"rows":[{"device":1}]})"), FormatError);
}

TEST_CASE("empty report") {
    const PredictionReport empty;
    CHECK(render_report(empty, ReportFormat::csv) == kCsvHeader);
    CHECK(parse_report_json(render_report(empty, ReportFormat::json)) == empty);
}

TEST_CASE("memory reports pivot in markdown") {
    const auto md = render_report(run_file("mem_latency.json"), ReportFormat::md);
    std::istringstream is(md);
    std::vector<std::string> lines;
    for (std::string l; std::getline(is, l);) lines.push_back(l);
    REQUIRE(lines.size() == 6);
    CHECK(lines[0] == "| level | A100 | H800 | RTX4090 | unit |");
    CHECK(lines[2].find("40.7") != std::string::npos);
}

TEST_CASE("rel_error is present exactly when calibrated") {
    for (const auto& e : fs::directory_iterator(test::data_dir() / "workloads")) {
        for (const auto& r : run_file(e.path().filename().string()).rows) {
            CHECK(r.rel_error.has_value() == r.calibrated.has_value());
            if (r.calibrated && r.predicted)
                CHECK(*r.rel_error == doctest::Approx(std::abs(*r.predicted - *r.calibrated) / std::abs(*r.calibrated)));
        }
    }
    ReportRow row;
    row.predicted = 3.0;
    attach_calibration(row, 2.0, "tab:x");
    CHECK(*row.rel_error == 0.5);
    CHECK(row.provenance == "tab:x");
}

TEST_CASE("csv output") {
    const auto csv = render_report(run_file("mem_latency.json"), ReportFormat::csv);
    CHECK(csv.rfind(kCsvHeader, 0) == 0);
    CHECK(csv.find("H800,MemLatency,level=L1,mem.latency.l1,40.7,cycles,40.7,0,ok,") != std::string::npos);
}

TEST_CASE("cli exit codes") {
    const std::string data = test::data_dir().string();
    CHECK(cli_run({}).code == cli::kExitUsage);
    CHECK(cli_run({"--help"}).code == cli::kExitOk);
    CHECK(cli_run({"frobnicate"}).code == cli::kExitUsage);
    CHECK(cli_run({"run"}).code == cli::kExitUsage);
    CHECK(cli_run({"--data-dir", data, "run", "--workload", "/nonexistent.json"}).code == cli::kExitUsage);
    CHECK(cli_run({"--data-dir", data, "validate", "--criteria", "99"}).code == cli::kExitUsage);

    const auto dev = cli_run({"--data-dir", data, "devices", "list"});
    CHECK(dev.code == cli::kExitOk);
    CHECK(dev.out.find("H800,Hopper,114,") != std::string::npos);

    const auto v = cli_run({"--data-dir", data, "validate", "--criteria", "1,C2"});
    CHECK(v.code == cli::kExitOk);
    CHECK(v.out.find("PASS 2/2 criteria") != std::string::npos);
}

TEST_CASE("cli validate fails under an injected fault") {
    test::TempDir t("fault");
    faulted_copy(t, 1.5);
    const auto r = cli_run({"--data-dir", t.path().string(), "validate", "--criteria", "8"});
    CHECK(r.code == cli::kExitValidation);
    CHECK(r.out.find("FAIL") != std::string::npos);
    CHECK(cli_run({"--data-dir", t.path().string(), "validate", "--criteria", "1"}).code == cli::kExitOk);
}

TEST_CASE("cli configuration errors") {
    test::TempDir t("cfg");
    t.write("devices/paper_devices.json", read_file(test::data_dir() / "devices" / "paper_devices.json"));
    t.write("calib/paper_tables.csv", std::string(kCalibHeader) + "\n");
    t.write("tolerances.json", read_file(test::data_dir() / "tolerances.json"));
    CHECK(cli_run({"--data-dir", t.path().string(), "validate", "--criteria", "1"}).code == cli::kExitUsage);

    test::TempDir u("tol");
    u.write("tol.json", R"({"C1": {"avg_l2_over_l1_abs": 0.2}})");
    const auto r = cli_run({"--data-dir", test::data_dir().string(), "validate", "--tolerances",
                            (u.path() / "tol.json").string(), "--criteria", "2"});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("C2") != std::string::npos);
}

TEST_CASE("cli run and report round trip through files") {
    test::TempDir t("rt");
    const std::string data = test::data_dir().string();
    const std::string json_path = (t.path() / "r.json").string();
    const std::string csv_path = (t.path() / "r.csv").string();
    REQUIRE(cli_run({"--data-dir", data, "run", "--workload", (test::data_dir() / "workloads" / "rbc.json").string(),
                     "--format", "json", "--out", json_path})
                .code == cli::kExitOk);
    REQUIRE(cli_run({"report", "--in", json_path, "--format", "csv", "--out", csv_path}).code == cli::kExitOk);
    const auto direct = cli_run({"--data-dir", data, "run", "--workload",
                                 (test::data_dir() / "workloads" / "rbc.json").string(), "--threads", "3"});
    CHECK(direct.code == cli::kExitOk);
    CHECK(read_file(csv_path) == direct.out);
    CHECK(cli_run({"report", "--in", json_path, "--format", "xml"}).code == cli::kExitUsage);
    CHECK(cli_run({"report", "--in", (t.path() / "missing.json").string(), "--format", "csv"}).code ==
          cli::kExitUsage);
}

TEST_CASE("--device pins the device") {
    const auto r = cli_run({"--data-dir", test::data_dir().string(), "run", "--workload",
                            (test::data_dir() / "workloads" / "mem_latency.json").string(), "--device", "A100"});
    REQUIRE(r.code == cli::kExitOk);
    std::istringstream is(r.out);
    int rows = -1;
    for (std::string l; std::getline(is, l);) {
        if (rows >= 0) CHECK(l.rfind("A100,", 0) == 0);
        ++rows;
    }
    CHECK(rows == 4);
}

TEST_CASE("validation result") {
    const auto& ctx = test::ctx();
    const auto tol = Tolerances::load(default_tolerances_path(test::data_dir()));
    for (int id : {1, 2, 8, 9}) CHECK(run_criterion(id, ctx, tol).pass);

    ModelContext bad = ctx;
    REQUIRE(bad.store.scale("A100", "tc.energy.efficiency", {{"a", "FP16"}, {"cd", "FP16"}, {"sparse", "false"}}, 1.5));
    CHECK_FALSE(run_criterion(8, bad, tol).pass);
    CHECK(run_criterion(9, bad, tol).pass);

    ValidationResult vr;
    vr.criteria = {run_criterion(1, ctx, tol), run_criterion(2, ctx, tol)};
    CHECK(vr.pass());
    vr.criteria.push_back(run_criterion(8, bad, tol));
    CHECK_FALSE(vr.pass());

    ModelContext empty;
    empty.catalog = ctx.catalog;
    CHECK_THROWS_AS(validate(empty, tol), ConfigError);
    CHECK_THROWS_AS(run_criterion(16, ctx, tol), UsageError);
    CHECK_THROWS_AS(Tolerances::parse("{}").get(3, "mean_abs_points"), ConfigError);
    CHECK_THROWS_AS(Tolerances::parse("{"), ConfigError);

    const auto line = format_result_line(run_criterion(2, ctx, tol));
    CHECK(line.rfind("PASS", 0) != std::string::npos);
}
