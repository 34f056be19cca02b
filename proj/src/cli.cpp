#include "gpm/cli.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "gpm/async_pipeline_model.hpp"
#include "gpm/context.hpp"
#include "gpm/error.hpp"
#include "gpm/report.hpp"
#include "gpm/validation.hpp"
#include "gpm/workload.hpp"

namespace gpm::cli {

namespace {

std::filesystem::path data_dir_or_default(const std::string& opt) {
    return opt.empty() ? default_data_dir() : std::filesystem::path(opt);
}

void write_out(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot write '" + path + "'");
    f << text;
    if (!f) throw UsageError("write to '" + path + "' failed");
}

ReportFormat format_or_throw(const std::string& s) {
    auto f = parse_report_format(s);
    if (!f) throw UsageError("unknown format '" + s + "' (csv, json, md)");
    return *f;
}

int cmd_devices(const std::filesystem::path& dir, std::ostream& out) {
    const auto catalog = DeviceCatalog::load(dir / "devices" / "paper_devices.json");
    out << "name,architecture,sm_count,max_clock_mhz,mem_bandwidth_gbs,power_limit_w,dpx_hardware,dsm,fp8_tc\n";
    for (const auto& d : catalog.devices()) {
        out << d.name << ',' << to_string(d.architecture) << ',' << d.sm_count << ',' << format_number(d.max_clock_mhz)
            << ',' << format_number(d.mem_bandwidth_gbs) << ',' << format_number(d.power_limit_w) << ','
            << (d.features.dpx_hardware ? "yes" : "no") << ',' << (d.features.dsm ? "yes" : "no") << ','
            << (d.features.fp8_tc ? "yes" : "no") << '\n';
    }
    return kExitOk;
}

int cmd_run(const std::filesystem::path& dir, const std::string& workload, const std::string& device,
            const std::string& format, const std::string& out_path, unsigned threads, std::ostream& out) {
    const ReportFormat fmt = format_or_throw(format);
    WorkloadSpec w = load_workload(workload);
    if (!device.empty()) {
        // --device pins the device and drops any device axis
        w.device = device;
        w.sweep.erase(std::remove_if(w.sweep.begin(), w.sweep.end(), [](const SweepAxis& a) { return a.param == "device"; }),
                      w.sweep.end());
    }
    const auto ctx = ModelContext::load(dir);
    const auto rep = run_workload(ctx, w, threads);
    write_out(render_report(rep, fmt), out_path, out);
    return kExitOk;
}

std::vector<int> parse_criteria(const std::string& s) {
    std::vector<int> ids;
    if (s.empty()) {
        for (int i = 1; i <= kCriterionCount; ++i) ids.push_back(i);
        return ids;
    }
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty() && (tok[0] == 'C' || tok[0] == 'c')) tok.erase(0, 1);
        int id = 0;
        try {
            std::size_t pos = 0;
            id = std::stoi(tok, &pos);
            if (pos != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw UsageError("--criteria: '" + tok + "' is not a criterion number");
        }
        if (id < 1 || id > kCriterionCount) throw UsageError("--criteria: no criterion " + std::to_string(id));
        if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

int cmd_validate(const std::filesystem::path& dir, const std::string& tol_path, const std::string& criteria,
                 std::ostream& out) {
    const auto ids = parse_criteria(criteria);
    const auto tol = Tolerances::load(tol_path.empty() ? default_tolerances_path(dir) : std::filesystem::path(tol_path));
    const auto ctx = ModelContext::load(dir);
    ValidationResult r;
    if (ids.size() == static_cast<std::size_t>(kCriterionCount)) {
        r = validate(ctx, tol);
    } else {
        for (int id : ids) r.criteria.push_back(run_criterion(id, ctx, tol));
    }
    for (const auto& c : r.criteria) out << format_result_line(c) << '\n';
    const auto passed = std::count_if(r.criteria.begin(), r.criteria.end(), [](const auto& c) { return c.pass; });
    out << (r.pass() ? "PASS" : "FAIL") << ' ' << passed << '/' << r.criteria.size() << " criteria\n";
    return r.pass() ? kExitOk : kExitValidation;
}

int cmd_report(const std::string& in, const std::string& format, const std::string& out_path, std::ostream& out) {
    const ReportFormat fmt = format_or_throw(format);
    std::string text;
    try {
        text = read_file(in);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    write_out(render_report(parse_report_json(text), fmt), out_path, out);
    return kExitOk;
}

int cmd_fit_async(const std::filesystem::path& dir, const std::vector<std::string>& devices, bool write, int starts,
                  std::ostream& out) {
    const auto csv = dir / "calib" / "paper_tables.csv";
    auto ctx = ModelContext::load(dir);
    AsyncFitOptions opt;
    if (starts > 0) opt.starts = starts;
    std::vector<std::string> names = devices;
    if (names.empty())
        for (const auto& d : ctx.catalog.devices())
            if (!ctx.store.select(d.name, "async.throughput").empty()) names.push_back(d.name);
    for (const auto& name : names) {
        const auto& d = ctx.catalog.at(name);
        const auto data = async_fit_data(ctx.store, d);
        if (data.cells.empty()) throw UsageError(name + " has no async table to fit");
        const auto fit = fit_pipeline_params(data, opt);
        out << name << ": score " << format_number(fit.score) << ", worst cell " << format_number(fit.worst_cell_rel)
            << ", improvement " << format_number(fit.improvement_pct[0]) << ' ' << format_number(fit.improvement_pct[1])
            << ' ' << format_number(fit.improvement_pct[2]) << '\n';
        const auto pn = PipelineParams::names();
        const auto pv = fit.params.pack();
        for (std::size_t i = 0; i < pv.size(); ++i) out << "  " << pn[i] << " = " << format_number(pv[i]) << '\n';
        for (auto& r : pipeline_params_records(name, fit.params)) ctx.store.upsert(std::move(r));
    }
    if (write) {
        std::ofstream f(csv, std::ios::binary);
        if (!f) throw ConfigError("cannot write '" + csv.string() + "'");
        f << ctx.store.dump();
        out << "wrote " << csv.string() << '\n';
    }
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Calibrated analytical GPU performance model", "gpm"};
    app.require_subcommand(1);
    std::string data_dir;
    app.add_option("--data-dir", data_dir, "data directory (default: $GPM_DATA_DIR or the bundled data/)");

    auto* devices = app.add_subcommand("devices", "device catalog");
    auto* devices_list = devices->add_subcommand("list", "list the catalog");
    devices->require_subcommand(1);

    auto* run_cmd = app.add_subcommand("run", "run a workload sweep");
    std::string workload, device, format = "csv", out_path;
    unsigned threads = 0;
    run_cmd->add_option("--workload", workload, "workload JSON file")->required();
    run_cmd->add_option("--device", device, "override the workload device");
    run_cmd->add_option("--format", format, "csv | json | md");
    run_cmd->add_option("--out", out_path, "output file (default stdout)");
    run_cmd->add_option("--threads", threads, "worker threads, 0 = all cores");

    auto* validate_cmd = app.add_subcommand("validate", "check the acceptance criteria");
    std::string tol_path, criteria;
    validate_cmd->add_option("--tolerances", tol_path, "tolerances JSON (default <data>/tolerances.json)");
    validate_cmd->add_option("--criteria", criteria, "comma list of criterion numbers (default all)");

    auto* report_cmd = app.add_subcommand("report", "re-render a JSON report");
    std::string in_path, report_format;
    std::string report_out;
    report_cmd->add_option("--in", in_path, "JSON report")->required();
    report_cmd->add_option("--format", report_format, "csv | json | md")->required();
    report_cmd->add_option("--out", report_out, "output file (default stdout)");

    auto* fit_cmd = app.add_subcommand("fit-async", "fit the async pipeline parameters");
    std::vector<std::string> fit_devices;
    bool fit_write = false;
    int fit_starts = 0;
    fit_cmd->add_option("--device", fit_devices, "devices to fit (default: all with async tables)");
    fit_cmd->add_flag("--write", fit_write, "store the parameters in the calibration CSV");
    fit_cmd->add_option("--starts", fit_starts, "multi-start count");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "gpm: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        const auto dir = data_dir_or_default(data_dir);
        if (devices_list->parsed()) return cmd_devices(dir, out);
        if (run_cmd->parsed()) return cmd_run(dir, workload, device, format, out_path, threads, out);
        if (validate_cmd->parsed()) return cmd_validate(dir, tol_path, criteria, out);
        if (report_cmd->parsed()) return cmd_report(in_path, report_format, report_out, out);
        if (fit_cmd->parsed()) return cmd_fit_async(dir, fit_devices, fit_write, fit_starts, out);
    } catch (const Error& e) {
        err << "gpm: " << e.what() << '\n';
        return kExitUsage;
    }
    err << "gpm: nothing to do\n";
    return kExitUsage;
}

} // namespace gpm::cli
