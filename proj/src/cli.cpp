#include "segline/cli.hpp"

#include "segline/csv.hpp"
#include "segline/harness.hpp"

#include "CLI11.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace segline {

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::size_t parse_count(const std::string& s, const std::string& what) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != s.size()) {
        throw UsageError(what + ": expected a nonnegative integer, got '" + s + "'");
    }
    return static_cast<std::size_t>(v);
}

// "LO..HI" or a comma list "a,b,c".
std::vector<std::size_t> parse_candidates(const std::string& s) {
    std::vector<std::size_t> out;
    const auto dots = s.find("..");
    if (dots != std::string::npos) {
        const std::size_t lo = parse_count(s.substr(0, dots), "range");
        const std::size_t hi = parse_count(s.substr(dots + 2), "range");
        if (lo < 1 || hi < lo) {
            throw UsageError("range must satisfy 1 <= LO <= HI");
        }
        for (std::size_t p = lo; p <= hi; ++p) {
            out.push_back(p);
        }
        return out;
    }
    for (const std::string& part : split(s, ',')) {
        out.push_back(parse_count(part, "candidate"));
    }
    if (out.empty()) {
        throw UsageError("empty candidate list");
    }
    return out;
}

void emit(const nlohmann::json& j, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
    out << j.dump(2) << '\n';
}

struct DataFlags {
    std::string input;
    bool intercept = false;
    bool no_header = false;
    std::size_t response_column = 1;

    void attach(CLI::App* app) {
        app->add_option("input", input, "CSV file with the response and predictor columns")->required();
        app->add_flag("--intercept", intercept, "Prepend a constant-1 predictor column");
        app->add_flag("--no-header", no_header, "The first row holds data, not column names");
        app->add_option("--response-column", response_column, "1-based column of the response")
            ->check(CLI::PositiveNumber);
    }

    Dataset load() const {
        CsvOptions o;
        o.has_header = !no_header;
        o.intercept = intercept;
        o.response_column = response_column - 1;
        return load_csv(input, o);
    }
};

struct DetectorFlags {
    double alpha = 0.05;
    double c = 1.0;
    double nu = 1.0;
    std::string step2_logic = "verbatim";
    std::string skip_rule = "adjacent";
    std::string stages = "full";
    bool wald = false;

    void attach(CLI::App* app) {
        app->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(1e-12, 1.0 - 1e-12));
        app->add_option("--c", c, "Initial-weight constant at least-squares hits");
        app->add_option("--nu", nu, "Adaptive-LASSO exponent");
        app->add_option("--step2-logic", step2_logic, "Least-squares scan branching")
            ->check(CLI::IsMember({"verbatim", "inverted"}));
        app->add_option("--skip-rule", skip_rule, "Index skip after a confirmed boundary")
            ->check(CLI::IsMember({"verbatim", "adjacent", "never"}));
        app->add_option("--stages", stages, "Run every step or stop after screening")
            ->check(CLI::IsMember({"full", "screen-only"}));
        app->add_flag("--wald", wald, "Scale the least-squares statistics without the 1/q factor");
    }

    DetectorConfig config() const {
        DetectorConfig cfg;
        cfg.alpha = alpha;
        cfg.c = c;
        cfg.nu = nu;
        cfg.step2_logic = step2_logic == "inverted" ? Step2Logic::Inverted : Step2Logic::Verbatim;
        cfg.skip_rule = skip_rule == "adjacent" ? SkipRule::AdjacentOnly
                        : skip_rule == "never"  ? SkipRule::Never
                                                : SkipRule::Verbatim;
        cfg.stages = stages == "screen-only" ? Stages::ScreenOnly : Stages::Full;
        cfg.normalization = wald ? StatNormalization::Wald : StatNormalization::Verbatim;
        return cfg;
    }
};

nlohmann::json selection_json(const PnSelection& sel) {
    nlohmann::json curve = nlohmann::json::array();
    for (std::size_t i = 0; i < sel.candidates.size(); ++i) {
        curve.push_back({{"p_n", sel.candidates[i]},
                         {"rss", std::isfinite(sel.rss[i]) ? nlohmann::json(sel.rss[i]) : nlohmann::json()}});
    }
    return {{"selected", sel.p_n}, {"curve", curve}};
}

int run(int argc, const char* const* argv) {
    CLI::App app{"Multiple change-point detection for linear regression sequences", "segline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "segline 1.0.0");
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    // detect
    auto* detect_cmd = app.add_subcommand("detect", "Detect change points in a CSV dataset");
    DataFlags detect_data;
    DetectorFlags detect_flags;
    std::string algorithm = "al";
    std::string pn = "auto";
    std::string pn_range;
    std::string output;
    detect_data.attach(detect_cmd);
    detect_flags.attach(detect_cmd);
    detect_cmd->add_option("--algorithm", algorithm, "ls, cls, al, cal, scad or mcp")
        ->check(CLI::IsMember({"ls", "cls", "al", "cal", "scad", "mcp"}));
    detect_cmd->add_option("--pn", pn, "Boundary count, or 'auto' to choose it by refitted RSS");
    detect_cmd->add_option("--pn-range", pn_range, "Candidates LO..HI for --pn auto");
    detect_cmd->add_option("--output", output, "Result JSON path (default: standard output)");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Write a simulated dataset as CSV");
    std::string scenario = "none";
    std::uint64_t seed = 1;
    std::string sim_out;
    sim_cmd->add_option("--scenario", scenario, "none, cpl1, cpl2 or a scenario JSON file");
    sim_cmd->add_option("--seed", seed, "Generator seed");
    sim_cmd->add_option("--out", sim_out, "CSV path (default: standard output)");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Monte Carlo replication study");
    std::string bench_scenario = "cpl1";
    std::size_t reps = 100;
    std::string algorithms = "ls,al,cal,scad,mcp";
    std::string report_path;
    std::uint64_t base_seed = 1;
    int workers = 0;
    DetectorFlags bench_flags;
    bench_flags.attach(bench_cmd);
    bench_cmd->add_option("--scenario", bench_scenario, "none, cpl1, cpl2 or a scenario JSON file");
    bench_cmd->add_option("--reps", reps, "Replications")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--algorithms", algorithms, "Comma-separated algorithm keys");
    bench_cmd->add_option("--report", report_path, "Report JSON path (default: standard output)");
    bench_cmd->add_option("--seed", base_seed, "Seed of replication 0");
    bench_cmd->add_option("--workers", workers, "Parallel workers (SEGLINE_WORKERS overrides)");
    bench_cmd->add_option("--pn", pn, "Boundary count (default floor(n/50))");

    // select-pn
    auto* sel_cmd = app.add_subcommand("select-pn", "Choose p_n by the refitted RSS curve");
    DataFlags sel_data;
    DetectorFlags sel_flags;
    std::string candidates;
    std::string sel_algorithm = "al";
    std::string sel_out;
    sel_data.attach(sel_cmd);
    sel_flags.attach(sel_cmd);
    sel_cmd->add_option("--candidates", candidates, "LO..HI or a comma list")->required();
    sel_cmd->add_option("--algorithm", sel_algorithm, "ls, cls, al, cal, scad or mcp")
        ->check(CLI::IsMember({"ls", "cls", "al", "cal", "scad", "mcp"}));
    sel_cmd->add_option("--output", sel_out, "Result JSON path (default: standard output)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    spdlog::set_default_logger(spdlog::stderr_color_st("segline"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    auto load_scenario = [](const std::string& name) {
        if (name == "none" || name == "cpl1" || name == "cpl2") {
            return scenario_by_name(name);
        }
        std::ifstream in(name);
        if (!in) {
            throw UsageError("unknown scenario '" + name + "' (not a built-in name or readable file)");
        }
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("scenario file '" + name + "': " + e.what());
        }
        return scenario_from_json(j);
    };

    if (detect_cmd->parsed()) {
        const Dataset data = detect_data.load();
        DetectorConfig cfg = detect_flags.config();
        const Algorithm alg = parse_algorithm(algorithm);
        if (pn == "auto") {
            const std::vector<std::size_t> cands =
                pn_range.empty() ? default_pn_candidates(data.n(), data.q()) : parse_candidates(pn_range);
            if (cands.empty()) {
                throw DataError("no feasible p_n for n = " + std::to_string(data.n()));
            }
            const PnSelection sel = select_pn(data, cands, alg, cfg);
            cfg.p_n = sel.p_n;
            nlohmann::json j = result_to_json(sel.result, data, cfg);
            j["pn_selection"] = selection_json(sel);
            emit(j, output);
        } else {
            if (!pn_range.empty()) {
                throw UsageError("--pn-range needs --pn auto");
            }
            cfg.p_n = parse_count(pn, "--pn");
            if (cfg.p_n < 1) {
                throw UsageError("--pn must be at least 1");
            }
            emit(result_to_json(detect(data, alg, cfg), data, cfg), output);
        }
    } else if (sim_cmd->parsed()) {
        Scenario s = load_scenario(scenario);
        s.seed = seed;
        const Dataset data = simulate_dataset(s).first;
        if (sim_out.empty() || sim_out == "-") {
            std::cout << format_csv(data);
        } else {
            write_csv(sim_out, data);
        }
    } else if (bench_cmd->parsed()) {
        const Scenario s = load_scenario(bench_scenario);
        std::vector<Algorithm> algs;
        for (const std::string& key : split(algorithms, ',')) {
            algs.push_back(parse_algorithm(key));
        }
        if (algs.empty()) {
            throw UsageError("--algorithms is empty");
        }
        DetectorConfig cfg = bench_flags.config();
        if (pn != "auto") {
            cfg.p_n = parse_count(pn, "--pn");
        }
        emit(report_to_json(run_replications(s, algs, reps, base_seed, cfg, workers)), report_path);
    } else if (sel_cmd->parsed()) {
        const Dataset data = sel_data.load();
        const DetectorConfig cfg = sel_flags.config();
        const PnSelection sel = select_pn(data, parse_candidates(candidates), parse_algorithm(sel_algorithm), cfg);
        DetectorConfig chosen = cfg;
        chosen.p_n = sel.p_n;
        nlohmann::json j = result_to_json(sel.result, data, chosen);
        j["pn_selection"] = selection_json(sel);
        emit(j, sel_out);
    }
    return kOk;
}

} // namespace

int cli_main(int argc, const char* const* argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    }
}

} // namespace segline
