#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "plms/harness.hpp"

namespace {

struct Flags {
    std::string scenario = "line";
    std::optional<double> rho;
    std::optional<int> runs;
    std::optional<int> iters;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> algos;
    std::optional<std::string> noise_source;
    std::string out = "out";
    bool force = false;
    bool svg = false;
};

void add_scenario_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--scenario", f.scenario,
                    "preset name (line, dense, tracking) or config file path");
    cmd->add_option("--rho", f.rho, "privacy threshold fraction of tr(W_kk)");
    cmd->add_option("--iters", f.iters, "iteration horizon");
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--algos", f.algos, "algorithms to run")->delimiter(',');
    cmd->add_option("--noise-source", f.noise_source,
                    "closed_form, steady, adaptive, or adaptive_per_run");
    cmd->add_flag("--force", f.force, "run even if network assumptions fail");
}

void add_output_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_flag("--svg", f.svg, "also write line charts");
}

plms::ScenarioConfig resolve(const Flags& f) {
    plms::ScenarioConfig cfg = plms::load_config(f.scenario);
    if (f.rho) cfg.rho = *f.rho;
    if (f.runs) cfg.runs = *f.runs;
    if (f.iters) cfg.iters = *f.iters;
    if (f.seed) cfg.seed = *f.seed;
    if (!f.algos.empty()) cfg.algos = f.algos;
    if (f.noise_source) cfg.noise_source = *f.noise_source;
    cfg.check();
    return cfg;
}

void print_outcome(const plms::ExperimentBundle& b, const std::string& dir) {
    std::cout << "wrote " << dir << "/curves_<algo>.csv and " << dir
              << "/summary.json\n";
    nlohmann::json ss = plms::summary_json(b)["steady_state"];
    for (const auto& [name, vals] : ss.items()) {
        std::cout << "  " << name << ": msd";
        auto cell = [&](const char* key) {
            const auto& v = vals[key];
            if (v.is_null())
                std::cout << " --";
            else
                std::cout << " " << v.get<double>();
        };
        cell("msd_emp_db");
        std::cout << " dB (theory";
        cell("msd_th_db");
        std::cout << " dB), xi";
        cell("xi_emp_db");
        std::cout << " dB (theory";
        cell("xi_th_db");
        std::cout << " dB)\n";
    }
    if (b.ratio) {
        std::cout << "  gain-to-loss vs plain: ";
        if (b.ratio->degenerate)
            std::cout << "degenerate (no gain, no loss)\n";
        else if (b.ratio->infinite)
            std::cout << "infinite (zero accuracy loss)\n";
        else
            std::cout << b.ratio->ratio << "\n";
    }
    for (const std::string& n : b.notices) std::cout << "  notice: " << n << "\n";
}

int fail(const char* category, const std::string& message, int code) {
    nlohmann::json err;
    err["error"] = {{"category", category}, {"message", message}};
    std::cerr << err.dump() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributed projection LMS with privacy-preserving noisy shares"};
    app.require_subcommand(1);

    Flags f;
    CLI::App* sim = app.add_subcommand(
        "simulate", "Monte-Carlo runs with theory overlays, written as CSV");
    add_scenario_flags(sim, f);
    sim->add_option("--runs", f.runs, "Monte-Carlo run count");
    add_output_flags(sim, f);

    CLI::App* theory = app.add_subcommand(
        "theory", "analytic performance recursions only, no sampling");
    add_scenario_flags(theory, f);
    add_output_flags(theory, f);

    CLI::App* validate = app.add_subcommand(
        "validate", "network and stability report for a scenario");
    add_scenario_flags(validate, f);
    std::string report_out;
    validate->add_option("--out", report_out, "write the report here instead of stdout");

    CLI::App* dump = app.add_subcommand("preset-dump", "print a preset's full config");
    dump->add_option("--scenario", f.scenario, "preset name");
    std::string dump_out;
    dump->add_option("--out", dump_out, "write the config here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() != 0) {
            nlohmann::json err;
            err["error"] = {{"category", "usage"}, {"message", e.what()}};
            std::cerr << err.dump() << "\n";
        }
        return app.exit(e);
    }

    try {
        if (sim->parsed() || theory->parsed()) {
            plms::ScenarioConfig cfg = resolve(f);
            plms::ExperimentBundle b =
                plms::run_experiment(cfg, /*with_sim=*/sim->parsed(), f.force);
            plms::emit(b, f.out, f.svg);
            print_outcome(b, f.out);
        } else if (validate->parsed()) {
            plms::ScenarioConfig cfg = resolve(f);
            std::string body = plms::validate_json(cfg).dump(2) + "\n";
            if (report_out.empty()) {
                std::cout << body;
            } else {
                std::ofstream out(report_out, std::ios::binary | std::ios::trunc);
                if (!out) throw plms::IoError("cannot open for writing: " + report_out);
                out << body;
            }
        } else if (dump->parsed()) {
            plms::ScenarioConfig cfg = plms::preset_config(f.scenario);
            std::string body = plms::config_to_json(cfg).dump(2) + "\n";
            if (dump_out.empty()) {
                std::cout << body;
            } else {
                std::ofstream out(dump_out, std::ios::binary | std::ios::trunc);
                if (!out) throw plms::IoError("cannot open for writing: " + dump_out);
                out << body;
            }
        }
        return 0;
    } catch (const plms::ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const plms::NumericError& e) {
        return fail("numeric", e.what(), 3);
    } catch (const plms::IoError& e) {
        return fail("io", e.what(), 4);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 5);
    }
}
