// gfpc: stability, tuning and EMT-vs-RMS simulation of a droop-controlled
// grid-forming converter on an infinite bus.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "gfpc/commands.hpp"

namespace {

void configure_logging() {
    spdlog::set_default_logger(spdlog::stderr_logger_st("gfpc"));
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("GFPC_LOG")) {
        const auto level = spdlog::level::from_str(env);
        // from_str maps unknown names to off; only "off" itself should silence.
        if (level != spdlog::level::off || std::string(env) == "off")
            spdlog::set_level(level);
        else
            spdlog::warn("ignoring unknown GFPC_LOG level '{}'", env);
    }
}

struct Options {
    std::string config;
    std::string model;
    std::string out;
    double gm = 2.5;
    int phase_floor = 80;
    std::string kp_range = "0:0.01:101";
    std::string omega_range;
    std::string which = "open";
};

std::optional<std::filesystem::path> out_path(const Options& o) {
    if (o.out.empty()) return std::nullopt;
    return std::filesystem::path(o.out);
}

std::optional<gfpc::ModelKind> model_flag(const Options& o) {
    if (o.model.empty()) return std::nullopt;
    return gfpc::parse_model_kind(o.model);
}

gfpc::CaseConfig load(const Options& o) {
    if (o.config.empty()) {
        spdlog::info("no --config given, using defaults");
        gfpc::CaseConfig cfg;
        return cfg;
    }
    spdlog::info("reading {}", o.config);
    return gfpc::parse_config_file(o.config);
}

}  // namespace

int main(int argc, char** argv) {
    configure_logging();

    CLI::App app{"Grid-forming converter EMT vs RMS stability and simulation"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "case file (key = value)");
        sub->add_option("--out", o.out, "output CSV path (compare: file prefix)");
    };
    auto add_model = [&](CLI::App* sub) {
        sub->add_option("--model", o.model, "emt or rms")->check(CLI::IsMember({"emt", "rms"}));
    };

    auto* analyze = app.add_subcommand("analyze", "stability verdicts, poles and margins of both models");
    add_common(analyze);
    auto* tune = app.add_subcommand("tune", "k_v and K_p for a target gain margin");
    add_common(tune);
    tune->add_option("--gm", o.gm, "target gain margin")->capture_default_str();
    tune->add_option("--phase-floor", o.phase_floor, "phase-margin floor in degrees")
        ->check(CLI::IsMember({80, 45}))
        ->capture_default_str();
    auto* simulate = app.add_subcommand("simulate", "time-domain step response of one model");
    add_common(simulate);
    add_model(simulate);
    auto* compare = app.add_subcommand("compare", "EMT and RMS step responses and their mismatch");
    add_common(compare);
    auto* rootlocus = app.add_subcommand("rootlocus", "closed-loop poles over a K_p sweep");
    add_common(rootlocus);
    add_model(rootlocus);
    rootlocus->add_option("--kp-range", o.kp_range, "min:max:n")->capture_default_str();
    auto* bode = app.add_subcommand("bode", "frequency response of the loop, closed loop or mismatch");
    add_common(bode);
    add_model(bode);
    bode->add_option("--omega-range", o.omega_range, "min:max:n in p.u. (log-spaced)");
    bode->add_option("--which", o.which, "open, closed or mismatch")
        ->check(CLI::IsMember({"open", "closed", "mismatch"}))
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        gfpc::CaseConfig cfg = load(o);
        gfpc::Report report;
        if (*analyze) {
            report = gfpc::cmd_analyze(cfg, out_path(o));
        } else if (*tune) {
            report = gfpc::cmd_tune(cfg, o.gm, gfpc::phase_floor_from_degrees(o.phase_floor));
        } else if (*simulate) {
            if (auto m = model_flag(o)) cfg.sim.model = *m;
            gfpc::validate(cfg.sim);
            report = gfpc::cmd_simulate(cfg, out_path(o));
        } else if (*compare) {
            report = gfpc::cmd_compare(cfg, out_path(o));
        } else if (*rootlocus) {
            report = gfpc::cmd_rootlocus(cfg, gfpc::parse_range(o.kp_range), model_flag(o), out_path(o));
        } else {
            std::optional<gfpc::GridSpec> omega;
            if (!o.omega_range.empty()) omega = gfpc::parse_range(o.omega_range);
            report = gfpc::cmd_bode(cfg, gfpc::parse_bode_which(o.which), omega, model_flag(o), out_path(o));
        }
        if (report.machine.contains("csv")) spdlog::info("wrote {}", report.machine["csv"].dump());
        std::cout << report.render();
    } catch (const gfpc::Error& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("unexpected: {}", e.what());
        return 3;
    }
    return 0;
}
