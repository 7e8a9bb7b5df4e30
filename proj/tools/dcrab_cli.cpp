// dcrab: optimize, evaluate, diagnose, serve.
//
// Exit codes: 0 success (target reached, clean stall or convergence, or no
// target set), 1 target set but not reached, 2 configuration or runtime error.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dcrab/config.hpp"
#include "dcrab/diagnostics.hpp"
#include "dcrab/loop/server.hpp"
#include "dcrab/loop/transport.hpp"
#include "dcrab/optimizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kMissedTarget = 1;
constexpr int kError = 2;

bool is_fidelity(dcrab::ObjectiveKind k) {
    using K = dcrab::ObjectiveKind;
    return k != K::entropy && k != K::filter_overlap;
}

int exit_code(const dcrab::OptimizationRecord &r, const dcrab::SearchConfig &search) {
    if (r.termination == dcrab::Termination::aborted) return kError;
    if (search.target_J && !(r.final_J && *r.final_J >= *search.target_J)) return kMissedTarget;
    return kOk;
}

json summarize(const dcrab::OptimizationRecord &r, const dcrab::RunConfig &cfg) {
    json s = dcrab::summary_to_json(r);
    if (r.final_J && is_fidelity(cfg.objective.kind) && cfg.objective.penalties.empty()) {
        s["final_error"] = 1.0 - *r.final_J;
    }
    return s;
}

void write_outputs(const fs::path &dir, const dcrab::OptimizationRecord &r, const json &summary) {
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "evaluations.jsonl");
        dcrab::write_evaluations_jsonl(os, r);
    }
    {
        std::ofstream os(dir / "summary.json");
        os << summary.dump(2) << '\n';
    }
    {
        std::ofstream os(dir / "final_pulse.csv");
        dcrab::write_pulses_csv(os, r.final_pulses);
    }
}

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
    unsigned jobs = 1;
};

dcrab::RunConfig load(const Common &c) {
    dcrab::RunConfig cfg = dcrab::load_run_config(c.config);
    if (c.seed) cfg.search.seed = *c.seed;
    if (c.output) cfg.output_dir = *c.output;
    return cfg;
}

int cmd_optimize(const Common &c, std::size_t runs) {
    dcrab::RunConfig cfg = load(c);
    const dcrab::ControlProblem problem = cfg.problem();
    auto run_one = [&](std::uint64_t seed) {
        return cfg.search.algorithm == dcrab::Algorithm::crab ? dcrab::run_crab(problem, cfg.search, seed)
                                                              : dcrab::run_dcrab(problem, cfg.search, seed);
    };
    if (runs <= 1) {
        dcrab::OptimizationRecord r = run_one(cfg.search.seed);
        json s = summarize(r, cfg);
        write_outputs(cfg.output_dir, r, s);
        std::cout << s.dump(2) << '\n';
        return exit_code(r, cfg.search);
    }

    // Ensemble over consecutive seeds, one output directory per seed.
    std::vector<std::optional<dcrab::OptimizationRecord>> records(runs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < runs; i = next++) records[i] = run_one(cfg.search.seed + i);
    };
    std::vector<std::thread> pool;
    const unsigned jobs = std::max(1u, std::min<unsigned>(c.jobs, static_cast<unsigned>(runs)));
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto &t : pool) t.join();

    json report = json::array();
    int code = kOk;
    std::vector<double> errors;
    for (std::size_t i = 0; i < runs; ++i) {
        const auto &r = *records[i];
        json s = summarize(r, cfg);
        write_outputs(fs::path(cfg.output_dir) / ("seed_" + std::to_string(cfg.search.seed + i)), r, s);
        report.push_back({{"seed", r.seed}, {"final_J", s["final_J"]}, {"termination", s["termination"]}});
        if (s.contains("final_error")) errors.push_back(s["final_error"].get<double>());
        code = std::max(code, exit_code(r, cfg.search));
    }
    json out{{"runs", report}};
    if (errors.size() == runs) {
        auto stats = dcrab::ensemble_statistics(errors, cfg.search.target_J ? 1.0 - *cfg.search.target_J : 1e-3);
        out["median_error"] = stats.median_error;
        out["max_error"] = stats.max_error;
        out["success_probability"] = stats.success_probability;
    }
    std::cout << out.dump(2) << '\n';
    return code;
}

int cmd_evaluate(const Common &c, const std::string &pulse_path) {
    dcrab::RunConfig cfg = load(c);
    std::ifstream is(pulse_path);
    if (!is) throw std::runtime_error("cannot open " + pulse_path);
    std::vector<dcrab::Pulse> pulses = dcrab::read_pulses_csv(is);
    dcrab::ControlProblem problem = cfg.problem();
    if (pulses.size() != problem.guess.size()) throw std::runtime_error("pulse file has the wrong number of controls");
    if (!(pulses.front().grid() == problem.grid())) throw std::runtime_error("pulse file is not on the configured grid");
    dcrab::ObjectiveValue v = dcrab::evaluate_objective(problem, pulses);
    json out{{"raw", v.raw}, {"height_penalty", v.height_penalty}, {"energy_penalty", v.energy_penalty}, {"J", v.J}};
    std::cout << out.dump(2) << '\n';
    return kOk;
}

std::vector<double> numbers(const json &j, const char *key) { return j.at(key).get<std::vector<double>>(); }

int cmd_diagnose(const std::string &inputs_path) {
    std::ifstream is(inputs_path);
    if (!is) throw std::runtime_error("cannot open " + inputs_path);
    json in = json::parse(is);
    json out = json::object();
    if (in.contains("qsl")) {
        const auto &q = in["qsl"];
        out["qsl_bhattacharyya"] = dcrab::qsl_bhattacharyya(q.at("energy_spread").get<double>(),
                                                            dcrab::vector_from_json(q.at("initial")),
                                                            dcrab::vector_from_json(q.at("target")));
    }
    if (in.contains("gap")) out["qsl_gap"] = dcrab::qsl_gap(in["gap"].get<double>());
    if (in.contains("capacity")) {
        const auto &cap = in["capacity"];
        switch (dcrab::parse_capacity_mode(cap.at("mode").get<std::string>())) {
            case dcrab::CapacityMode::hartley:
                out["capacity"] = dcrab::capacity_hartley(cap.at("bandwidth").get<double>(), cap.at("amplitude_ratio").get<double>());
                break;
            case dcrab::CapacityMode::gaussian:
                out["capacity"] = dcrab::capacity_gaussian(cap.at("bandwidth").get<double>(), cap.at("signal_power").get<double>(),
                                                           cap.at("noise_power").get<double>());
                break;
            case dcrab::CapacityMode::colored:
                out["capacity"] = dcrab::capacity_colored(numbers(cap, "omega"), numbers(cap, "signal"), numbers(cap, "noise"));
                break;
        }
    }
    if (in.contains("error_bound")) {
        const auto &e = in["error_bound"];
        out["error_bound"] = dcrab::error_bound(e.at("information_bits").get<double>(), e.at("reachable_dimension").get<double>());
    }
    if (in.contains("time_bound")) {
        const auto &t = in["time_bound"];
        out["time_bound"] = dcrab::time_bound(t.at("reachable_dimension").get<double>(), t.at("capacity").get<double>(),
                                              t.at("epsilon").get<double>());
    }
    if (in.contains("hilbert_dimension")) {
        out["reachable_dimension"] = dcrab::reachable_dimension_state_transfer(in["hilbert_dimension"].get<int>());
    }
    if (in.contains("error_scaling")) {
        std::vector<std::pair<double, double>> samples;
        for (const auto &s : in["error_scaling"]) samples.emplace_back(s.at(0).get<double>(), s.at(1).get<double>());
        auto fit = dcrab::fit_error_scaling(samples);
        out["error_scaling"] = {{"amplitude", fit.amplitude}, {"b1", fit.b1}, {"b2", fit.b2}, {"residual", fit.residual}, {"non_decaying", fit.non_decaying}};
    }
    if (in.contains("pulse")) {
        fs::path p = in["pulse"].get<std::string>();
        if (p.is_relative()) p = fs::path(inputs_path).parent_path() / p;
        std::ifstream ps(p);
        if (!ps) throw std::runtime_error("cannot open " + p.string());
        auto pulses = dcrab::read_pulses_csv(ps);
        json arr = json::array();
        for (const auto &pulse : pulses) {
            auto psd = dcrab::pulse_psd(pulse);
            auto peak = std::max_element(psd.value.begin(), psd.value.end()) - psd.value.begin();
            arr.push_back({{"power", dcrab::pulse_power(pulse)},
                           {"energy", dcrab::pulse_energy(pulse)},
                           {"max_abs", pulse.max_abs()},
                           {"psd_peak_omega", psd.omega[static_cast<std::size_t>(peak)]}});
        }
        out["pulses"] = arr;
    }
    std::cout << out.dump(2) << '\n';
    return kOk;
}

int cmd_serve(const Common &c, const std::optional<std::string> &port_file) {
    dcrab::RunConfig cfg = load(c);
    dcrab::loop::SessionConfig session = cfg.session();
    std::vector<dcrab::loop::SessionOutcome> outcomes;
    if (cfg.serve.transport == "exchange_dir") {
        dcrab::loop::ExchangeDirTransport transport(cfg.serve.directory);
        outcomes.push_back(dcrab::loop::serve(session, transport));
    } else {
        dcrab::loop::TcpListener listener(cfg.serve.host, cfg.serve.port);
        std::cerr << "listening on " << cfg.serve.host << ':' << listener.port() << std::endl;
        if (port_file) {
            std::ofstream(*port_file + ".tmp") << listener.port() << '\n';
            fs::rename(*port_file + ".tmp", *port_file);
        }
        const auto wait = std::chrono::milliseconds(static_cast<long long>(cfg.serve.timeout_seconds * 1000.0));
        outcomes = dcrab::loop::serve_tcp(session, listener, cfg.serve.sessions, wait);
        if (outcomes.empty()) throw dcrab::TimeoutError("no client connected");
    }
    int code = kOk;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto &o = outcomes[i];
        json s = summarize(o.record, cfg);
        s["session"] = o.session;
        s["close_reason"] = o.close_reason;
        if (!o.error.empty()) s["error"] = o.error;
        fs::path dir = outcomes.size() == 1 ? fs::path(cfg.output_dir) : fs::path(cfg.output_dir) / ("session_" + std::to_string(i));
        write_outputs(dir, o.record, s);
        std::cout << s.dump(2) << '\n';
        code = std::max(code, o.error.empty() ? exit_code(o.record, cfg.search) : kError);
    }
    return code;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"dCRAB quantum optimal control"};
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App *sub) {
        sub->add_option("--config", common.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Overrides the configured seed");
        sub->add_option("--output", common.output, "Output directory");
        sub->add_option("--jobs", common.jobs, "Parallel runs for ensembles")->check(CLI::PositiveNumber);
    };

    std::size_t runs = 1;
    auto *optimize = app.add_subcommand("optimize", "Run CRAB or dCRAB on a simulated problem");
    add_common(optimize);
    optimize->add_option("--runs", runs, "Ensemble size over consecutive seeds")->check(CLI::PositiveNumber);

    std::string pulse_path;
    auto *evaluate = app.add_subcommand("evaluate", "Evaluate a pulse file against a configuration");
    add_common(evaluate);
    evaluate->add_option("--pulse", pulse_path, "Pulse CSV")->required()->check(CLI::ExistingFile);

    std::string inputs_path;
    auto *diagnose = app.add_subcommand("diagnose", "Speed limits, capacities and bounds");
    diagnose->add_option("--inputs", inputs_path, "Diagnostics inputs (JSON)")->required()->check(CLI::ExistingFile);

    std::optional<std::string> port_file;
    auto *serve = app.add_subcommand("serve", "Closed-loop server for an external figure of merit");
    add_common(serve);
    serve->add_option("--port-file", port_file, "Write the bound TCP port here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kError;
    }

    try {
        if (*optimize) return cmd_optimize(common, runs);
        if (*evaluate) return cmd_evaluate(common, pulse_path);
        if (*diagnose) return cmd_diagnose(inputs_path);
        if (*serve) return cmd_serve(common, port_file);
    } catch (const dcrab::ConfigError &e) {
        std::cerr << "config error at " << e.what() << '\n';
        return kError;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kError;
    }
    return kError;
}
