#pragma once

// JSON run configuration shared by the command-line subcommands. Validation
// errors carry a JSON pointer to the offending member.

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcrab/control_problem.hpp"
#include "dcrab/dynamics.hpp"
#include "dcrab/error.hpp"
#include "dcrab/loop/server.hpp"
#include "dcrab/objectives.hpp"
#include "dcrab/optimizer.hpp"
#include "dcrab/pulses.hpp"

namespace dcrab {

struct ServeSpec {
    std::string transport = "tcp";  // "tcp" or "exchange_dir"
    std::string host = "127.0.0.1";
    int port = 0;
    std::string directory;
    double timeout_seconds = 30.0;
    std::size_t sessions = 1;
};

struct RunConfig {
    Model model;
    std::optional<TimeGrid> grid;
    std::vector<Pulse> guess;
    QuantumState initial;
    ObjectiveSpec objective;
    SearchConfig search;
    std::string output_dir = "dcrab_out";
    ServeSpec serve;
    nlohmann::json source;  // the document as read

    ControlProblem problem() const { return {model, guess, initial, objective}; }

    loop::SessionConfig session() const {
        loop::SessionConfig s;
        s.search = search;
        s.guess = guess;
        s.constraint = objective.constraint;
        s.timeout_seconds = serve.timeout_seconds;
        return s;
    }
};

namespace detail {

/// Runs `fn`, turning any parse or validation failure into a ConfigError at `pointer`.
template <class Fn>
auto at_pointer(const std::string &pointer, Fn &&fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError &) {
        throw;
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(pointer, e.what());
    } catch (const std::exception &e) {
        throw ConfigError(pointer, e.what());
    }
}

inline const nlohmann::json &require_member(const nlohmann::json &j, const std::string &pointer, const char *key) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(pointer + "/" + key, "missing required member");
    return *it;
}

inline SearchConfig search_from_json(const nlohmann::json &j) {
    SearchConfig c;
    if (!j.is_object()) throw ConfigError("/search", "expected an object");
    static const std::set<std::string> known = {"algorithm", "n_funcs", "max_super_iterations", "max_evaluations",
                                                "simplex_tolerance", "initial_scale", "c0_scale", "stall_threshold",
                                                "seed", "target_J", "omega_max", "envelope", "guess_mode"};
    for (const auto &[key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("/search/" + key, "unknown member");
        at_pointer("/search/" + key, [&, &key = key, &value = value] {
            if (key == "algorithm") c.algorithm = parse_algorithm(value.get<std::string>());
            if (key == "n_funcs") c.n_funcs = value.get<std::size_t>();
            if (key == "max_super_iterations") c.max_super_iterations = value.get<std::size_t>();
            if (key == "max_evaluations") c.max_evaluations = value.get<std::size_t>();
            if (key == "simplex_tolerance") c.simplex_tolerance = value.get<double>();
            if (key == "initial_scale") c.initial_scale = value.get<double>();
            if (key == "c0_scale") c.c0_scale = value.get<double>();
            if (key == "stall_threshold") c.stall_threshold = value.get<double>();
            if (key == "seed") c.seed = value.get<std::uint64_t>();
            if (key == "target_J") c.target_J = value.get<double>();
            if (key == "omega_max") c.omega_max = value.get<double>();
            if (key == "envelope") c.envelope = parse_envelope(value.get<std::string>());
            if (key == "guess_mode") c.guess_mode = parse_assembly_mode(value.get<std::string>());
        });
    }
    at_pointer("/search", [&] { c.validate(); });
    return c;
}

inline std::vector<Pulse> guess_from_json(const nlohmann::json &j, const TimeGrid &grid, std::size_t controls,
                                          const std::filesystem::path &base) {
    if (!j.is_object()) throw ConfigError("/guess", "expected an object");
    std::vector<Pulse> out;
    if (j.contains("path")) {
        std::filesystem::path p = at_pointer("/guess/path", [&] { return std::filesystem::path(j["path"].get<std::string>()); });
        if (p.is_relative()) p = base / p;
        std::ifstream is(p);
        if (!is) throw ConfigError("/guess/path", "cannot open " + p.string());
        out = at_pointer("/guess/path", [&] { return read_pulses_csv(is); });
        if (!(out.front().grid() == grid)) throw ConfigError("/guess/path", "guess pulse is not on the configured grid");
    } else {
        const std::string builtin = j.value("builtin", std::string("constant"));
        if (builtin != "constant") throw ConfigError("/guess/builtin", "unknown builtin '" + builtin + "'");
        std::vector<double> values = at_pointer("/guess/value", [&] {
            const auto &v = require_member(j, "/guess", "value");
            return v.is_array() ? v.get<std::vector<double>>() : std::vector<double>(controls, v.get<double>());
        });
        if (values.size() != controls) throw ConfigError("/guess/value", "one value per control operator required");
        for (double v : values) out.push_back(Pulse::constant(grid, v));
    }
    if (out.size() != controls) throw ConfigError("/guess", "one guess pulse per control operator required");
    return out;
}

inline ServeSpec serve_from_json(const nlohmann::json &j) {
    ServeSpec s;
    at_pointer("/serve", [&] {
        s.transport = j.value("transport", s.transport);
        s.host = j.value("host", s.host);
        s.port = j.value("port", s.port);
        s.directory = j.value("directory", s.directory);
        s.timeout_seconds = j.value("timeout", s.timeout_seconds);
        s.sessions = j.value("sessions", s.sessions);
    });
    if (s.transport != "tcp" && s.transport != "exchange_dir") {
        throw ConfigError("/serve/transport", "expected \"tcp\" or \"exchange_dir\"");
    }
    if (!(s.timeout_seconds > 0.0)) throw ConfigError("/serve/timeout", "must be positive");
    if (s.transport == "exchange_dir" && s.directory.empty()) throw ConfigError("/serve/directory", "missing required member");
    if (s.port < 0 || s.port > 65535) throw ConfigError("/serve/port", "out of range");
    if (s.sessions == 0) throw ConfigError("/serve/sessions", "must be positive");
    return s;
}

}  // namespace detail

/// `base` resolves relative paths inside the document.
inline RunConfig parse_run_config(const nlohmann::json &j, const std::filesystem::path &base = ".") {
    if (!j.is_object()) throw ConfigError("", "configuration must be a JSON object");
    static const std::set<std::string> known = {"model", "grid", "guess", "initial_state", "objective",
                                                "search", "output", "serve", "description"};
    for (const auto &[key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("/" + key, "unknown member");
    }
    RunConfig c;
    c.source = j;
    c.model = detail::at_pointer("/model", [&] { return detail::require_member(j, "", "model").get<Model>(); });

    const auto &grid = detail::require_member(j, "", "grid");
    double duration = detail::at_pointer("/grid/duration",
                                         [&] { return detail::require_member(grid, "/grid", "duration").get<double>(); });
    std::size_t samples = detail::at_pointer(
        "/grid/samples", [&] { return detail::require_member(grid, "/grid", "samples").get<std::size_t>(); });
    c.grid = detail::at_pointer("/grid", [&] { return TimeGrid(duration, samples); });

    c.guess = detail::guess_from_json(detail::require_member(j, "", "guess"), *c.grid, c.model.controls.size(), base);
    c.objective = detail::at_pointer("/objective", [&] { return detail::require_member(j, "", "objective").get<ObjectiveSpec>(); });
    if (j.contains("initial_state")) {
        c.initial = detail::at_pointer("/initial_state", [&] { return vector_from_json(j["initial_state"]); });
    }
    c.search = detail::search_from_json(j.value("search", nlohmann::json::object()));
    if (j.contains("output")) c.output_dir = detail::at_pointer("/output", [&] { return j["output"].get<std::string>(); });
    if (j.contains("serve")) c.serve = detail::serve_from_json(j["serve"]);
    try {
        c.problem().validate();
    } catch (const std::exception &e) {
        const std::string what = e.what();
        throw ConfigError(what.find("initial state") != std::string::npos ? "/initial_state" : "/objective", what);
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("", "cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error &e) {
        throw ConfigError("", e.what());
    }
    return parse_run_config(j, path.parent_path());
}

}  // namespace dcrab
