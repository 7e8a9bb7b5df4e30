#pragma once

// CRAB and dCRAB drivers around the Nelder-Mead inner search.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcrab/control_problem.hpp"
#include "dcrab/nelder_mead.hpp"
#include "dcrab/objectives.hpp"
#include "dcrab/pulses.hpp"
#include "dcrab/seeding.hpp"

namespace dcrab {

enum class Algorithm { crab, dcrab };

inline std::string_view to_string(Algorithm a) { return a == Algorithm::crab ? "crab" : "dcrab"; }

inline Algorithm parse_algorithm(std::string_view s) {
    if (s == "crab") return Algorithm::crab;
    if (s == "dcrab") return Algorithm::dcrab;
    throw std::invalid_argument("unknown algorithm '" + std::string(s) + "'");
}

struct SearchConfig {
    Algorithm algorithm = Algorithm::dcrab;
    std::size_t n_funcs = 4;
    std::size_t max_super_iterations = 10;  // ignored by plain CRAB
    std::size_t max_evaluations = 500;      // per super-iteration; 0 evaluates nothing
    double simplex_tolerance = 1e-10;
    std::optional<double> initial_scale;  // coefficient offset of the initial simplex
    double c0_scale = 0.05;
    double stall_threshold = 1e-6;
    std::uint64_t seed = 0;
    std::optional<double> target_J;
    std::optional<double> omega_max;  // default: just above the N_c/2-th harmonic
    Envelope envelope = Envelope::sine;
    AssemblyMode guess_mode = AssemblyMode::multiplicative;  // CRAB only

    void validate() const {
        if (n_funcs == 0) throw std::invalid_argument("SearchConfig: n_funcs must be positive");
        if (max_super_iterations == 0) throw std::invalid_argument("SearchConfig: max_super_iterations must be positive");
        if (!(simplex_tolerance > 0.0 && simplex_tolerance < 1.0)) {
            throw std::invalid_argument("SearchConfig: simplex_tolerance must lie in (0, 1)");
        }
        if (!(stall_threshold > 0.0 && stall_threshold < 1.0)) {
            throw std::invalid_argument("SearchConfig: stall_threshold must lie in (0, 1)");
        }
        if (initial_scale && !(*initial_scale > 0.0)) throw std::invalid_argument("SearchConfig: initial_scale must be positive");
        if (!(c0_scale > 0.0)) throw std::invalid_argument("SearchConfig: c0_scale must be positive");
        if (omega_max && !(*omega_max > 0.0)) throw std::invalid_argument("SearchConfig: omega_max must be positive");
        if (guess_mode == AssemblyMode::dressed) throw std::invalid_argument("SearchConfig: guess_mode must be additive or multiplicative");
    }

    double resolved_omega_max(double duration) const {
        if (omega_max) return *omega_max;
        const double harmonics = std::ceil(static_cast<double>(n_funcs) / 2.0);
        return 2.0 * M_PI * (harmonics + 0.5) / duration;
    }
};

enum class Termination { no_budget, converged, budget_exhausted, target_reached, stalled, max_super_iterations, aborted };

inline std::string_view to_string(Termination t) {
    switch (t) {
        case Termination::no_budget: return "no_budget";
        case Termination::converged: return "converged";
        case Termination::budget_exhausted: return "budget_exhausted";
        case Termination::target_reached: return "target_reached";
        case Termination::stalled: return "stalled";
        case Termination::max_super_iterations: return "max_super_iterations";
        case Termination::aborted: return "aborted";
    }
    return "?";
}

struct EvaluationEntry {
    std::size_t index = 0;            // 1-based over the whole run
    std::size_t super_iteration = 0;  // 1-based
    std::vector<double> coefficients; // flattened, per control: [c0,] c1..cNc
    double J = 0.0;
    std::optional<double> std_error;
};

struct SuperIterationEntry {
    std::size_t index = 0;
    std::vector<BasisSet> bases;               // one per control
    std::vector<CrabCoefficients> coefficients;  // best coefficients, one per control
    double start_J = 0.0;                      // first evaluation of this super-iteration
    double best_J = 0.0;
    std::vector<Pulse> best_pulses;
    std::size_t evaluations = 0;
};

struct OptimizationRecord {
    Algorithm algorithm = Algorithm::dcrab;
    std::uint64_t seed = 0;
    AssemblyMode guess_mode = AssemblyMode::multiplicative;
    ConstraintSpec constraint;
    std::vector<Pulse> guess;
    std::vector<EvaluationEntry> evaluations;
    std::vector<SuperIterationEntry> super_iterations;
    std::vector<Pulse> final_pulses;
    std::optional<double> final_J;
    Termination termination = Termination::no_budget;
    std::string detail;  // abort reason, if any
    std::size_t total_evaluations = 0;
    double wall_seconds = 0.0;
};

/// Core driver over an arbitrary figure-of-merit evaluator. Used directly by
/// the loop server; run_crab/run_dcrab wrap it with a simulated evaluator.
/// An exception from `evaluator` ends the run with a partial record.
inline OptimizationRecord optimize_pulses(const std::vector<Pulse> &guess, const ConstraintSpec &constraint,
                                          const PulseEvaluator &evaluator, const SearchConfig &config) {
    config.validate();
    if (guess.empty()) throw std::invalid_argument("optimize_pulses: at least one guess pulse required");
    const TimeGrid &grid = guess.front().grid();
    for (const auto &g : guess) {
        if (!(g.grid() == grid)) throw std::invalid_argument("optimize_pulses: guess pulses on different grids");
    }
    const auto started = std::chrono::steady_clock::now();
    const bool dressed = config.algorithm == Algorithm::dcrab;
    const std::size_t n_ctrl = guess.size();
    const std::size_t n_c = config.n_funcs;
    const std::size_t per_ctrl = n_c + (dressed ? 1 : 0);
    const double omega_max = config.resolved_omega_max(grid.duration());
    const std::size_t supers = dressed ? config.max_super_iterations : 1;

    OptimizationRecord record;
    record.algorithm = config.algorithm;
    record.seed = config.seed;
    record.guess_mode = dressed ? AssemblyMode::dressed : config.guess_mode;
    record.constraint = constraint;
    record.guess = guess;

    // Incumbent pulses; dCRAB dresses these, CRAB always expands the guess.
    std::vector<Pulse> current;
    for (const auto &g : guess) current.push_back(apply_constraint(constraint, g));
    record.final_pulses = current;

    auto finish = [&](Termination why) {
        record.termination = why;
        record.total_evaluations = record.evaluations.size();
        record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        return record;
    };
    if (config.max_evaluations == 0) return finish(Termination::no_budget);

    for (std::size_t j = 1; j <= supers; ++j) {
        std::vector<BasisSet> bases;
        std::vector<std::vector<std::vector<double>>> sampled;
        for (std::size_t k = 0; k < n_ctrl; ++k) {
            bases.push_back(sample_basis(n_c, grid, omega_max, config.envelope, derive_seed(config.seed, {j, k})));
            sampled.push_back(sample_on_grid(bases.back(), grid));
        }

        std::vector<double> x0(n_ctrl * per_ctrl, 0.0);
        std::vector<double> scales(n_ctrl * per_ctrl);
        for (std::size_t k = 0; k < n_ctrl; ++k) {
            const Pulse &ref = dressed ? current[k] : guess[k];
            double peak = ref.max_abs();
            double s = config.initial_scale.value_or(0.1 * (peak > 0.0 ? peak : 1.0));
            if (!dressed && config.guess_mode == AssemblyMode::multiplicative) s = config.initial_scale.value_or(0.1);
            for (std::size_t i = 0; i < per_ctrl; ++i) scales[k * per_ctrl + i] = s;
            if (dressed) {
                x0[k * per_ctrl] = 1.0;
                scales[k * per_ctrl] = config.c0_scale;
            }
        }

        auto unpack = [&](std::span<const double> x, std::size_t k) {
            CrabCoefficients c;
            std::size_t off = k * per_ctrl;
            if (dressed) c.c0 = x[off++];
            c.c.assign(x.begin() + static_cast<std::ptrdiff_t>(off), x.begin() + static_cast<std::ptrdiff_t>(off + n_c));
            return c;
        };
        auto build = [&](std::span<const double> x) {
            std::vector<Pulse> pulses;
            for (std::size_t k = 0; k < n_ctrl; ++k) {
                Pulse p = dressed ? assemble_pulse(guess[k], sampled[k], unpack(x, k), AssemblyMode::dressed, &current[k])
                                  : assemble_pulse(guess[k], sampled[k], unpack(x, k), config.guess_mode);
                pulses.push_back(apply_constraint(constraint, p));
            }
            return pulses;
        };

        auto fom = [&](std::span<const double> x) -> double {
            std::vector<Pulse> pulses = build(x);
            FomReport rep = evaluator(pulses);
            record.evaluations.push_back(
                {record.evaluations.size() + 1, j, std::vector<double>(x.begin(), x.end()), rep.J, rep.std_error});
            return rep.J;
        };

        const std::size_t first = record.evaluations.size();
        NelderMeadResult res = nelder_mead(
            fom, x0, scales, {.tolerance = config.simplex_tolerance, .max_evaluations = config.max_evaluations, .stop_value = config.target_J});
        if (res.evaluations == 0) {
            record.detail = res.abort_reason;
            return finish(res.aborted ? Termination::aborted : Termination::no_budget);
        }

        SuperIterationEntry entry;
        entry.index = j;
        entry.bases = bases;
        entry.start_J = record.evaluations[first].J;
        entry.evaluations = res.evaluations;
        std::vector<double> x_best = res.x;
        double best = res.value;
        // A noisy evaluator can report the incumbent lower on re-evaluation;
        // keep it rather than accept a worse pulse.
        if (record.final_J && !(best >= *record.final_J)) {
            x_best = x0;
            best = *record.final_J;
        }
        for (std::size_t k = 0; k < n_ctrl; ++k) entry.coefficients.push_back(unpack(x_best, k));
        entry.best_J = best;
        entry.best_pulses = (record.final_J && x_best == x0 && dressed) ? current : build(x_best);
        if (dressed) current = entry.best_pulses;
        record.final_pulses = entry.best_pulses;
        const std::optional<double> previous = record.final_J;
        record.final_J = best;
        record.super_iterations.push_back(std::move(entry));

        if (res.aborted) {
            record.detail = res.abort_reason;
            return finish(Termination::aborted);
        }
        if (config.target_J && best >= *config.target_J) return finish(Termination::target_reached);
        if (!dressed) return finish(res.converged ? Termination::converged : Termination::budget_exhausted);
        // Relative improvement over the super-iteration, measured from the
        // incumbent (or from the first evaluation in the first round).
        const double start = previous.value_or(record.super_iterations.back().start_J);
        if (std::isfinite(start) && best - start <= config.stall_threshold * std::max(std::abs(start), 1e-300)) {
            return finish(Termination::stalled);
        }
    }
    return finish(Termination::max_super_iterations);
}

inline OptimizationRecord run_crab(const ControlProblem &problem, SearchConfig config, std::uint64_t seed) {
    problem.validate();
    config.algorithm = Algorithm::crab;
    config.seed = seed;
    return optimize_pulses(problem.guess, problem.objective.constraint, make_simulated_evaluator(problem), config);
}

inline OptimizationRecord run_dcrab(const ControlProblem &problem, SearchConfig config, std::uint64_t seed) {
    problem.validate();
    config.algorithm = Algorithm::dcrab;
    config.seed = seed;
    return optimize_pulses(problem.guess, problem.objective.constraint, make_simulated_evaluator(problem), config);
}

/// Rebuilds the final pulses from the guess and the stored basis/coefficient
/// history alone.
inline std::vector<Pulse> reassemble_final(const OptimizationRecord &record) {
    std::vector<Pulse> current;
    for (const auto &g : record.guess) current.push_back(apply_constraint(record.constraint, g));
    for (const auto &s : record.super_iterations) {
        std::vector<Pulse> next;
        for (std::size_t k = 0; k < current.size(); ++k) {
            Pulse p = record.algorithm == Algorithm::dcrab
                          ? assemble_pulse(record.guess[k], s.bases[k], s.coefficients[k], AssemblyMode::dressed, &current[k])
                          : assemble_pulse(record.guess[k], s.bases[k], s.coefficients[k], record.guess_mode);
            next.push_back(apply_constraint(record.constraint, p));
        }
        current = std::move(next);
    }
    return current;
}

// ---------------------------------------------------------------------------
// Serialization. JSON cannot carry infinities; non-finite J is written as null.

inline void to_json(nlohmann::json &j, const SearchConfig &c) {
    j = nlohmann::json{{"algorithm", std::string(to_string(c.algorithm))},
                       {"n_funcs", c.n_funcs},
                       {"max_super_iterations", c.max_super_iterations},
                       {"max_evaluations", c.max_evaluations},
                       {"simplex_tolerance", c.simplex_tolerance},
                       {"c0_scale", c.c0_scale},
                       {"stall_threshold", c.stall_threshold},
                       {"seed", c.seed},
                       {"envelope", std::string(to_string(c.envelope))},
                       {"guess_mode", std::string(to_string(c.guess_mode))}};
    if (c.initial_scale) j["initial_scale"] = *c.initial_scale;
    if (c.target_J) j["target_J"] = *c.target_J;
    if (c.omega_max) j["omega_max"] = *c.omega_max;
}

namespace detail {
inline nlohmann::json finite_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }
}  // namespace detail

inline nlohmann::json evaluation_to_json(const EvaluationEntry &e) {
    nlohmann::json j{{"iter", e.index}, {"super", e.super_iteration}, {"coefficients", e.coefficients},
                     {"J", detail::finite_or_null(e.J)}};
    if (e.std_error) j["err"] = *e.std_error;
    return j;
}

inline void write_evaluations_jsonl(std::ostream &os, const OptimizationRecord &record) {
    for (const auto &e : record.evaluations) os << evaluation_to_json(e).dump() << '\n';
}

/// Summary without wall-clock time, so that it is reproducible byte for byte.
inline nlohmann::json summary_to_json(const OptimizationRecord &r) {
    nlohmann::json supers = nlohmann::json::array();
    for (const auto &s : r.super_iterations) {
        supers.push_back({{"index", s.index},
                          {"bases", s.bases},
                          {"coefficients", s.coefficients},
                          {"start_J", detail::finite_or_null(s.start_J)},
                          {"best_J", detail::finite_or_null(s.best_J)},
                          {"evaluations", s.evaluations}});
    }
    nlohmann::json j{{"algorithm", std::string(to_string(r.algorithm))},
                     {"seed", r.seed},
                     {"guess_mode", std::string(to_string(r.guess_mode))},
                     {"constraint", {{"mode", std::string(to_string(r.constraint.mode))}, {"f_max", r.constraint.f_max}}},
                     {"termination", std::string(to_string(r.termination))},
                     {"total_evaluations", r.total_evaluations},
                     {"super_iterations", supers},
                     {"final_J", r.final_J ? detail::finite_or_null(*r.final_J) : nlohmann::json(nullptr)}};
    if (!r.detail.empty()) j["detail"] = r.detail;
    return j;
}

}  // namespace dcrab
