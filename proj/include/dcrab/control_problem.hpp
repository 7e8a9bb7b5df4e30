#pragma once

// Binds a model, an initial condition and an objective into a figure of merit
// J(pulses) that the optimizer can call.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dcrab/dynamics.hpp"
#include "dcrab/error.hpp"
#include "dcrab/objectives.hpp"
#include "dcrab/pulses.hpp"

namespace dcrab {

struct ControlProblem {
    Model model;
    std::vector<Pulse> guess;  // one per control operator
    QuantumState initial;      // unused by gate and filter objectives
    ObjectiveSpec objective;

    const TimeGrid &grid() const {
        if (guess.empty()) throw std::invalid_argument("ControlProblem: no guess pulse");
        return guess.front().grid();
    }

    void validate() const {
        model.validate();
        objective.validate();
        if (guess.size() != model.controls.size()) {
            throw std::invalid_argument("ControlProblem: one guess pulse per control operator required");
        }
        for (const auto &g : guess) {
            if (!(g.grid() == grid())) throw std::invalid_argument("ControlProblem: guess pulses on different grids");
        }
        const bool needs_state = objective.kind == ObjectiveKind::state_fidelity ||
                                 objective.kind == ObjectiveKind::mixed_fidelity ||
                                 objective.kind == ObjectiveKind::entropy;
        if (needs_state) {
            if (initial.size() != model.dim) throw std::invalid_argument("ControlProblem: initial state dimension");
            if (std::abs(initial.norm() - 1.0) > 1e-10) throw std::invalid_argument("ControlProblem: initial state not normalized");
        }
        if (objective.target_state.size() > 0) {
            if (objective.target_state.size() != model.dim) throw std::invalid_argument("ControlProblem: target state dimension");
            if (std::abs(objective.target_state.norm() - 1.0) > 1e-10) {
                throw std::invalid_argument("ControlProblem: target state not normalized");
            }
        }
        if (objective.target_gate.size() > 0 && objective.target_gate.rows() != model.dim) {
            throw std::invalid_argument("ControlProblem: target gate dimension");
        }
    }
};

/// Raw figure of merit of `pulses` (before penalties). Throws DynamicsError on
/// propagation failures.
inline double raw_figure_of_merit(const ControlProblem &problem, std::span<const Pulse> pulses) {
    const ObjectiveSpec &obj = problem.objective;
    const Model &model = problem.model;
    auto final_unitary = [&]() {
        if (model.is_open()) throw DynamicsError("gate objectives need closed dynamics");
        Propagation p = propagate(model, pulses, CVector(CVector::Zero(model.dim)),
                                  {.want_unitary = true, .store_trajectory = false});
        return *p.unitary;
    };
    switch (obj.kind) {
        case ObjectiveKind::state_fidelity:
        case ObjectiveKind::mixed_fidelity: {
            if (model.is_open() || obj.kind == ObjectiveKind::mixed_fidelity) {
                DensityMatrix rho0 = problem.initial * problem.initial.adjoint();
                Propagation p = propagate(model, pulses, rho0, {.want_unitary = false, .store_trajectory = false});
                return mixed_fidelity(p.final_density(), obj.target_state);
            }
            Propagation p = propagate(model, pulses, problem.initial, {.want_unitary = false, .store_trajectory = false});
            return state_fidelity(p.final_state(), obj.target_state);
        }
        case ObjectiveKind::gate_re: return gate_fidelity(final_unitary(), obj.target_gate, GateMode::re);
        case ObjectiveKind::gate_sm: return gate_fidelity(final_unitary(), obj.target_gate, GateMode::sm);
        case ObjectiveKind::gate_ss: return gate_fidelity(final_unitary(), obj.target_gate, GateMode::ss);
        case ObjectiveKind::nonlocal: return nonlocal_fidelity(final_unitary(), obj.target_gate);
        case ObjectiveKind::perfect_entangler: return perfect_entangler_fidelity(final_unitary());
        case ObjectiveKind::phase_gate: {
            // Phases are read off the diagonal; population leaving the
            // computational states scales the result down.
            CMatrix u = final_unitary();
            CMatrix diag = CMatrix::Zero(4, 4);
            double kept = 0.0;
            for (int i = 0; i < 4; ++i) {
                kept += std::norm(u(i, i));
                diag(i, i) = std::abs(u(i, i)) > 0 ? u(i, i) / std::abs(u(i, i)) : cplx(1.0);
            }
            return phase_gate_fidelity(diag, obj.target_gate, obj.phase_mode) * kept / 4.0;
        }
        case ObjectiveKind::entropy: {
            Propagation p = propagate(model, pulses, problem.initial, {.want_unitary = false, .store_trajectory = false});
            return entanglement_entropy(p.final_state(), obj.cut, obj.local_dims);
        }
        case ObjectiveKind::filter_overlap: {
            FilterSpec spec{pulses.front(), obj.filter_omega, obj.filter_spectrum};
            double chi = filter_overlap(spec);
            return obj.maximize_overlap ? chi : -chi;
        }
    }
    return 0.0;
}

inline ObjectiveValue evaluate_objective(const ControlProblem &problem, std::span<const Pulse> pulses) {
    return compose_objective(problem.objective, raw_figure_of_merit(problem, pulses), pulses);
}

/// J together with an optional standard error reported by the evaluator.
struct FomReport {
    double J = 0.0;
    std::optional<double> std_error;
};

using PulseEvaluator = std::function<FomReport(std::span<const Pulse>)>;

/// In-process simulated figure of merit. Failed propagations map to -infinity.
inline PulseEvaluator make_simulated_evaluator(const ControlProblem &problem) {
    auto shared = std::make_shared<const ControlProblem>(problem);
    return [shared](std::span<const Pulse> pulses) -> FomReport {
        try {
            return {evaluate_objective(*shared, pulses).J, std::nullopt};
        } catch (const DynamicsError &) {
            return {-std::numeric_limits<double>::infinity(), std::nullopt};
        } catch (const std::invalid_argument &) {
            return {-std::numeric_limits<double>::infinity(), std::nullopt};
        }
    };
}

}  // namespace dcrab
