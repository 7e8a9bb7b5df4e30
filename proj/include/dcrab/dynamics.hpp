#pragma once

// Dense propagation of closed (Schroedinger) and open (Lindblad) dynamics
// under piecewise-constant controls, plus a small model library.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "dcrab/error.hpp"
#include "dcrab/linalg.hpp"
#include "dcrab/pulses.hpp"

namespace dcrab {

inline constexpr int kMaxDimension = 32;

using QuantumState = CVector;
using DensityMatrix = CMatrix;

enum class ModelKind { two_level, random_ising, decaying_qubit, custom };

inline std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::two_level: return "two_level";
        case ModelKind::random_ising: return "random_ising";
        case ModelKind::decaying_qubit: return "decaying_qubit";
        case ModelKind::custom: return "custom";
    }
    return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
    if (s == "two_level") return ModelKind::two_level;
    if (s == "random_ising") return ModelKind::random_ising;
    if (s == "decaying_qubit") return ModelKind::decaying_qubit;
    if (s == "custom") return ModelKind::custom;
    throw std::invalid_argument("unknown model kind '" + std::string(s) + "'");
}

struct ModelParams {
    double detuning = 0.0;  // two_level / decaying_qubit: H_0 = (detuning / 2) sigma_z
    int n_qubits = 2;       // random_ising
    double gamma = 0.0;     // decaying_qubit decay rate

    bool operator==(const ModelParams &) const = default;
};

struct CollapseOperator {
    CMatrix op;
    double rate = 0.0;
};

/// H(t) = H_0 + sum_k f_k(t) H_k, optionally with Lindblad collapse operators.
struct Model {
    int dim = 0;
    CMatrix drift;
    std::vector<CMatrix> controls;
    std::vector<CollapseOperator> collapse;
    std::string label;
    ModelKind kind = ModelKind::custom;
    ModelParams params;
    std::uint64_t seed = 0;

    bool is_open() const noexcept { return !collapse.empty(); }

    /// Checks shapes, Hermiticity (1e-12) and nonnegative rates.
    void validate() const {
        if (dim < 1 || dim > kMaxDimension) throw std::invalid_argument("Model: dimension out of range");
        auto square = [&](const CMatrix &m) { return m.rows() == dim && m.cols() == dim; };
        if (!square(drift)) throw std::invalid_argument("Model: drift has wrong shape");
        if (!is_hermitian(drift, 1e-12)) throw std::invalid_argument("Model: drift is not Hermitian");
        for (const auto &h : controls) {
            if (!square(h)) throw std::invalid_argument("Model: control has wrong shape");
            if (!is_hermitian(h, 1e-12)) throw std::invalid_argument("Model: control is not Hermitian");
        }
        for (const auto &c : collapse) {
            if (!square(c.op)) throw std::invalid_argument("Model: collapse operator has wrong shape");
            if (!(c.rate >= 0.0)) throw std::invalid_argument("Model: negative decay rate");
        }
    }
};

/// Model library. two_level: H_0 = (detuning/2) sigma_z, H_1 = sigma_x / 2.
/// random_ising: nearest-neighbour J sigma_z sigma_z plus local h sigma_z with
/// J, h ~ U[-1, 1], one global sigma_x control. decaying_qubit: two_level plus
/// sigma_- at rate gamma.
inline Model build_model(ModelKind kind, const ModelParams &params, std::uint64_t seed = 0) {
    Model m;
    m.kind = kind;
    m.params = params;
    m.seed = seed;
    switch (kind) {
        case ModelKind::two_level:
        case ModelKind::decaying_qubit: {
            m.dim = 2;
            m.drift = 0.5 * params.detuning * pauli::z();
            m.controls = {0.5 * pauli::x()};
            if (kind == ModelKind::decaying_qubit) {
                if (!(params.gamma >= 0.0)) throw std::invalid_argument("build_model: gamma must be >= 0");
                m.collapse.push_back({pauli::lowering(), params.gamma});
                m.label = "decaying_qubit";
            } else {
                m.label = "two_level";
            }
            break;
        }
        case ModelKind::random_ising: {
            const int n = params.n_qubits;
            if (n < 2 || n > 5) throw std::invalid_argument("build_model: random_ising supports 2 to 5 qubits");
            m.dim = 1 << n;
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            m.drift = CMatrix::Zero(m.dim, m.dim);
            for (int i = 0; i + 1 < n; ++i) {
                double j = u(rng);
                m.drift += j * embed(pauli::z(), i, n) * embed(pauli::z(), i + 1, n);
            }
            for (int i = 0; i < n; ++i) {
                double h = u(rng);
                m.drift += h * embed(pauli::z(), i, n);
            }
            CMatrix control = CMatrix::Zero(m.dim, m.dim);
            for (int i = 0; i < n; ++i) control += embed(pauli::x(), i, n);
            m.controls = {control};
            m.label = "random_ising_" + std::to_string(n);
            break;
        }
        case ModelKind::custom:
            throw std::invalid_argument("build_model: custom models are constructed directly");
    }
    m.validate();
    return m;
}

/// sqrt(<H^2> - <H>^2) of H_0 + sum_k a_k H_k in `state`.
inline double energy_spread(const Model &model, const QuantumState &state, std::span<const double> amplitudes) {
    CMatrix h = model.drift;
    for (std::size_t k = 0; k < amplitudes.size() && k < model.controls.size(); ++k) {
        h += amplitudes[k] * model.controls[k];
    }
    CVector hv = h * state;
    double mean = state.dot(hv).real();
    double mean_sq = hv.squaredNorm();
    return std::sqrt(std::max(mean_sq - mean * mean, 0.0));
}

struct PropagationOptions {
    bool want_unitary = false;
    bool store_trajectory = true;
};

struct Propagation {
    std::vector<double> times;
    std::vector<QuantumState> states;       // closed dynamics
    std::vector<DensityMatrix> densities;   // Lindblad dynamics
    std::optional<CMatrix> unitary;         // U(T), closed dynamics only

    const QuantumState &final_state() const { return states.back(); }
    const DensityMatrix &final_density() const { return densities.back(); }
};

namespace detail {

inline void check_controls(const Model &model, std::span<const Pulse> pulses) {
    if (pulses.size() != model.controls.size()) {
        throw DynamicsError("propagate: expected " + std::to_string(model.controls.size()) + " pulses, got " +
                            std::to_string(pulses.size()));
    }
    if (pulses.empty()) return;
    for (const auto &p : pulses) {
        if (!(p.grid() == pulses.front().grid())) throw DynamicsError("propagate: pulses on different grids");
        for (double v : p.values()) {
            if (!std::isfinite(v)) throw DynamicsError("propagate: non-finite pulse value");
        }
    }
}

/// Midpoint-averaged Hamiltonian on interval [t_k, t_{k+1}].
inline CMatrix interval_hamiltonian(const Model &model, std::span<const Pulse> pulses, std::size_t k) {
    CMatrix h = model.drift;
    for (std::size_t c = 0; c < pulses.size(); ++c) {
        double f = 0.5 * (pulses[c][k] + pulses[c][k + 1]);
        h += f * model.controls[c];
    }
    return h;
}

inline CMatrix lindblad_dissipator(const Model &model) {
    const int n = model.dim;
    const int n2 = n * n;
    CMatrix d = CMatrix::Zero(n2, n2);
    const CMatrix id = CMatrix::Identity(n, n);
    for (const auto &c : model.collapse) {
        if (c.rate == 0.0) continue;
        CMatrix ldl = c.op.adjoint() * c.op;
        d += c.rate * (kron(c.op.conjugate(), c.op) - 0.5 * kron(id, ldl) - 0.5 * kron(ldl.transpose(), id));
    }
    return d;
}

/// Column-stacking Liouvillian: vec(A rho B) = (B^T (x) A) vec(rho).
inline CMatrix liouvillian(const CMatrix &h, const CMatrix &dissipator) {
    const auto n = h.rows();
    const CMatrix id = CMatrix::Identity(n, n);
    return cplx(0, -1) * (kron(id, h) - kron(h.transpose(), id)) + dissipator;
}

}  // namespace detail

/// Schroedinger propagation. The control on each interval is the average of
/// its two endpoint samples; each step is exp(-i H dt) exactly.
inline Propagation propagate(const Model &model, std::span<const Pulse> pulses, const QuantumState &initial,
                             PropagationOptions options = {}) {
    if (model.is_open()) {
        throw DynamicsError("propagate: model has collapse operators, use a density-matrix initial state");
    }
    detail::check_controls(model, pulses);
    if (initial.size() != model.dim) throw DynamicsError("propagate: state dimension mismatch");
    if (pulses.empty()) throw DynamicsError("propagate: at least one pulse is needed to define the grid");
    const TimeGrid &grid = pulses.front().grid();
    const double dt = grid.dt();

    Propagation out;
    QuantumState psi = initial;
    CMatrix u;
    if (options.want_unitary) u = CMatrix::Identity(model.dim, model.dim);
    if (options.store_trajectory) {
        out.times = grid.times();
        out.states.reserve(grid.size());
        out.states.push_back(psi);
    }
    for (std::size_t k = 0; k < grid.intervals(); ++k) {
        CMatrix step = hermitian_step(detail::interval_hamiltonian(model, pulses, k), dt);
        psi = step * psi;
        if (options.want_unitary) u = step * u;
        if (options.store_trajectory) out.states.push_back(psi);
    }
    if (!options.store_trajectory) {
        out.times = {grid.duration()};
        out.states = {psi};
    }
    if (options.want_unitary) out.unitary = std::move(u);
    return out;
}

inline Propagation propagate(const Model &model, const Pulse &pulse, const QuantumState &initial,
                             PropagationOptions options = {}) {
    return propagate(model, std::span<const Pulse>(&pulse, 1), initial, options);
}

/// Lindblad propagation; each step applies exp(L dt) of the vectorized generator.
inline Propagation propagate(const Model &model, std::span<const Pulse> pulses, const DensityMatrix &initial,
                             PropagationOptions options = {}) {
    detail::check_controls(model, pulses);
    if (initial.rows() != model.dim || initial.cols() != model.dim) {
        throw DynamicsError("propagate: density matrix dimension mismatch");
    }
    if (options.want_unitary) throw DynamicsError("propagate: no unitary for Lindblad dynamics");
    if (pulses.empty()) throw DynamicsError("propagate: at least one pulse is needed to define the grid");
    const TimeGrid &grid = pulses.front().grid();
    const double dt = grid.dt();
    const CMatrix dissipator = detail::lindblad_dissipator(model);
    const int n = model.dim;

    Propagation out;
    CVector rho = Eigen::Map<const CVector>(initial.data(), n * n);
    auto unvec = [n](const CVector &v) { return DensityMatrix(Eigen::Map<const CMatrix>(v.data(), n, n)); };
    if (options.store_trajectory) {
        out.times = grid.times();
        out.densities.reserve(grid.size());
        out.densities.push_back(initial);
    }
    for (std::size_t k = 0; k < grid.intervals(); ++k) {
        CMatrix gen = detail::liouvillian(detail::interval_hamiltonian(model, pulses, k), dissipator);
        CMatrix step = (gen * cplx(dt, 0)).exp();
        rho = step * rho;
        if (options.store_trajectory) out.densities.push_back(unvec(rho));
    }
    if (!options.store_trajectory) {
        out.times = {grid.duration()};
        out.densities = {unvec(rho)};
    }
    return out;
}

inline Propagation propagate(const Model &model, const Pulse &pulse, const DensityMatrix &initial,
                             PropagationOptions options = {}) {
    return propagate(model, std::span<const Pulse>(&pulse, 1), initial, options);
}

/// k(t_j) = Im <phi_T| U(T) U^dagger(t_j) H_1 U(t_j) |xi>, so that the first
/// variation of Re<phi_T|psi(T)> is int k(t) delta f(t) dt.
inline std::vector<double> gradient_kernel(const Model &model, const Pulse &pulse, const QuantumState &initial,
                                           const QuantumState &costate) {
    if (model.is_open()) throw DynamicsError("gradient_kernel: closed dynamics only");
    if (model.controls.size() != 1) throw DynamicsError("gradient_kernel: exactly one control required");
    if (costate.size() != model.dim) throw DynamicsError("gradient_kernel: costate dimension mismatch");
    Propagation fwd = propagate(model, pulse, initial, {.want_unitary = false, .store_trajectory = true});
    const std::size_t n = pulse.size();
    // Backward state U(t_j) U(T)^dagger phi_T, built from the final time down.
    QuantumState back = costate;
    std::vector<double> k(n);
    const double dt = pulse.grid().dt();
    const Pulse *p = &pulse;
    for (std::size_t j = n; j-- > 0;) {
        cplx overlap = back.dot(model.controls[0] * fwd.states[j]);
        k[j] = overlap.imag();
        if (j > 0) {
            CMatrix step = hermitian_step(detail::interval_hamiltonian(model, std::span<const Pulse>(p, 1), j - 1), dt);
            back = step.adjoint() * back;
        }
    }
    return k;
}

// ---------------------------------------------------------------------------
// Serialization

inline void to_json(nlohmann::json &j, const Model &m) {
    j = nlohmann::json{{"kind", std::string(to_string(m.kind))},
                       {"params", {{"detuning", m.params.detuning}, {"n_qubits", m.params.n_qubits}, {"gamma", m.params.gamma}}},
                       {"seed", m.seed},
                       {"label", m.label},
                       {"dim", m.dim},
                       {"drift", matrix_to_json(m.drift)},
                       {"controls", nlohmann::json::array()},
                       {"collapse", nlohmann::json::array()}};
    for (const auto &h : m.controls) j["controls"].push_back(matrix_to_json(h));
    for (const auto &c : m.collapse) j["collapse"].push_back({{"op", matrix_to_json(c.op)}, {"rate", c.rate}});
}

inline ModelParams model_params_from_json(const nlohmann::json &j) {
    ModelParams p;
    if (j.is_null()) return p;
    p.detuning = j.value("detuning", p.detuning);
    p.n_qubits = j.value("n_qubits", p.n_qubits);
    p.gamma = j.value("gamma", p.gamma);
    return p;
}

/// Library kinds are rebuilt from kind + params + seed when no matrices are
/// given; explicit matrices always win.
inline void from_json(const nlohmann::json &j, Model &m) {
    ModelKind kind = parse_model_kind(j.at("kind").get<std::string>());
    ModelParams params = model_params_from_json(j.value("params", nlohmann::json()));
    std::uint64_t seed = j.value("seed", std::uint64_t{0});
    if (!j.contains("drift")) {
        m = build_model(kind, params, seed);
        if (j.contains("label")) m.label = j["label"].get<std::string>();
        return;
    }
    m = Model{};
    m.kind = kind;
    m.params = params;
    m.seed = seed;
    m.label = j.value("label", std::string());
    m.drift = matrix_from_json(j.at("drift"));
    m.dim = static_cast<int>(m.drift.rows());
    for (const auto &h : j.value("controls", nlohmann::json::array())) m.controls.push_back(matrix_from_json(h));
    for (const auto &c : j.value("collapse", nlohmann::json::array())) {
        m.collapse.push_back({matrix_from_json(c.at("op")), c.at("rate").get<double>()});
    }
    m.validate();
}

}  // namespace dcrab
