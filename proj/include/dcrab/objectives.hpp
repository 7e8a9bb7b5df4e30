#pragma once

// Figures of merit: state and gate fidelities, two-qubit local invariants,
// perfect-entangler and phase-gate functionals, entanglement entropy, filter
// functions and penalty composition.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dcrab/linalg.hpp"
#include "dcrab/pulses.hpp"

namespace dcrab {

// ---------------------------------------------------------------------------
// State fidelities

inline double state_fidelity(const CVector &final_state, const CVector &target) {
    if (final_state.size() != target.size()) throw std::invalid_argument("state_fidelity: dimension mismatch");
    return std::norm(target.dot(final_state));
}

/// <target| rho |target>.
inline double mixed_fidelity(const CMatrix &rho, const CVector &target) {
    if (rho.rows() != target.size() || rho.cols() != target.size()) {
        throw std::invalid_argument("mixed_fidelity: dimension mismatch");
    }
    return target.dot(rho * target).real();
}

// ---------------------------------------------------------------------------
// Gate fidelities

enum class GateMode { re, sm, ss };

inline std::string_view to_string(GateMode m) {
    switch (m) {
        case GateMode::re: return "re";
        case GateMode::sm: return "sm";
        case GateMode::ss: return "ss";
    }
    return "?";
}

/// re: Re tr(U^dag V) / N; sm: |tr(U^dag V)|^2 / N^2; ss: sum_kl |u_kl^* v_kl|^2 / N^2.
inline double gate_fidelity(const CMatrix &u, const CMatrix &v, GateMode mode) {
    if (u.rows() != v.rows() || u.cols() != v.cols() || u.rows() != u.cols()) {
        throw std::invalid_argument("gate_fidelity: dimension mismatch");
    }
    const double n = static_cast<double>(u.rows());
    switch (mode) {
        case GateMode::re: return (u.adjoint() * v).trace().real() / n;
        case GateMode::sm: return std::norm((u.adjoint() * v).trace()) / (n * n);
        case GateMode::ss: {
            double s = 0.0;
            for (Eigen::Index k = 0; k < u.rows(); ++k)
                for (Eigen::Index l = 0; l < u.cols(); ++l) s += std::norm(std::conj(u(k, l)) * v(k, l));
            return s / (n * n);
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Two-qubit local invariants

namespace gates {

inline CMatrix cnot() {
    CMatrix m = CMatrix::Zero(4, 4);
    m(0, 0) = m(1, 1) = m(2, 3) = m(3, 2) = 1;
    return m;
}

inline CMatrix cz() {
    CMatrix m = CMatrix::Identity(4, 4);
    m(3, 3) = -1;
    return m;
}

inline CMatrix swap() {
    CMatrix m = CMatrix::Zero(4, 4);
    m(0, 0) = m(1, 2) = m(2, 1) = m(3, 3) = 1;
    return m;
}

/// exp(i/2 (c1 XX + c2 YY + c3 ZZ)).
inline CMatrix canonical(double c1, double c2, double c3) {
    CMatrix g = c1 * kron(pauli::x(), pauli::x()) + c2 * kron(pauli::y(), pauli::y()) +
                c3 * kron(pauli::z(), pauli::z());
    // g is Hermitian: exp(i g / 2) = hermitian_step(g, -1/2)
    return hermitian_step(g, -0.5);
}

}  // namespace gates

/// Cartan coefficients, folded to pi/2 >= c1 >= c2 >= c3 >= 0.
struct LocalInvariants {
    double c1 = 0.0;
    double c2 = 0.0;
    double c3 = 0.0;

    std::array<double, 3> as_array() const { return {c1, c2, c3}; }
};

/// Magic (Bell) basis: local gates become real orthogonal matrices.
inline CMatrix magic_basis() {
    const double s = 1.0 / std::sqrt(2.0);
    const cplx i(0, 1);
    CMatrix q(4, 4);
    q << 1, 0, 0, i,
         0, i, 1, 0,
         0, i, -1, 0,
         1, 0, 0, -i;
    return s * q;
}

namespace detail {

inline double fold_coordinate(double c) {
    using std::numbers::pi;
    double w = c - pi * std::round(c / pi);  // (-pi/2, pi/2]
    return std::abs(w);
}

}  // namespace detail

/// Cartan coefficients from the spectrum of m = (Q^dag U Q)^T (Q^dag U Q) of the
/// SU(4)-normalized gate. Each eigenphase 2*lambda_k is known modulo 2 pi, so
/// the coefficients are known modulo pi; they are then folded by the local
/// symmetries (shifts by pi, permutations, sign flips) and the mirror
/// identification c3 -> -c3 into the chamber above.
inline LocalInvariants local_invariants(const CMatrix &u) {
    if (u.rows() != 4 || u.cols() != 4) throw std::invalid_argument("local_invariants: expected a 4x4 matrix");
    if (unitarity_defect(u) > 1e-8) throw std::invalid_argument("local_invariants: matrix is not unitary");
    const cplx det = u.determinant();
    const CMatrix us = u * std::pow(det, -0.25);
    const CMatrix q = magic_basis();
    const CMatrix ub = q.adjoint() * us * q;
    const CMatrix m = ub.transpose() * ub;
    Eigen::ComplexEigenSolver<CMatrix> es(m, false);
    if (es.info() != Eigen::Success) throw std::runtime_error("local_invariants: eigensolver failed");
    std::array<double, 4> theta{};
    for (int k = 0; k < 4; ++k) theta[k] = std::arg(es.eigenvalues()[k]);
    std::array<double, 3> c = {detail::fold_coordinate(0.5 * (theta[0] + theta[2])),
                               detail::fold_coordinate(0.5 * (theta[1] + theta[2])),
                               detail::fold_coordinate(0.5 * (theta[0] + theta[1]))};
    std::sort(c.begin(), c.end(), std::greater<>());
    return {c[0], c[1], c[2]};
}

/// prod_i cos(dc_i / 2) between the closest unitary to U and V; the polar
/// distance ||U - U~|| is subtracted when it exceeds 1e-8.
inline double nonlocal_fidelity(const CMatrix &u, const CMatrix &v) {
    if (u.rows() != 4 || u.cols() != 4) throw std::invalid_argument("nonlocal_fidelity: expected 4x4 gates");
    const CMatrix polar = closest_unitary(u);
    const double distance = (u - polar).norm();
    const LocalInvariants cu = local_invariants(polar);
    const LocalInvariants cv = local_invariants(v);
    double f = std::cos(0.5 * (cu.c1 - cv.c1)) * std::cos(0.5 * (cu.c2 - cv.c2)) * std::cos(0.5 * (cu.c3 - cv.c3));
    if (distance > 1e-8) f -= distance;
    return f;
}

inline bool is_perfect_entangler(const LocalInvariants &c) {
    using std::numbers::pi;
    return c.c1 + c.c2 >= pi / 2 && c.c1 - c.c2 <= pi / 2 && c.c2 + c.c3 <= pi / 2;
}

inline double perfect_entangler_fidelity(const LocalInvariants &c) {
    using std::numbers::pi;
    if (is_perfect_entangler(c)) return 1.0;
    auto sq = [](double x) { return x * x; };
    return std::max({sq(std::cos((c.c1 + c.c2 - pi / 2) / 4)), sq(std::cos((c.c1 - c.c2 - pi / 2) / 4)),
                     sq(std::cos((c.c2 + c.c3 - pi / 2) / 4))});
}

inline double perfect_entangler_fidelity(const CMatrix &u) { return perfect_entangler_fidelity(local_invariants(u)); }

// ---------------------------------------------------------------------------
// Phase gates

enum class PhaseMode { plain, local_phase };

namespace detail {

inline std::array<cplx, 4> diagonal_of(const CMatrix &g, const char *who) {
    if (g.rows() != 4 || g.cols() != 4) throw std::invalid_argument(std::string(who) + ": expected 4x4 gates");
    CMatrix off = g;
    off.diagonal().setZero();
    if (off.norm() > 1e-8) throw std::invalid_argument(std::string(who) + ": gate is not diagonal");
    return {g(0, 0), g(1, 1), g(2, 2), g(3, 3)};
}

}  // namespace detail

/// plain: (1/4) sum_i cos(dphi_i); local_phase: cos(dphi / 4) with
/// dphi = dphi_1 - dphi_2 - dphi_3 + dphi_4 taken in (-pi, pi].
inline double phase_gate_fidelity(const CMatrix &u, const CMatrix &v, PhaseMode mode) {
    auto du = detail::diagonal_of(u, "phase_gate_fidelity");
    auto dv = detail::diagonal_of(v, "phase_gate_fidelity");
    std::array<cplx, 4> rel{};
    for (int i = 0; i < 4; ++i) rel[i] = du[i] * std::conj(dv[i]);
    if (mode == PhaseMode::plain) {
        double s = 0.0;
        for (int i = 0; i < 4; ++i) s += std::cos(std::arg(rel[i]));
        return s / 4.0;
    }
    double dphi = std::arg(rel[0] * std::conj(rel[1]) * std::conj(rel[2]) * rel[3]);
    return std::cos(dphi / 4.0);
}

// ---------------------------------------------------------------------------
// Entanglement

/// Von Neumann entropy (nats) of the sites left of `cut`. Site 0 is the most
/// significant tensor factor.
inline double entanglement_entropy(const CVector &state, std::size_t cut, std::span<const int> local_dims) {
    if (cut < 1 || cut >= local_dims.size()) throw std::invalid_argument("entanglement_entropy: cut out of range");
    Eigen::Index left = 1, right = 1;
    for (std::size_t s = 0; s < local_dims.size(); ++s) {
        if (local_dims[s] < 1) throw std::invalid_argument("entanglement_entropy: local dimension must be >= 1");
        (s < cut ? left : right) *= local_dims[s];
    }
    if (left * right != state.size()) {
        throw std::invalid_argument("entanglement_entropy: state dimension does not factorize into local_dims");
    }
    CMatrix m(left, right);
    for (Eigen::Index a = 0; a < left; ++a)
        for (Eigen::Index b = 0; b < right; ++b) m(a, b) = state[a * right + b];
    Eigen::JacobiSVD<CMatrix> svd(m);
    double s = 0.0;
    const double norm = state.squaredNorm();
    for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) {
        double p = svd.singularValues()[k] * svd.singularValues()[k] / norm;
        if (p < 1e-14) continue;
        s -= p * std::log(p);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Filter functions

/// F(omega) = |int_0^T y(t) e^{-i omega t} dt|^2, trapezoid in t.
inline std::vector<double> filter_function(const Pulse &y, std::span<const double> omegas) {
    const TimeGrid &grid = y.grid();
    std::vector<double> out(omegas.size());
    const double dt = grid.dt();
    for (std::size_t w = 0; w < omegas.size(); ++w) {
        cplx acc = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            double weight = (k == 0 || k + 1 == grid.size()) ? 0.5 : 1.0;
            acc += weight * y[k] * std::exp(cplx(0, -omegas[w] * grid.time(k)));
        }
        out[w] = std::norm(acc * dt);
    }
    return out;
}

struct FilterSpec {
    Pulse modulation;
    std::vector<double> omega;     // rad / time, increasing
    std::vector<double> spectrum;  // S(omega) >= 0
};

/// chi(T) = int F(omega) S(omega) d omega by trapezoid over the supplied grid.
inline double filter_overlap(const FilterSpec &spec) {
    if (spec.omega.size() != spec.spectrum.size()) throw std::invalid_argument("filter_overlap: grid mismatch");
    for (std::size_t k = 0; k < spec.spectrum.size(); ++k) {
        if (!(spec.spectrum[k] >= 0.0)) throw std::invalid_argument("filter_overlap: negative spectrum");
        if (k > 0 && !(spec.omega[k] > spec.omega[k - 1])) {
            throw std::invalid_argument("filter_overlap: frequency grid must be increasing");
        }
    }
    std::vector<double> f = filter_function(spec.modulation, spec.omega);
    for (std::size_t k = 0; k < f.size(); ++k) f[k] *= spec.spectrum[k];
    return trapezoid(f, spec.omega);
}

// ---------------------------------------------------------------------------
// Objective specification and penalties

enum class ObjectiveKind {
    state_fidelity,
    mixed_fidelity,
    gate_re,
    gate_sm,
    gate_ss,
    nonlocal,
    perfect_entangler,
    phase_gate,
    entropy,
    filter_overlap
};

inline std::string_view to_string(ObjectiveKind k) {
    switch (k) {
        case ObjectiveKind::state_fidelity: return "state_fidelity";
        case ObjectiveKind::mixed_fidelity: return "mixed_fidelity";
        case ObjectiveKind::gate_re: return "gate_re";
        case ObjectiveKind::gate_sm: return "gate_sm";
        case ObjectiveKind::gate_ss: return "gate_ss";
        case ObjectiveKind::nonlocal: return "nonlocal";
        case ObjectiveKind::perfect_entangler: return "perfect_entangler";
        case ObjectiveKind::phase_gate: return "phase_gate";
        case ObjectiveKind::entropy: return "entropy";
        case ObjectiveKind::filter_overlap: return "filter_overlap";
    }
    return "?";
}

inline ObjectiveKind parse_objective_kind(std::string_view s) {
    for (auto k : {ObjectiveKind::state_fidelity, ObjectiveKind::mixed_fidelity, ObjectiveKind::gate_re,
                   ObjectiveKind::gate_sm, ObjectiveKind::gate_ss, ObjectiveKind::nonlocal,
                   ObjectiveKind::perfect_entangler, ObjectiveKind::phase_gate, ObjectiveKind::entropy,
                   ObjectiveKind::filter_overlap}) {
        if (to_string(k) == s) return k;
    }
    throw std::invalid_argument("unknown objective kind '" + std::string(s) + "'");
}

enum class PenaltyKind { height, energy };

struct Penalty {
    PenaltyKind kind = PenaltyKind::height;
    double weight = 0.0;
};

enum class ConstraintMode { none, hard_wall, rescale };

inline std::string_view to_string(ConstraintMode m) {
    switch (m) {
        case ConstraintMode::none: return "none";
        case ConstraintMode::hard_wall: return "hard_wall";
        case ConstraintMode::rescale: return "rescale";
    }
    return "?";
}

inline ConstraintMode parse_constraint_mode(std::string_view s) {
    if (s == "none") return ConstraintMode::none;
    if (s == "hard_wall") return ConstraintMode::hard_wall;
    if (s == "rescale") return ConstraintMode::rescale;
    throw std::invalid_argument("unknown constraint mode '" + std::string(s) + "'");
}

struct ConstraintSpec {
    ConstraintMode mode = ConstraintMode::none;
    double f_max = 0.0;
};

inline Pulse apply_constraint(const ConstraintSpec &c, const Pulse &p) {
    switch (c.mode) {
        case ConstraintMode::none: return p;
        case ConstraintMode::hard_wall: return clip_hard_wall(p, c.f_max);
        case ConstraintMode::rescale: return rescale_to_bound(p, c.f_max);
    }
    return p;
}

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::state_fidelity;
    CVector target_state;
    CMatrix target_gate;
    PhaseMode phase_mode = PhaseMode::local_phase;
    std::size_t cut = 1;
    std::vector<int> local_dims;
    std::vector<double> filter_omega;
    std::vector<double> filter_spectrum;
    bool maximize_overlap = true;  // filter_overlap: false minimizes chi
    std::vector<Penalty> penalties;
    ConstraintSpec constraint;

    void validate() const {
        for (const auto &p : penalties) {
            if (!(p.weight >= 0.0)) throw std::invalid_argument("ObjectiveSpec: penalty weights must be >= 0");
        }
        if (constraint.mode != ConstraintMode::none && !(constraint.f_max > 0.0)) {
            throw std::invalid_argument("ObjectiveSpec: constraint f_max must be positive");
        }
        switch (kind) {
            case ObjectiveKind::state_fidelity:
            case ObjectiveKind::mixed_fidelity:
                if (target_state.size() == 0) throw std::invalid_argument("ObjectiveSpec: target_state required");
                break;
            case ObjectiveKind::gate_re:
            case ObjectiveKind::gate_sm:
            case ObjectiveKind::gate_ss:
            case ObjectiveKind::nonlocal:
            case ObjectiveKind::phase_gate:
                if (target_gate.size() == 0) throw std::invalid_argument("ObjectiveSpec: target_gate required");
                if (!is_unitary(target_gate, 1e-10)) throw std::invalid_argument("ObjectiveSpec: target gate not unitary");
                break;
            case ObjectiveKind::entropy:
                if (local_dims.size() < 2) throw std::invalid_argument("ObjectiveSpec: local_dims required");
                break;
            case ObjectiveKind::filter_overlap:
                if (filter_omega.size() != filter_spectrum.size() || filter_omega.empty()) {
                    throw std::invalid_argument("ObjectiveSpec: filter spectrum and grid required");
                }
                break;
            case ObjectiveKind::perfect_entangler: break;
        }
    }
};

struct ObjectiveValue {
    double raw = 0.0;             // figure of merit before penalties
    double height_penalty = 0.0;  // lambda * max|f|
    double energy_penalty = 0.0;  // lambda * int f^2 dt
    double J = 0.0;
};

/// J = F - sum of penalties; penalties are summed over all control pulses.
inline ObjectiveValue compose_objective(const ObjectiveSpec &spec, double raw, std::span<const Pulse> pulses) {
    ObjectiveValue v;
    v.raw = raw;
    for (const auto &pen : spec.penalties) {
        if (!(pen.weight >= 0.0)) throw std::invalid_argument("compose_objective: negative penalty weight");
        for (const auto &p : pulses) {
            if (pen.kind == PenaltyKind::height) {
                v.height_penalty += pen.weight * p.max_abs();
            } else {
                v.energy_penalty += pen.weight * pulse_energy(p);
            }
        }
    }
    v.J = raw - v.height_penalty - v.energy_penalty;
    return v;
}

inline void to_json(nlohmann::json &j, const ObjectiveSpec &s) {
    j = nlohmann::json{{"kind", std::string(to_string(s.kind))}};
    if (s.target_state.size() > 0) j["target_state"] = vector_to_json(s.target_state);
    if (s.target_gate.size() > 0) j["target_gate"] = matrix_to_json(s.target_gate);
    if (s.kind == ObjectiveKind::phase_gate) {
        j["phase_mode"] = s.phase_mode == PhaseMode::plain ? "plain" : "local_phase";
    }
    if (s.kind == ObjectiveKind::entropy) {
        j["cut"] = s.cut;
        j["local_dims"] = s.local_dims;
    }
    if (s.kind == ObjectiveKind::filter_overlap) {
        j["filter"] = {{"omega", s.filter_omega}, {"spectrum", s.filter_spectrum},
                       {"sense", s.maximize_overlap ? "max" : "min"}};
    }
    j["penalties"] = nlohmann::json::array();
    for (const auto &p : s.penalties) {
        j["penalties"].push_back({{"kind", p.kind == PenaltyKind::height ? "height" : "energy"}, {"weight", p.weight}});
    }
    j["constraint"] = {{"mode", std::string(to_string(s.constraint.mode))}, {"f_max", s.constraint.f_max}};
}

inline void from_json(const nlohmann::json &j, ObjectiveSpec &s) {
    s = ObjectiveSpec{};
    s.kind = parse_objective_kind(j.at("kind").get<std::string>());
    if (j.contains("target_state")) s.target_state = vector_from_json(j["target_state"]);
    if (j.contains("target_gate")) s.target_gate = matrix_from_json(j["target_gate"]);
    if (j.contains("phase_mode")) {
        auto m = j["phase_mode"].get<std::string>();
        if (m == "plain") {
            s.phase_mode = PhaseMode::plain;
        } else if (m == "local_phase") {
            s.phase_mode = PhaseMode::local_phase;
        } else {
            throw std::invalid_argument("unknown phase_mode '" + m + "'");
        }
    }
    s.cut = j.value("cut", std::size_t{1});
    if (j.contains("local_dims")) s.local_dims = j["local_dims"].get<std::vector<int>>();
    if (j.contains("filter")) {
        const auto &f = j["filter"];
        s.filter_omega = f.at("omega").get<std::vector<double>>();
        s.filter_spectrum = f.at("spectrum").get<std::vector<double>>();
        s.maximize_overlap = f.value("sense", std::string("max")) != "min";
    }
    for (const auto &p : j.value("penalties", nlohmann::json::array())) {
        auto kind = p.at("kind").get<std::string>();
        if (kind != "height" && kind != "energy") throw std::invalid_argument("unknown penalty kind '" + kind + "'");
        s.penalties.push_back({kind == "height" ? PenaltyKind::height : PenaltyKind::energy, p.at("weight").get<double>()});
    }
    if (j.contains("constraint")) {
        const auto &c = j["constraint"];
        s.constraint.mode = parse_constraint_mode(c.value("mode", std::string("none")));
        s.constraint.f_max = c.value("f_max", 0.0);
    }
    s.validate();
}

}  // namespace dcrab
