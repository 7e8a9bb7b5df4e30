#pragma once

// Speed limits, channel capacities and the information-theoretic bounds on
// control error and duration, plus statistics over ensembles of runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dcrab/linalg.hpp"
#include "dcrab/nelder_mead.hpp"
#include "dcrab/pulses.hpp"

namespace dcrab {

/// Bhattacharyya bound: arccos|<target|initial>| / dE.
inline double qsl_bhattacharyya(double energy_spread, const CVector &initial, const CVector &target) {
    if (!(energy_spread > 0.0)) throw std::invalid_argument("qsl_bhattacharyya: energy spread must be positive");
    if (initial.size() != target.size()) throw std::invalid_argument("qsl_bhattacharyya: dimension mismatch");
    if (std::abs(initial.norm() - 1.0) > 1e-10 || std::abs(target.norm() - 1.0) > 1e-10) {
        throw std::invalid_argument("qsl_bhattacharyya: states must be normalized");
    }
    double overlap = std::min(1.0, std::abs(target.dot(initial)));
    return std::acos(overlap) / energy_spread;
}

inline double qsl_gap(double gap) {
    if (!(gap > 0.0)) throw std::invalid_argument("qsl_gap: gap must be positive");
    return M_PI / gap;
}

enum class CapacityMode { hartley, gaussian, colored };

inline std::string_view to_string(CapacityMode m) {
    switch (m) {
        case CapacityMode::hartley: return "hartley";
        case CapacityMode::gaussian: return "gaussian";
        case CapacityMode::colored: return "colored";
    }
    return "?";
}

inline CapacityMode parse_capacity_mode(std::string_view s) {
    if (s == "hartley") return CapacityMode::hartley;
    if (s == "gaussian") return CapacityMode::gaussian;
    if (s == "colored") return CapacityMode::colored;
    throw std::invalid_argument("unknown capacity mode '" + std::string(s) + "'");
}

/// Amplitude-resolution channel: bandwidth * log2(1 + f_max / df).
inline double capacity_hartley(double bandwidth, double amplitude_ratio) {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("capacity: bandwidth must be positive");
    if (!(amplitude_ratio >= 0.0)) throw std::invalid_argument("capacity: amplitude ratio must be >= 0");
    return bandwidth * std::log2(1.0 + amplitude_ratio);
}

/// White Gaussian noise: bandwidth * log2(1 + P_f / P_n).
inline double capacity_gaussian(double bandwidth, double signal_power, double noise_power) {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("capacity: bandwidth must be positive");
    if (!(signal_power >= 0.0)) throw std::invalid_argument("capacity: signal power must be >= 0");
    if (!(noise_power >= 0.0)) throw std::invalid_argument("capacity: noise power must be >= 0");
    if (signal_power == 0.0) return 0.0;
    if (noise_power == 0.0) throw std::invalid_argument("capacity: zero noise power gives infinite capacity");
    return bandwidth * std::log2(1.0 + signal_power / noise_power);
}

/// Colored noise: trapezoid integral of log2(1 + S(w)/N(w)) over the sampled band.
inline double capacity_colored(std::span<const double> omega, std::span<const double> signal,
                               std::span<const double> noise) {
    if (omega.size() != signal.size() || omega.size() != noise.size() || omega.size() < 2) {
        throw std::invalid_argument("capacity: spectra need matching grids with at least two points");
    }
    for (std::size_t i = 1; i < omega.size(); ++i) {
        if (!(omega[i] > omega[i - 1])) throw std::invalid_argument("capacity: frequency grid must increase");
    }
    std::vector<double> integrand(omega.size());
    for (std::size_t i = 0; i < omega.size(); ++i) {
        if (!(signal[i] >= 0.0) || !(noise[i] >= 0.0)) throw std::invalid_argument("capacity: spectra must be >= 0");
        if (signal[i] == 0.0) {
            integrand[i] = 0.0;
        } else if (noise[i] == 0.0) {
            throw std::invalid_argument("capacity: noise vanishes where the signal does not (infinite capacity)");
        } else {
            integrand[i] = std::log2(1.0 + signal[i] / noise[i]);
        }
    }
    return trapezoid(integrand, omega);
}

/// Minimal control error when I_f bits are spread over D_r reachable directions.
inline double error_bound(double information_bits, double reachable_dimension) {
    if (!(reachable_dimension >= 1.0)) throw std::invalid_argument("error_bound: D_r must be >= 1");
    if (!(information_bits >= 0.0)) throw std::invalid_argument("error_bound: I_f must be >= 0");
    return std::exp2(-information_bits / reachable_dimension);
}

/// Minimal duration to reach error `epsilon` through a channel of capacity C.
inline double time_bound(double reachable_dimension, double capacity, double epsilon) {
    if (!(reachable_dimension >= 1.0)) throw std::invalid_argument("time_bound: D_r must be >= 1");
    if (!(capacity > 0.0)) throw std::invalid_argument("time_bound: capacity must be positive");
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("time_bound: epsilon must lie in (0, 1]");
    return -(reachable_dimension / capacity) * std::log2(epsilon);
}

/// Reachable-set dimension of a pure-state transfer in Hilbert dimension N.
inline int reachable_dimension_state_transfer(int hilbert_dimension) {
    if (hilbert_dimension < 2) throw std::invalid_argument("reachable_dimension: dimension must be >= 2");
    return 2 * hilbert_dimension - 2;
}

struct ErrorScalingFit {
    double amplitude = 0.0;
    double b1 = 0.0;  // decay rate per unit bandwidth
    double b2 = 0.0;  // error floor
    double residual = 0.0;  // RMS
    bool non_decaying = false;  // b1 <= 0: error does not fall with bandwidth
};

/// Least-squares fit of eps = amplitude * exp(-b1 * dW) + b2 with amplitude >= 0.
inline ErrorScalingFit fit_error_scaling(std::span<const std::pair<double, double>> samples) {
    if (samples.size() < 3) throw std::invalid_argument("fit_error_scaling: at least three samples required");
    double lo = samples[0].first, hi = samples[0].first;
    for (const auto &[w, e] : samples) {
        if (!std::isfinite(w)) throw std::invalid_argument("fit_error_scaling: non-finite bandwidth");
        if (!(e > 0.0 && e <= 1.0)) throw std::invalid_argument("fit_error_scaling: errors must lie in (0, 1]");
        lo = std::min(lo, w);
        hi = std::max(hi, w);
    }
    if (!(hi > lo)) throw std::invalid_argument("fit_error_scaling: degenerate samples (all bandwidths equal)");
    const double n = static_cast<double>(samples.size());

    // For a fixed rate the model is linear in amplitude and floor, so only
    // the rate needs searching.
    auto solve = [&](double b1) {
        double mu = 0.0, me = 0.0;
        for (const auto &[w, e] : samples) {
            mu += std::exp(-b1 * w);
            me += e;
        }
        mu /= n;
        me /= n;
        double cov = 0.0, var = 0.0;
        for (const auto &[w, e] : samples) {
            const double du = std::exp(-b1 * w) - mu;
            cov += du * (e - me);
            var += du * du;
        }
        ErrorScalingFit f;
        f.b1 = b1;
        f.amplitude = var > 1e-300 ? std::max(cov / var, 0.0) : 0.0;
        f.b2 = me - f.amplitude * mu;
        double ss = 0.0;
        for (const auto &[w, e] : samples) {
            const double r = f.amplitude * std::exp(-b1 * w) + f.b2 - e;
            ss += r * r;
        }
        f.residual = std::sqrt(ss / n);
        return f;
    };
    auto cost = [&](std::span<const double> x) { return -solve(x[0]).residual; };

    // Coarse scan over four decades of rate either side of zero, then refine.
    const double scale = 1.0 / (hi - lo);
    const double reach = std::max(std::abs(lo), std::abs(hi));
    std::vector<double> rates;
    for (int k = 0; k <= 40; ++k) {
        const double r = scale * std::pow(10.0, -2.0 + 0.1 * k);
        if (r * reach < 50.0) {
            rates.push_back(r);
            rates.push_back(-r);
        }
    }
    std::vector<double> best{rates.front()};
    for (double b1 : rates) {
        if (solve(b1).residual < solve(best[0]).residual) best[0] = b1;
    }
    for (int restart = 0; restart < 3; ++restart) {
        const double step[1] = {0.2 * std::max(std::abs(best[0]), 0.01 * scale)};
        NelderMeadResult r = nelder_mead(cost, best, step, {.tolerance = 1e-18, .max_evaluations = 400, .stop_value = std::nullopt});
        if (r.value >= cost(best) && std::abs(r.x[0]) * reach < 50.0) best = r.x;
    }
    ErrorScalingFit fit = solve(best[0]);
    fit.non_decaying = fit.b1 <= 0.0 || fit.amplitude == 0.0;
    return fit;
}

struct EnsembleStats {
    std::size_t runs = 0;
    std::size_t successes = 0;
    double success_probability = 0.0;
    double median_error = 0.0;
    double max_error = 0.0;
    double mean_evaluations = 0.0;
};

/// Summary of an ensemble of final errors against a success threshold.
inline EnsembleStats ensemble_statistics(std::span<const double> errors, double threshold,
                                         std::span<const std::size_t> evaluations = {}) {
    if (errors.empty()) throw std::invalid_argument("ensemble_statistics: no runs");
    EnsembleStats s;
    s.runs = errors.size();
    std::vector<double> sorted(errors.begin(), errors.end());
    std::sort(sorted.begin(), sorted.end());
    for (double e : errors) s.successes += e < threshold ? 1 : 0;
    s.success_probability = static_cast<double>(s.successes) / static_cast<double>(s.runs);
    const std::size_t m = sorted.size();
    s.median_error = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    s.max_error = sorted.back();
    if (!evaluations.empty()) {
        double total = 0.0;
        for (auto n : evaluations) total += static_cast<double>(n);
        s.mean_evaluations = total / static_cast<double>(evaluations.size());
    }
    return s;
}

}  // namespace dcrab
